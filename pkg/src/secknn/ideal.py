"""Trusted-party versions of the selection, oblivious-read and distance steps.

Each function receives both parties' inputs and returns one output per
party; every output is masked with fresh randomness so neither party's view
depends on the other's data. Approximate selection does not shuffle: the
caller must hand in an already permuted order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import squared_distances
from .selection import approx_topk, naive_topk
from .sharing import reconstruct_arith, reconstruct_xor, share_arith, uniform


@dataclass
class TopkRequest:
    a_c: np.ndarray
    a_s: np.ndarray
    idlist_c: np.ndarray
    idlist_s: np.ndarray
    r: int
    k: int
    t: int
    b_pid: int
    return_val: bool = False
    # width of the untruncated values; the padding sentinel is 2^(value_bits - r) - 1
    value_bits: int | None = None
    # optional XOR-shared 0/1 flags; entries with flag 0 act as the sentinel
    valid_c: np.ndarray | None = None
    valid_s: np.ndarray | None = None

    def __post_init__(self) -> None:
        arrays = [self.a_c, self.a_s, self.idlist_c, self.idlist_s]
        if self.valid_c is not None or self.valid_s is not None:
            arrays += [self.valid_c, self.valid_s]
        n = len(self.a_c)
        if any(a is None or len(a) != n for a in arrays):
            raise ValueError("all request arrays must have the same length")
        if self.k < 1:
            raise ValueError("k must be positive")


@dataclass
class TopkOutput:
    ids: np.ndarray
    values: np.ndarray | None = field(default=None)


def _prepare(req: TopkRequest):
    width = req.t.bit_length() - 1
    bits = width if req.value_bits is None else req.value_bits
    sentinel = (1 << max(bits - req.r, 0)) - 1
    a = reconstruct_arith(req.a_c, req.a_s, req.t) >> req.r
    ids = reconstruct_xor(req.idlist_c, req.idlist_s)
    if req.valid_c is not None:
        valid = reconstruct_xor(req.valid_c, req.valid_s).astype(bool)
        a = np.where(valid, a, sentinel)
    return a, ids, sentinel


def _outputs(req: TopkRequest, vals, ids, rng):
    w = uniform(rng, len(ids), req.b_pid)
    client, server = TopkOutput(ids ^ w), TopkOutput(w)
    if req.return_val:
        s = uniform(rng, len(vals), req.t.bit_length() - 1)
        client.values = (vals - s) & (req.t - 1)
        server.values = s
    return client, server


def f_topk(req: TopkRequest, rng: np.random.Generator):
    """Exact selection over the reconstructed, truncated values."""
    a, ids, sentinel = _prepare(req)
    vals, out = naive_topk(a, ids, req.k, sentinel)
    return _outputs(req, vals, out, rng)


def f_atopk(req: TopkRequest, l: int, rng: np.random.Generator):
    """Bin-min selection with ``l`` bins over the order given."""
    n = len(req.a_c)
    if not req.k <= l <= n:
        raise ValueError(f"approximate selection needs k <= l <= n (k={req.k}, l={l}, n={n})")
    a, ids, sentinel = _prepare(req)
    vals, out = approx_topk(a, ids, req.k, l, sentinel)
    return _outputs(req, vals, out, rng)


class DromFunctionality:
    """Ideal read-only oblivious memory over ``n`` byte blocks."""

    def __init__(self, blocks) -> None:
        self.blocks = np.array(blocks, dtype=np.uint8)
        if self.blocks.ndim != 2:
            raise ValueError("blocks must form an (n, bytes) array")
        self.blocks.setflags(write=False)

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    def read(self, i_c: int, i_s: int, rng: np.random.Generator):
        """XOR shares ``(DB[i] ^ R, R)`` of the block at ``(i_c + i_s) mod n``."""
        i = (int(i_c) + int(i_s)) % self.n
        R = rng.integers(0, 256, size=self.blocks.shape[1], dtype=np.uint8)
        return self.blocks[i] ^ R, R


def f_dist(q, points, t: int, rng: np.random.Generator):
    """Additive shares of the squared distances from ``q`` to every point."""
    dist = squared_distances(q, np.asarray(points, dtype=np.int64)) & (t - 1)
    return share_arith(dist, t, rng)


def f_dist_shared(q, p_c, p_s, norm_c, norm_s, t: int, rng: np.random.Generator):
    """Same, for points and squared norms that are themselves additively shared."""
    mask = t - 1
    q = np.asarray(q, dtype=np.int64)
    p = reconstruct_arith(p_c, p_s, t)
    norms = reconstruct_arith(norm_c, norm_s, t)
    # distance = |q|^2 - 2<q,p> + |p|^2; computed mod t so wrapped shares are fine
    dist = (int(q @ q) - 2 * (p @ q) + norms) & mask
    return share_arith(dist, t, rng)

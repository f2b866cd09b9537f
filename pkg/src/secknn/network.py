"""Comparator-network model of exact and bin-min top-k selection.

A network is described implicitly by its parameters; :func:`evaluate` walks
the comparator schedule in the same fixed order a garbled circuit would,
independently of the data, and counts every comparator it fires.

AND-gate accounting convention: one comparator is a ``w``-bit less-than plus
two ``w``-bit multiplexers (value and id), charged ``3w`` AND gates under
free-XOR. This is a bookkeeping rule for reports, not a security statement.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .selection import bin_bounds

AND_PER_BIT = 3
CSV_FIELDS = ("kind", "n", "k", "l", "w", "comparators", "and_gates")


@dataclass(frozen=True)
class SelectionNetwork:
    kind: str
    n: int
    k: int
    l: int | None
    w: int
    comparators: int
    and_gates: int

    def row(self) -> dict:
        return {f: ("" if getattr(self, f) is None else getattr(self, f)) for f in CSV_FIELDS}


def comparator_cost(w: int) -> int:
    return AND_PER_BIT * w


def count_comparators(kind: str, n: int, k: int, l: int | None = None) -> int:
    if kind == "naive":
        return n * k
    sizes = np.diff(bin_bounds(n, l))
    return int((sizes - 1).sum()) + l * k


def build_network(kind: str, n: int, k: int, l: int | None = None, w: int = 32) -> SelectionNetwork:
    if kind not in ("naive", "approx"):
        raise ValueError(f"unknown network kind {kind!r}")
    if n < 1 or k < 1 or w < 1:
        raise ValueError("n, k and w must be positive")
    if w > 62:
        raise ValueError("widths above 62 bits are not supported")
    if kind == "approx":
        if l is None or not k <= l <= n:
            raise ValueError(f"approx network needs k <= l <= n (k={k}, l={l}, n={n})")
    else:
        l = None
    comps = count_comparators(kind, n, k, l)
    # closed forms, checked against the per-bin sum
    expected = n * k if kind == "naive" else (n - l) + l * k
    assert comps == expected, (comps, expected)
    return SelectionNetwork(kind, n, k, l, w, comps, comps * comparator_cost(w))


def truncate_shares_model(value: int, r: int) -> int:
    """Value left after dropping ``r`` low-order bits."""
    if r < 0:
        raise ValueError("r must be non-negative")
    if value < 0:
        raise ValueError("value must be non-negative")
    return int(value) >> r


# --------------------------------------------------------------------------
# evaluation


class _Counter:
    def __init__(self) -> None:
        self.fired = 0


def _compare_swap(ctr: _Counter, x, xi, slot, slot_i):
    """One comparator on a batch: if x < slot, the pair trades places."""
    ctr.fired += 1
    b = (x < slot).astype(np.int64)
    dv = (x - slot) * b
    di = (xi - slot_i) * b
    return slot + dv, slot_i + di, x - dv, xi - di


def _sweep(ctr, vals, ids, k, maxval):
    B, n = vals.shape
    # empty slots sit one above maxval; their state is public, so this
    # needs no extra wire in a real circuit
    opt = [np.full(B, maxval + 1, dtype=np.int64) for _ in range(k)]
    idl = [np.zeros(B, dtype=np.int64) for _ in range(k)]
    for i in range(n):
        x, xi = vals[:, i], ids[:, i]
        for j in range(k):
            opt[j], idl[j], x, xi = _compare_swap(ctr, x, xi, opt[j], idl[j])
    return np.minimum(np.stack(opt, axis=1), maxval), np.stack(idl, axis=1)


def _bin_mins(ctr, vals, ids, l):
    """Running minimum inside each bin; all bins advance one position per step."""
    B, n = vals.shape
    bounds = bin_bounds(n, l)
    starts, sizes = bounds[:-1], np.diff(bounds)
    cur, cur_i = vals[:, starts].copy(), ids[:, starts].copy()
    for off in range(1, int(sizes.max())):
        live = np.flatnonzero(sizes > off)
        pos = starts[live] + off
        xv, xi = vals[:, pos], ids[:, pos]
        ctr.fired += live.size - 1  # batched below as one call
        cur[:, live], cur_i[:, live], _, _ = _compare_swap(ctr, xv, xi, cur[:, live], cur_i[:, live])
    return cur, cur_i


def evaluate(net: SelectionNetwork, values, ids) -> tuple[np.ndarray, np.ndarray]:
    """Run the network on one input (1-D) or a batch of inputs (2-D, rows)."""
    vals = np.asarray(values, dtype=np.int64)
    idv = np.asarray(ids, dtype=np.int64)
    single = vals.ndim == 1
    vals, idv = np.atleast_2d(vals), np.atleast_2d(idv)
    if vals.shape != idv.shape or vals.shape[1] != net.n:
        raise ValueError(f"expected {net.n} values and ids per instance")
    maxval = (1 << net.w) - 1
    if vals.size and (vals.min() < 0 or vals.max() > maxval):
        raise ValueError(f"input value does not fit in {net.w} bits")
    ctr = _Counter()
    if net.kind == "approx":
        vals, idv = _bin_mins(ctr, vals, idv, net.l)
    out_v, out_i = _sweep(ctr, vals, idv, net.k, maxval)
    assert ctr.fired == net.comparators, (ctr.fired, net.comparators)
    if single:
        return out_v[0], out_i[0]
    return out_v, out_i


def cost_rows(networks) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for net in networks:
        writer.writerow(net.row())
    return buf.getvalue()

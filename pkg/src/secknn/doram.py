"""Read-only distributed ORAM: a PRF-masked replicated database read through
tree-based distributed point functions.

Both parties hold ``masked[i] = DB[i] ^ PRF_kA(i) ^ PRF_kB(i)``. To read index
``i``, each party expands its DPF key over the whole domain into a bit vector
``u``; the two vectors differ exactly at ``i``, so the XOR of the selected
blocks on both sides equals ``masked[i]``. The remaining PRF pad at ``i`` is
removed by the dealer, which hands out a fresh sharing of it.

Key generation follows the level-by-level pattern in which the parties expand
their own trees and the dealer, knowing the programmed index, only supplies
correction words computed from per-level XOR aggregates. That costs one round
trip per tree level, shared by any number of simultaneous reads.
"""

from __future__ import annotations

import hashlib
import math
import struct
import threading
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .transport import Channel, pipe

MAX_DEPTH = 30
SEED_BYTES = 16

# --------------------------------------------------------------------------
# PRFs for the mask


class AesCounterPrf:
    """PRF_k(i): AES-128_k over the blocks (i, 0), (i, 1), ... truncated."""

    tag = "aes-ctr"

    def __init__(self, key: bytes) -> None:
        if len(key) != 16:
            raise ValueError("PRF keys are 128-bit")
        self.key = bytes(key)

    def blocks(self, indices, nbytes: int) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.uint64).ravel()
        per = max(1, math.ceil(nbytes / 16))
        counters = np.zeros((idx.size, per, 2), dtype="<u8")
        counters[:, :, 0] = idx[:, None]
        counters[:, :, 1] = np.arange(per, dtype=np.uint64)[None, :]
        enc = Cipher(algorithms.AES(self.key), modes.ECB()).encryptor()
        out = enc.update(counters.tobytes()) + enc.finalize()
        return np.frombuffer(out, dtype=np.uint8).reshape(idx.size, per * 16)[:, :nbytes].copy()


class ShakePrf:
    """PRF_k(i) = SHAKE-128(k || i), an alternative keyed function."""

    tag = "shake128"

    def __init__(self, key: bytes) -> None:
        if len(key) != 16:
            raise ValueError("PRF keys are 128-bit")
        self.key = bytes(key)

    def blocks(self, indices, nbytes: int) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.uint64).ravel()
        out = np.empty((idx.size, nbytes), dtype=np.uint8)
        for row, i in enumerate(idx.tolist()):
            out[row] = np.frombuffer(hashlib.shake_128(self.key + struct.pack("<Q", i)).digest(nbytes), np.uint8)
        return out


PRFS = {AesCounterPrf.tag: AesCounterPrf, ShakePrf.tag: ShakePrf}


def make_prf(tag: str, key: bytes):
    try:
        return PRFS[tag](key)
    except KeyError:
        raise ValueError(f"unknown PRF {tag!r}; available: {sorted(PRFS)}") from None


def new_key(rng: np.random.Generator) -> bytes:
    return rng.integers(0, 256, 16, dtype=np.uint8).tobytes()


# --------------------------------------------------------------------------
# masked database


@dataclass(frozen=True)
class MaskedDb:
    data: np.ndarray  # (n, block_bytes) uint8
    prf: str = AesCounterPrf.tag

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("a masked database needs at least one block")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def block_bytes(self) -> int:
        return self.data.shape[1]

    @property
    def depth(self) -> int:
        return max(0, (self.n - 1).bit_length())

    def to_bytes(self) -> bytes:
        tag = self.prf.encode()
        return struct.pack("<IIB", self.n, 8 * self.block_bytes, len(tag)) + tag + self.data.tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "MaskedDb":
        n, bits, tlen = struct.unpack_from("<IIB", raw, 0)
        if bits % 8:
            raise ValueError("block size must be a whole number of bytes")
        pos = 9 + tlen
        tag = raw[9:pos].decode()
        body = np.frombuffer(raw, dtype=np.uint8, offset=pos)
        if body.size != n * bits // 8:
            raise ValueError("masked database payload has the wrong size")
        return cls(body.reshape(n, bits // 8), tag)


def prf_pad(tag: str, key: bytes, n: int, nbytes: int) -> np.ndarray:
    return make_prf(tag, key).blocks(np.arange(n), nbytes)


def doram_init(db, key_a: bytes, key_b: bytes, prf: str = AesCounterPrf.tag) -> MaskedDb:
    """Masked copy both parties end up holding."""
    db = np.asarray(db, dtype=np.uint8)
    n, nbytes = db.shape
    return MaskedDb(db ^ prf_pad(prf, key_a, n, nbytes) ^ prf_pad(prf, key_b, n, nbytes), prf)


def unmask_pad(tag: str, key_a: bytes, key_b: bytes, indices, nbytes: int) -> np.ndarray:
    return make_prf(tag, key_a).blocks(indices, nbytes) ^ make_prf(tag, key_b).blocks(indices, nbytes)


# --------------------------------------------------------------------------
# DPF


_PRG_KEYS = (bytes(range(16)), bytes(range(16, 32)))
_PRG = tuple(Cipher(algorithms.AES(k), modes.ECB()) for k in _PRG_KEYS)


def prg(seeds: np.ndarray):
    """Length-doubling PRG on 128-bit seeds, ``(count, 16)`` uint8.

    Returns left and right child seeds plus their control bits. Each half is
    a fixed-key AES in Matyas-Meyer-Oseas mode; the control bit is the low
    bit of the first byte, which is then cleared.
    """
    raw = np.ascontiguousarray(seeds, dtype=np.uint8).tobytes()
    halves = []
    for cipher in _PRG:
        enc = cipher.encryptor()
        out = np.frombuffer(enc.update(raw) + enc.finalize(), dtype=np.uint8).reshape(-1, SEED_BYTES)
        out = out ^ seeds
        t = out[:, 0] & 1
        out[:, 0] &= 0xFE
        halves.append((out, t))
    (sl, tl), (sr, tr) = halves
    return sl, tl, sr, tr


@dataclass(frozen=True)
class DpfKey:
    party: int  # 0 or 1; fixes the root control bit
    root: bytes
    cw_seed: np.ndarray  # (depth, 16)
    cw_t: np.ndarray  # (depth, 2) left/right control corrections

    @property
    def depth(self) -> int:
        return self.cw_seed.shape[0]


@dataclass(frozen=True)
class DpfKeyPair:
    a: DpfKey
    b: DpfKey
    index: int  # dealer-side record, never sent to a party


def correction_word(aggs_a, aggs_b, bit: int):
    """Correction for one level from both parties' child aggregates.

    An aggregate is the XOR of all left (right) child seeds and the parity of
    their control bits. Off-path nodes carry equal state on both sides and
    cancel, so the XOR of the two aggregates is the on-path difference.
    """
    sl_a, sr_a, tl_a, tr_a = aggs_a
    sl_b, sr_b, tl_b, tr_b = aggs_b
    lose = (sr_a ^ sr_b) if bit == 0 else (sl_a ^ sl_b)
    t_l = int(tl_a ^ tl_b) ^ bit ^ 1
    t_r = int(tr_a ^ tr_b) ^ bit
    return lose, np.array([t_l, t_r], dtype=np.uint8)


class TreeExpander:
    """One party's level-order expansion of several DPF trees at once."""

    def __init__(self, party: int, roots: np.ndarray, depth: int) -> None:
        if depth > MAX_DEPTH:
            raise ValueError(f"domain depth {depth} exceeds {MAX_DEPTH}")
        self.party = party
        self.depth = depth
        self.level = 0
        self.count = roots.shape[0]
        self.seeds = roots.reshape(self.count, 1, SEED_BYTES).copy()
        self.t = np.full((self.count, 1), party, dtype=np.uint8)
        self._children = None

    def expand(self):
        """Children of the current frontier and this party's aggregates."""
        width = self.seeds.shape[1]
        sl, tl, sr, tr = prg(self.seeds.reshape(-1, SEED_BYTES))
        shape = (self.count, width)
        sl, sr = sl.reshape(*shape, SEED_BYTES), sr.reshape(*shape, SEED_BYTES)
        tl, tr = tl.reshape(shape), tr.reshape(shape)
        self._children = (sl, tl, sr, tr)
        agg = (
            np.bitwise_xor.reduce(sl, axis=1),
            np.bitwise_xor.reduce(sr, axis=1),
            np.bitwise_xor.reduce(tl, axis=1),
            np.bitwise_xor.reduce(tr, axis=1),
        )
        return agg

    def apply(self, cw_seed: np.ndarray, cw_t: np.ndarray) -> None:
        """Finish the level with the corrections (``(count,16)``, ``(count,2)``)."""
        sl, tl, sr, tr = self._children
        on = self.t.astype(bool)[:, :, None]
        cs = cw_seed[:, None, :]
        sl = np.where(on, sl ^ cs, sl)
        sr = np.where(on, sr ^ cs, sr)
        tl = tl ^ (self.t & cw_t[:, None, 0])
        tr = tr ^ (self.t & cw_t[:, None, 1])
        width = self.seeds.shape[1]
        self.seeds = np.stack((sl, sr), axis=2).reshape(self.count, 2 * width, SEED_BYTES)
        self.t = np.stack((tl, tr), axis=2).reshape(self.count, 2 * width)
        self.level += 1
        self._children = None

    def leaves(self) -> np.ndarray:
        if self.level != self.depth:
            raise RuntimeError("tree not fully expanded")
        return self.t


def index_bit(i: int, level: int, depth: int) -> int:
    return (i >> (depth - 1 - level)) & 1


def dpf_gen(i: int, depth: int, rng: np.random.Generator) -> DpfKeyPair:
    """Dealer-side generation of a key pair for the point ``i``."""
    if not 0 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [0, {MAX_DEPTH}]")
    if not 0 <= i < 1 << depth:
        raise ValueError(f"index {i} outside a domain of depth {depth}")
    roots = rng.integers(0, 256, (2, SEED_BYTES), dtype=np.uint8)
    # only the on-path node matters for the corrections; track it alone
    path = [(roots[p].copy(), p) for p in (0, 1)]
    cw_seed = np.zeros((depth, SEED_BYTES), dtype=np.uint8)
    cw_t = np.zeros((depth, 2), dtype=np.uint8)
    for level in range(depth):
        kids = []
        for seed, _t in path:
            sl, tl, sr, tr = prg(seed[None, :])
            kids.append((sl[0], sr[0], int(tl[0]), int(tr[0])))
        bit = index_bit(i, level, depth)
        cw_seed[level], cw_t[level] = correction_word(kids[0], kids[1], bit)
        new_path = []
        for (sl, sr, tl, tr), (_, t) in zip(kids, path):
            s_keep, t_keep = (sl, tl) if bit == 0 else (sr, tr)
            if t:
                s_keep = s_keep ^ cw_seed[level]
                t_keep ^= int(cw_t[level][bit])
            new_path.append((s_keep, t_keep))
        path = new_path
    keys = [DpfKey(p, roots[p].tobytes(), cw_seed.copy(), cw_t.copy()) for p in (0, 1)]
    return DpfKeyPair(keys[0], keys[1], i)


def dpf_gen_from_aggregates(i: int, depth: int, roots: np.ndarray) -> DpfKeyPair:
    """Key pair for ``i`` from full-frontier aggregates, the way the
    interactive generation computes it; ``roots`` is ``(2, 16)``."""
    trees = [TreeExpander(p, roots[p : p + 1], depth) for p in (0, 1)]
    cw_seed = np.zeros((depth, SEED_BYTES), dtype=np.uint8)
    cw_t = np.zeros((depth, 2), dtype=np.uint8)
    for level in range(depth):
        aggs = [tuple(a[0] for a in tree.expand()) for tree in trees]
        cw_seed[level], cw_t[level] = correction_word(aggs[0], aggs[1], index_bit(i, level, depth))
        for tree in trees:
            tree.apply(cw_seed[level : level + 1], cw_t[level : level + 1])
    keys = [DpfKey(p, roots[p].tobytes(), cw_seed.copy(), cw_t.copy()) for p in (0, 1)]
    return DpfKeyPair(keys[0], keys[1], i)


def dpf_eval_full(key: DpfKey) -> np.ndarray:
    """Control bit of every leaf, ``2^depth`` entries of 0/1."""
    root = np.frombuffer(key.root, dtype=np.uint8).reshape(1, SEED_BYTES)
    tree = TreeExpander(key.party, root, key.depth)
    for level in range(key.depth):
        tree.expand()
        tree.apply(key.cw_seed[level : level + 1], key.cw_t[level : level + 1])
    return tree.leaves()[0]


def select_xor(masked: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """XOR of the blocks whose bit is set; ``bits`` is ``(reads, >= n)``."""
    bits = np.atleast_2d(bits)[:, : masked.shape[0]].astype(bool)
    out = np.zeros((bits.shape[0], masked.shape[1]), dtype=np.uint8)
    for r in range(bits.shape[0]):
        sel = masked[bits[r]]
        if sel.shape[0]:
            out[r] = np.bitwise_xor.reduce(sel, axis=0)
    return out


def doram_read(masked: MaskedDb, pair: DpfKeyPair, key_a: bytes, key_b: bytes,
               rng: np.random.Generator):
    """XOR shares of ``DB[pair.index]`` from one pre-generated key pair."""
    y_a = select_xor(masked.data, dpf_eval_full(pair.a))[0]
    y_b = select_xor(masked.data, dpf_eval_full(pair.b))[0]
    pad = unmask_pad(masked.prf, key_a, key_b, [pair.index], masked.block_bytes)[0]
    R = rng.integers(0, 256, masked.block_bytes, dtype=np.uint8)
    return y_a ^ pad ^ R, y_b ^ R


# --------------------------------------------------------------------------
# batched reads over a transport


def party_multi_read(ch: Channel, party: int, masked: MaskedDb, count: int,
                     rng: np.random.Generator, first: dict | None = None) -> np.ndarray:
    """A party's side of ``count`` simultaneous reads; returns ``(count, bytes)`` shares.

    ``first`` is merged into the first message (the party's index shares).
    """
    depth = masked.depth
    roots = rng.integers(0, 256, (count, SEED_BYTES), dtype=np.uint8)
    tree = TreeExpander(party, roots, depth)
    msg = dict(first or {})
    reply = None
    for level in range(depth):
        sl, sr, tl, tr = tree.expand()
        msg.update(sl=sl, sr=sr, tl=tl, tr=tr)
        ch.send("oram", msg, dealer=True)
        reply = ch.recv("oram", dealer=True)
        msg = {}
        tree.apply(reply["cw_seed"], reply["cw_t"])
    if depth == 0:
        ch.send("oram", msg, dealer=True)
        reply = ch.recv("oram", dealer=True)
    y = select_xor(masked.data, tree.leaves())
    return y ^ reply["pad"]


def dealer_multi_read(ch_a: Channel, ch_b: Channel, prf: str, key_a: bytes, key_b: bytes,
                      n: int, block_bytes: int, resolve, rng: np.random.Generator) -> np.ndarray:
    """Dealer side. ``resolve(first_a, first_b)`` maps the parties' first
    messages to the block indices being read. Returns the indices."""
    depth = max(0, (n - 1).bit_length())
    msg_a = ch_a.recv("oram", dealer=True)
    msg_b = ch_b.recv("oram", dealer=True)
    idx = np.asarray(resolve(msg_a, msg_b), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("read index outside the database")
    pad = unmask_pad(prf, key_a, key_b, idx, block_bytes)
    R = rng.integers(0, 256, pad.shape, dtype=np.uint8)
    for level in range(depth):
        if level:
            msg_a = ch_a.recv("oram", dealer=True)
            msg_b = ch_b.recv("oram", dealer=True)
        cw_seed = np.empty((idx.size, SEED_BYTES), dtype=np.uint8)
        cw_t = np.empty((idx.size, 2), dtype=np.uint8)
        for r, i in enumerate(idx.tolist()):
            aggs_a = tuple(msg_a[k][r] for k in ("sl", "sr", "tl", "tr"))
            aggs_b = tuple(msg_b[k][r] for k in ("sl", "sr", "tl", "tr"))
            cw_seed[r], cw_t[r] = correction_word(aggs_a, aggs_b, index_bit(i, level, depth))
        last = level == depth - 1
        ch_a.send("oram", dict(cw_seed=cw_seed, cw_t=cw_t, **({"pad": pad ^ R} if last else {})), dealer=True)
        ch_b.send("oram", dict(cw_seed=cw_seed, cw_t=cw_t, **({"pad": R} if last else {})), dealer=True)
    if depth == 0:
        ch_a.send("oram", {"pad": pad ^ R}, dealer=True)
        ch_b.send("oram", {"pad": R}, dealer=True)
    return idx


@dataclass
class MultiReadResult:
    shares_a: np.ndarray
    shares_b: np.ndarray
    rounds: int
    bytes: int


def multi_read(masked: MaskedDb, idx_a, idx_b, key_a: bytes, key_b: bytes, seed: int = 0) -> MultiReadResult:
    """Read the blocks at ``(idx_a + idx_b) mod n`` over in-memory links.

    Party A, party B and the dealer run in their own threads; ``rounds`` is the
    number of outgoing flights party A made on its dealer link.
    """
    idx_a = np.asarray(idx_a, dtype=np.int64).ravel()
    idx_b = np.asarray(idx_b, dtype=np.int64).ravel()
    if idx_a.shape != idx_b.shape:
        raise ValueError("both parties must supply the same number of index shares")
    n, count = masked.n, idx_a.size
    seeds = np.random.SeedSequence(seed).spawn(3)
    a_dealer, dealer_a = pipe("A", "dealer")
    b_dealer, dealer_b = pipe("B", "dealer")
    results: dict = {}
    errors: list = []

    def run(name, fn):
        try:
            results[name] = fn()
        except BaseException as exc:  # surface thread failures to the caller
            errors.append(exc)
            for ch in (a_dealer, b_dealer, dealer_a, dealer_b):
                ch.abort(f"{name} failed: {exc}")

    def resolve(ma, mb):
        return (np.asarray(ma["idx"]) + np.asarray(mb["idx"])) % n

    jobs = [
        ("a", lambda: party_multi_read(a_dealer, 0, masked, count, np.random.default_rng(seeds[0]), {"idx": idx_a})),
        ("b", lambda: party_multi_read(b_dealer, 1, masked, count, np.random.default_rng(seeds[1]), {"idx": idx_b})),
        ("dealer", lambda: dealer_multi_read(dealer_a, dealer_b, masked.prf, key_a, key_b, n,
                                             masked.block_bytes, resolve, np.random.default_rng(seeds[2]))),
    ]
    threads = [threading.Thread(target=run, args=job, daemon=True) for job in jobs]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    total = a_dealer.stats.total_bytes() + b_dealer.stats.total_bytes()
    return MultiReadResult(results["a"], results["b"], a_dealer.flights("oram"), total)


# --------------------------------------------------------------------------
# AND-gate cost of evaluating a PRF inside a circuit

_TABLE_BITS = (128, 22118, 49152)  # 128 bits, 2.7 kB, 6 kB
PRF_COSTS = {
    "aes-128": (5000, 865000, 1920000),
    "chacha20": (20480, 901120, 1966080),
    "kreyvium": (3840, 69810, 150912),
}
_ALIASES = {"aes": "aes-128", "aes128": "aes-128", "chacha": "chacha20"}


def prf_cost(name: str, bits: int) -> int:
    """AND gates for ``bits`` of PRF output; tabulated sizes are exact,
    others are interpolated linearly between neighbours (and extrapolated
    from the last two points)."""
    name = _ALIASES.get(name.lower(), name.lower())
    if name not in PRF_COSTS:
        raise ValueError(f"unknown PRF {name!r}; choose from {sorted(PRF_COSTS)}")
    if bits < 1:
        raise ValueError("output size must be positive")
    costs = PRF_COSTS[name]
    if bits in _TABLE_BITS:
        return costs[_TABLE_BITS.index(bits)]
    if bits < _TABLE_BITS[0]:
        return math.ceil(costs[0] * bits / _TABLE_BITS[0])
    seg = 0 if bits < _TABLE_BITS[1] else 1
    x0, x1 = _TABLE_BITS[seg], _TABLE_BITS[seg + 1]
    y0, y1 = costs[seg], costs[seg + 1]
    return math.ceil(y0 + (y1 - y0) * (bits - x0) / (x1 - x0))


def prf_table_rows() -> list[dict]:
    labels = ("128b", "2.7kB", "6kB")
    rows = []
    for name, costs in PRF_COSTS.items():
        for label, bits, cost in zip(labels, _TABLE_BITS, costs):
            rows.append(dict(prf=name, size=label, bits=bits, and_gates=cost,
                             and_per_bit=round(cost / bits, 2)))
    return rows


# --------------------------------------------------------------------------
# cluster block layout


def _to_bytes(x: np.ndarray, width: int) -> np.ndarray:
    raw = np.ascontiguousarray(x, dtype="<u8")[..., None].view(np.uint8)
    return raw[..., :width]


def _from_bytes(b: np.ndarray) -> np.ndarray:
    width = b.shape[-1]
    pad = np.zeros(b.shape[:-1] + (8,), dtype=np.uint8)
    pad[..., :width] = b
    return pad.view("<u8")[..., 0].astype(np.int64)


@dataclass(frozen=True)
class BlockLayout:
    """Byte-aligned slots ``[coords | id | norm | valid]``, ``m`` per block.

    Because every field starts on a byte boundary, XOR shares of a block
    decode field by field into XOR shares of each integer.
    """

    m: int
    d: int
    coord_bytes: int
    id_bytes: int
    norm_bytes: int

    @classmethod
    def for_params(cls, m: int, d: int, b_c: int, b_pid: int, b_d: int) -> "BlockLayout":
        return cls(m, d, math.ceil(b_c / 8), math.ceil(b_pid / 8), math.ceil(b_d / 8))

    @property
    def slot_bytes(self) -> int:
        return self.d * self.coord_bytes + self.id_bytes + self.norm_bytes + 1

    @property
    def block_bytes(self) -> int:
        return self.m * self.slot_bytes

    def encode(self, coords, ids, norms, valid) -> np.ndarray:
        """``(..., m, d)`` coords and ``(..., m)`` fields to ``(..., block_bytes)``."""
        coords = np.asarray(coords, dtype=np.int64)
        lead = coords.shape[:-2]
        if coords.shape[-2:] != (self.m, self.d):
            raise ValueError(f"expected {self.m} slots of dimension {self.d}")
        parts = [
            _to_bytes(coords, self.coord_bytes).reshape(*lead, self.m, self.d * self.coord_bytes),
            _to_bytes(np.asarray(ids), self.id_bytes),
            _to_bytes(np.asarray(norms), self.norm_bytes),
            np.asarray(valid, dtype=np.uint8)[..., None],
        ]
        return np.concatenate(parts, axis=-1).reshape(*lead, self.block_bytes)

    def decode(self, blocks):
        """Inverse of :meth:`encode`: ``(coords, ids, norms, valid)``."""
        b = np.asarray(blocks, dtype=np.uint8)
        if b.shape[-1] != self.block_bytes:
            raise ValueError(f"blocks must be {self.block_bytes} bytes")
        lead = b.shape[:-1]
        slots = b.reshape(*lead, self.m, self.slot_bytes)
        c_end = self.d * self.coord_bytes
        i_end = c_end + self.id_bytes
        n_end = i_end + self.norm_bytes
        coords = _from_bytes(slots[..., :c_end].reshape(*lead, self.m, self.d, self.coord_bytes))
        ids = _from_bytes(slots[..., c_end:i_end])
        norms = _from_bytes(slots[..., i_end:n_end])
        valid = slots[..., n_end].astype(np.int64)
        return coords, ids, norms, valid

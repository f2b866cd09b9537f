"""Cleartext top-k selection: the naive insertion sweep and bin-min selection.

Both functions reproduce, bit for bit, what the corresponding selection
circuit outputs, including the way equal values are resolved. The sweep keeps
a sorted array of ``k`` current minima; each incoming element walks along it
and is swapped with every slot that holds a strictly larger value.
"""

from __future__ import annotations

from bisect import bisect_right
from typing import NamedTuple

import numpy as np

#: Sentinel used when the caller does not pass a bit-width specific one.
UNBOUNDED = np.iinfo(np.int64).max


class ScoredId(NamedTuple):
    value: int
    id: int


def as_scored(values, ids) -> list[ScoredId]:
    return [ScoredId(int(v), int(i)) for v, i in zip(values, ids)]


def naive_topk(values, ids, k: int, maxval: int = UNBOUNDED):
    """Return the ``k`` smallest ``(value, id)`` pairs in ascending order.

    Empty slots rank above every real value, so an element equal to
    ``maxval`` still fills one. Slots that never receive a real element come
    back as ``(maxval, 0)``. Whether a slot is still empty depends only on
    the position reached, never on the data.

    The loop below skips elements that would not trigger any swap
    (``x >= opt[-1]``) and starts each sweep at the first slot where a swap
    can happen; both shortcuts leave the output identical to sweeping every
    comparator.
    """
    if k < 1:
        raise ValueError("k must be positive")
    values = np.asarray(values, dtype=np.int64).ravel()
    ids = np.asarray(ids, dtype=np.int64).ravel()
    if values.shape != ids.shape:
        raise ValueError("values and ids differ in length")
    empty = int(maxval) + 1 if maxval < UNBOUNDED else UNBOUNDED
    opt = [empty] * k
    idl = [0] * k
    for x, idx in zip(values.tolist(), ids.tolist()):
        if not x < opt[-1]:
            continue
        for j in range(bisect_right(opt, x), k):
            if x < opt[j]:
                opt[j], x = x, opt[j]
                idl[j], idx = idx, idl[j]
    opt = [min(v, int(maxval)) for v in opt]
    return np.array(opt, dtype=np.int64), np.array(idl, dtype=np.int64)


def bin_bounds(n: int, l: int) -> np.ndarray:
    """Start offsets of ``l`` contiguous bins covering ``n`` items (plus n).

    When ``l`` does not divide ``n`` the first ``n % l`` bins hold one extra
    item, so there are always exactly ``l`` non-empty bins.
    """
    if not 1 <= l <= n:
        raise ValueError(f"need 1 <= l <= n, got l={l}, n={n}")
    q, r = divmod(n, l)
    sizes = np.full(l, q, dtype=np.int64)
    sizes[:r] += 1
    return np.concatenate(([0], np.cumsum(sizes)))


def bin_minima(values, ids, l: int):
    """Per-bin minimum; the earliest position wins ties inside a bin."""
    values = np.asarray(values, dtype=np.int64).ravel()
    ids = np.asarray(ids, dtype=np.int64).ravel()
    n = values.size
    if not 1 <= l <= n:
        raise ValueError(f"need 1 <= l <= n, got l={l}, n={n}")
    q, r = divmod(n, l)
    out_v = np.empty(l, dtype=np.int64)
    out_i = np.empty(l, dtype=np.int64)
    split = r * (q + 1)
    for lo, hi, width, slot in ((0, split, q + 1, slice(0, r)), (split, n, q, slice(r, l))):
        if hi == lo:
            continue
        block = values[lo:hi].reshape(-1, width)
        pos = np.argmin(block, axis=1)
        rows = np.arange(block.shape[0])
        out_v[slot] = block[rows, pos]
        out_i[slot] = ids[lo:hi].reshape(-1, width)[rows, pos]
    return out_v, out_i


def approx_topk(values, ids, k: int, l: int, maxval: int = UNBOUNDED):
    """Bin-min selection over an already shuffled list.

    Splits the input into ``l`` contiguous bins, keeps each bin's minimum and
    runs :func:`naive_topk` over the ``l`` minima.
    """
    if k > l:
        raise ValueError(f"approx_topk needs k <= l (k={k}, l={l})")
    mins, mins_ids = bin_minima(values, ids, l)
    return naive_topk(mins, mins_ids, k, maxval)


def select_topk(values, ids, k: int, l: int | None, maxval: int = UNBOUNDED):
    """Dispatch used by the search algorithms.

    ``l=None`` means exact selection. Otherwise the bin count is clamped to
    the input size, and inputs too small for ``k`` bins fall back to the
    exact sweep.
    """
    kind, bins = selection_plan(np.asarray(values).size, k, l)
    if kind == "naive":
        return naive_topk(values, ids, k, maxval)
    return approx_topk(values, ids, k, bins, maxval)

def selection_plan(n: int, k: int, l: int | None) -> tuple[str, int]:
    """Which circuit :func:`select_topk` would use: ("naive"|"approx", bins)."""
    if l is None or n == 0:
        return "naive", n
    l_eff = min(l, n)
    # l = n means one item per bin, which is the naive sweep itself
    if l_eff < k or l_eff == n:
        return "naive", n
    return "approx", l_eff

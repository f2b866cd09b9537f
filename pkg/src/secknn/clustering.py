"""k-means and the size-balanced multi-group clustering used by the index."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_CHUNK = 4096


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    history: list[float] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.history[-1]


def _assign(X: np.ndarray, x_sq: np.ndarray, centers: np.ndarray):
    c_sq = np.einsum("ij,ij->i", centers, centers)
    labels = np.empty(X.shape[0], dtype=np.int64)
    dmin = np.empty(X.shape[0], dtype=np.float64)
    for lo in range(0, X.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, X.shape[0])
        d2 = x_sq[lo:hi, None] - 2.0 * (X[lo:hi] @ centers.T) + c_sq[None, :]
        lab = np.argmin(d2, axis=1)
        labels[lo:hi] = lab
        dmin[lo:hi] = np.maximum(d2[np.arange(hi - lo), lab], 0.0)
    return labels, dmin


def kmeans_pp_seed(X: np.ndarray, k: int, rng: np.random.Generator,
                   x_sq: np.ndarray | None = None) -> np.ndarray:
    n = X.shape[0]
    if x_sq is None:
        x_sq = np.einsum("ij,ij->i", X, X)
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    idx = int(rng.integers(n))
    closest = np.full(n, np.inf)
    for c in range(k):
        centers[c] = X[idx]
        d2 = x_sq - 2.0 * (X @ X[idx]) + x_sq[idx]
        np.minimum(closest, np.maximum(d2, 0.0), out=closest)
        if c + 1 == k:
            break
        cdf = np.cumsum(closest)
        total = cdf[-1]
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            # inverse-CDF draw keeps this O(n) per center
            idx = min(int(np.searchsorted(cdf, rng.random() * total, side="right")), n - 1)
    return centers


def kmeans(points, k: int, iters: int = 25, rng: np.random.Generator | None = None) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding.

    ``history`` records the objective after every assignment step; it never
    increases. Clusters that lose all their members are re-seeded at the
    point currently farthest from its center.
    """
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k-means needs 1 <= k <= n (k={k}, n={n})")
    rng = rng if rng is not None else np.random.default_rng()
    x_sq = np.einsum("ij,ij->i", X, X)
    centers = kmeans_pp_seed(X, k, rng, x_sq)
    history: list[float] = []
    labels, dmin = _assign(X, x_sq, centers)
    history.append(float(dmin.sum()))
    for _ in range(iters):
        counts = np.bincount(labels, minlength=k)
        sums = np.stack([np.bincount(labels, weights=X[:, j], minlength=k) for j in range(X.shape[1])], axis=1)
        new = centers.copy()
        nz = counts > 0
        new[nz] = sums[nz] / counts[nz, None]
        empty = np.flatnonzero(~nz)
        if empty.size:
            far = np.argsort(-dmin, kind="stable")[: empty.size]
            new[empty] = X[far]
        if np.array_equal(new, centers):
            break
        centers = new
        labels, dmin = _assign(X, x_sq, centers)
        history.append(float(dmin.sum()))
    return KMeansResult(centers, labels, history)


# --------------------------------------------------------------------------
# balanced clustering


@dataclass
class ClusterGroup:
    """Clusters of one balancing level; ``members`` hold dataset row indices."""

    members: list[np.ndarray]
    centers: np.ndarray

    @property
    def size(self) -> int:
        return int(sum(len(c) for c in self.members))

    def __len__(self) -> int:
        return len(self.members)


def max_levels(n: int, alpha: float) -> int:
    if n <= 1:
        return 1 + 5
    return math.ceil(math.log(n) / math.log(1.0 / alpha)) + 5


def _chunked_group(points: np.ndarray, rows: np.ndarray, m: int) -> ClusterGroup:
    members = [rows[i : i + m] for i in range(0, rows.size, m)]
    centers = np.stack([points[c].mean(axis=0) for c in members])
    return ClusterGroup(members, centers)


def _oversized(labels: np.ndarray, k: int, m: int) -> int:
    sizes = np.bincount(labels, minlength=k)
    return int(sizes[sizes > m].sum())


def smallest_k(X: np.ndarray, m: int, alpha: float, rng: np.random.Generator,
               iters: int = 25, tol: float = 0.05) -> KMeansResult | None:
    """Smallest k whose k-means leaves at most alpha*|X| points in clusters > m.

    Search: doubling from the counting lower bound, then bisection until the
    bracket is within ``tol`` (relative). Returns ``None`` when even the
    largest sensible k fails, e.g. when too few distinct points exist.
    """
    size = X.shape[0]
    budget = alpha * size
    cap = min(size, np.unique(X, axis=0).shape[0])
    k = max(1, math.ceil((1 - alpha) * size / m))
    lo, hi, best = 0, None, None
    while True:
        k = min(k, cap)
        res = kmeans(X, k, iters, rng)
        if _oversized(res.labels, k, m) <= budget:
            hi, best = k, res
            break
        lo = k
        if k == cap:
            return None
        k *= 2
    while hi - lo > max(1, int(tol * hi)):
        mid = (lo + hi) // 2
        res = kmeans(X, mid, iters, rng)
        if _oversized(res.labels, mid, m) <= budget:
            hi, best = mid, res
        else:
            lo = mid
    log.debug("balanced level: |X|=%d -> k=%d", size, hi)
    return best


def balance_clusters(points, m: int, alpha: float, rng: np.random.Generator | None = None,
                     iters: int = 25, tol: float = 0.05) -> list[ClusterGroup]:
    """Recursively cluster until every cluster holds at most ``m`` points.

    Each level keeps the clusters of size <= m as one group and recurses on
    the points of the oversized ones.
    """
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= m:
        raise ValueError("m must be at least 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    limit = max_levels(n, alpha)
    remaining = np.arange(n)
    groups: list[ClusterGroup] = []
    while remaining.size:
        if len(groups) >= limit - 1:
            groups.append(_chunked_group(X, remaining, m))
            break
        res = smallest_k(X[remaining], m, alpha, rng, iters, tol)
        if res is None:
            groups.append(_chunked_group(X, remaining, m))
            break
        k = res.centers.shape[0]
        sizes = np.bincount(res.labels, minlength=k)
        order = np.argsort(res.labels, kind="stable")
        starts = np.concatenate(([0], np.cumsum(sizes)))
        keep = [c for c in range(k) if 0 < sizes[c] <= m]
        members = [remaining[order[starts[c] : starts[c + 1]]] for c in keep]
        centers = np.stack([X[mem].mean(axis=0) for mem in members]) if members else np.empty((0, X.shape[1]))
        if members:
            groups.append(ClusterGroup(members, centers))
        remaining = remaining[sizes[res.labels] > m]
    return groups


def build_stash(groups: list[ClusterGroup], s_target: int):
    """Collapse trailing groups into a stash of at most ``s_target`` points.

    Groups are removed from the end while the running total stays within
    ``s_target`` and at least one group remains. Returns
    ``(kept_groups, stash_rows)``.
    """
    kept = list(groups)
    collapsed: list[np.ndarray] = []
    total = 0
    while len(kept) > 1 and total + kept[-1].size <= s_target:
        g = kept.pop()
        total += g.size
        collapsed.extend(g.members)
    stash = np.concatenate(collapsed) if collapsed else np.empty(0, dtype=np.int64)
    return kept, np.sort(stash)

"""Cleartext search algorithms and the exact brute-force oracle.

The shuffles are driven by an explicit seed so the secure protocol, which
lets the server draw the same permutations, can be compared output for
output against these functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HyperParams, QuantizedDataset, squared_distances
from .index import ClusterIndex
from .selection import naive_topk, select_topk


def linear_order(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


@dataclass
class ShuffleOrders:
    """Server-side permutations for one clustering query."""

    centers: list[np.ndarray]
    stash: np.ndarray


def shuffle_orders(k_c, s: int, seed: int) -> ShuffleOrders:
    rng = np.random.default_rng(seed)
    centers = [rng.permutation(k) for k in k_c]
    return ShuffleOrders(centers, rng.permutation(s))


def truncate(values, r: int) -> np.ndarray:
    return np.asarray(values, dtype=np.int64) >> r


def brute_force_knn(q, dataset: QuantizedDataset, k: int) -> np.ndarray:
    """Exact k nearest ids; ties on distance go to the smaller id."""
    dist = squared_distances(q, dataset.coords)
    order = np.lexsort((dataset.ids, dist))
    return dataset.ids[order[:k]].copy()


def brute_force_batch(queries, dataset: QuantizedDataset, k: int) -> np.ndarray:
    return np.stack([brute_force_knn(q, dataset, k) for q in np.asarray(queries)])


def plaintext_linear_scan(q, dataset: QuantizedDataset, params: HyperParams, seed: int = 0) -> np.ndarray:
    """Shuffle, truncate by ``r_p`` and run bin-min selection with ``l_s`` bins."""
    order = linear_order(dataset.n, seed)
    dist = truncate(squared_distances(q, dataset.coords[order]), params.r_p)
    _, ids = select_topk(dist, dataset.ids[order], params.k_nn, params.l_s, params.maxval(params.r_p))
    return ids


def select_clusters(q, index: ClusterIndex, params: HyperParams, orders: ShuffleOrders) -> list[np.ndarray]:
    """Local cluster indices picked in every group, in selection order."""
    picked = []
    for g, perm, u, l in zip(index.groups, orders.centers, params.u, params.l):
        dist = truncate(squared_distances(q, g.centers[perm]), params.r_c)
        _, local = select_topk(dist, perm, u, l, params.maxval(params.r_c))
        picked.append(local)
    return picked


def candidate_distances(q, index: ClusterIndex, params: HyperParams, picked):
    """Truncated distances and ids of all slots of the retrieved clusters.

    Dummy slots are given the sentinel distance.
    """
    vals, ids = [], []
    sentinel = params.maxval(params.r_p)
    for g, local in zip(index.groups, picked):
        coords = g.coords[local].reshape(-1, params.d)
        dist = truncate(squared_distances(q, coords), params.r_p)
        dist[~g.valid[local].ravel()] = sentinel
        vals.append(dist)
        ids.append(g.ids[local].ravel())
    return np.concatenate(vals), np.concatenate(ids)


def plaintext_clustering_knns(q, index: ClusterIndex, params: HyperParams | None = None,
                              seed: int = 0) -> np.ndarray:
    params = params if params is not None else index.params
    index.check_params(params)
    orders = shuffle_orders(index.k_c, index.s, seed)
    sentinel = params.maxval(params.r_p)
    picked = select_clusters(q, index, params, orders)
    c_vals, c_ids = candidate_distances(q, index, params, picked)
    top_v, top_i = naive_topk(c_vals, c_ids, params.k_nn, sentinel)
    if index.s:
        perm = orders.stash
        s_dist = truncate(squared_distances(q, index.stash_coords[perm]), params.r_p)
        st_v, st_i = select_topk(s_dist, index.stash_ids[perm], params.k_nn, params.l_s, sentinel)
        top_v, top_i = np.concatenate((top_v, st_v)), np.concatenate((top_i, st_i))
    _, ids = naive_topk(top_v, top_i, params.k_nn, sentinel)
    return ids

import numpy as np
import pytest

from secknn.bench import gen_synthetic, sample_queries
from secknn.core import HyperParams, quantize, quantize_dataset
from secknn.index import build_index


def make_case(n, d, blobs, queries, seed):
    pts, labels = gen_synthetic(n, d, blobs=blobs, spread=1.0, seed=seed, separation=3.0)
    ds, (lo, hi) = quantize_dataset(pts, 8)
    qs = quantize(sample_queries(pts, labels, queries, 1.0, seed + 1), 8, lo, hi).astype(np.int64)
    return ds, qs, labels


@pytest.fixture(scope="session")
def small_case():
    """1024 points in 16 dimensions plus 20 queries."""
    return make_case(1024, 16, 16, 20, 11)


@pytest.fixture(scope="session")
def mid_case():
    return make_case(4096, 16, 40, 20, 12)


@pytest.fixture(scope="session")
def mid_index(mid_case):
    ds, _, _ = mid_case
    base = HyperParams.create(n=ds.n, d=ds.d, k_nn=10, m=32, s=300, l_s=100, r_p=2, r_c=2)
    index = build_index(ds, base, np.random.default_rng(5))
    u = tuple(min(k, k // 10 + 1) for k in index.k_c)
    l = tuple(min(k, 4 * x) for k, x in zip(index.k_c, u))
    return index.with_probes(u, l)

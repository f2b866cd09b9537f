import struct

import numpy as np
import pytest

from secknn.bench import (EvalReport, VecsError, bins_for, eval_accuracy, gen_synthetic, grid_search, load_vecs,
                          report_costs, run_theorem_suite, sample_queries, write_vecs)
from secknn.core import HyperParams, load_params


@pytest.mark.parametrize("fmt,dtype", [("fvecs", np.float32), ("bvecs", np.uint8), ("ivecs", np.int32)])
def test_vecs_round_trip(tmp_path, fmt, dtype):
    arr = (np.random.default_rng(0).random((37, 5)) * 200).astype(dtype)
    path = tmp_path / f"x.{fmt}"
    write_vecs(path, arr)
    back = load_vecs(path)
    assert back.dtype == dtype and np.array_equal(back, arr)
    raw = path.read_bytes()
    assert len(raw) == 37 * (4 + 5 * np.dtype(dtype).itemsize)
    assert struct.unpack_from("<i", raw, 0)[0] == 5


def test_vecs_errors(tmp_path):
    path = tmp_path / "bad.fvecs"
    good = np.ones((10, 4), dtype=np.float32)
    recs = []
    for i, row in enumerate(good):
        d = 3 if i == 7 else 4
        recs.append(struct.pack("<i", d) + row[:d].tobytes())
    path.write_bytes(b"".join(recs))
    with pytest.raises(VecsError, match="record 7"):
        load_vecs(path)
    write_vecs(path, good)
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(VecsError, match="truncated"):
        load_vecs(path)
    with pytest.raises(VecsError):
        load_vecs(tmp_path / "x.txt")
    empty = tmp_path / "e.bvecs"
    empty.write_bytes(b"")
    assert load_vecs(empty).shape == (0, 0)


def test_gen_deterministic(tmp_path):
    a, la = gen_synthetic(500, 8, blobs=5, seed=3)
    b, lb = gen_synthetic(500, 8, blobs=5, seed=3)
    write_vecs(tmp_path / "a.fvecs", a)
    write_vecs(tmp_path / "b.fvecs", b)
    assert (tmp_path / "a.fvecs").read_bytes() == (tmp_path / "b.fvecs").read_bytes()
    assert np.array_equal(la, lb)
    assert a.shape == (500, 8) and a.dtype == np.float32
    assert np.bincount(la).max() - np.bincount(la).min() <= 1
    c, _ = gen_synthetic(500, 8, blobs=5, seed=4)
    assert not np.array_equal(a, c)


def test_gen_separation():
    pts, labels = gen_synthetic(2000, 4, blobs=6, spread=1.0, seed=5, separation=10.0)
    centers = np.stack([pts[labels == b].mean(axis=0) for b in range(6)])
    gaps = np.linalg.norm(centers[:, None] - centers[None], axis=2)[np.triu_indices(6, 1)]
    assert gaps.min() > 0.9 * 10 * 2.0
    q = sample_queries(pts, labels, 50, 1.0, 6)
    assert q.shape == (50, 4)
    nearest = np.linalg.norm(q[:, None] - centers[None], axis=2).min(axis=1)
    assert nearest.max() < 6.0
    with pytest.raises(ValueError):
        gen_synthetic(10, 0)


def test_eval_accuracy():
    assert eval_accuracy([[1, 2, 3]], [[3, 2, 1]], 3) == 1.0
    assert eval_accuracy([[1, 2, 9]], [[1, 2, 3]], 3) == pytest.approx(2 / 3)
    assert eval_accuracy([[1, 2], [5, 6]], [[1, 2], [7, 8]], 2) == 0.5
    assert eval_accuracy(np.empty((0, 3)), np.empty((0, 3)), 3) == 1.0
    with pytest.raises(ValueError):
        eval_accuracy([[1]], [[1], [2]], 1)
    with pytest.raises(ValueError):
        EvalReport("x", 1, 1, 1, 1.5)
    text = EvalReport("x", 10, 2, 1, 0.5, [dict(stage="dist", bytes=10, rounds=1)], {"scan": 5}).summary()
    assert "accuracy=0.5000" in text and "comparators[scan]=5" in text


def test_theorem_suites():
    assert bins_for("expectation", 10, 0.1) == 100
    assert bins_for("whp", 10, 0.1) == 1000
    rep = run_theorem_suite("expectation", 10_000, 10, 0.1, 100, seed=1)
    assert rep.l == 100 and rep.passed and rep.statistic >= 9
    assert rep.csv().splitlines()[0].startswith("which,n,k")
    assert len(rep.samples) == 100
    rep = run_theorem_suite("whp", 20_000, 5, 0.1, 100, seed=2)
    assert rep.l == 250 and rep.passed
    with pytest.raises(ValueError):
        run_theorem_suite("whp", 500, 10, 0.1, 10)
    with pytest.raises(ValueError):
        run_theorem_suite("whp", 5000, 10, 1.5, 10)
    with pytest.raises(ValueError):
        bins_for("other", 1, 0.1)


def test_too_few_bins_fails_expectation():
    # one tenth of the bins the bound asks for loses far more than delta * k
    rep = run_theorem_suite("expectation", 10_000, 50, 0.1, 100, seed=3)
    assert rep.passed
    from secknn.selection import approx_topk
    rng = np.random.default_rng(4)
    hits = []
    for _ in range(100):
        v = rng.permutation(10_000)
        _, out = approx_topk(v, np.arange(10_000), 50, 50)
        hits.append(len(set(v[out].tolist()) & set(range(50))))
    assert np.mean(hits) < 0.9 * 50


def test_report_costs():
    params = HyperParams.create(n=10, d=2, k_nn=2, l_s=5, r_p=12)
    text = report_costs(params, "linear")
    lines = text.splitlines()
    assert lines[0] == "part,kind,n,k,l,w,comparators,and_gates"
    assert lines[1] == "scan,naive,10,2,,5,20,300"
    assert lines[2] == "scan,approx,10,2,5,5,15,225"
    assert "prf,size,bits,and_gates,and_per_bit" in lines
    assert "aes-128,128b,128,5000,39.06" in lines
    clustering = report_costs(load_params("sift"), "clustering")
    parts = [l.split(",")[0] for l in clustering.splitlines()[1:] if l and not l.startswith("prf")]
    assert "centers0" in parts and "clusters" in parts and "final" in parts


def test_grid_search():
    best = grid_search(lambda a, b: 1.0 if a + b >= 5 else 0.0, {"a": [1, 2, 3, 4], "b": [1, 2, 3]},
                       lambda a, b: a * 10 + b)
    assert best[0] == {"a": 2, "b": 3} and best[2] == 23
    assert grid_search(lambda a: 0.0, {"a": [1]}, lambda a: a) is None

import math

import numpy as np
import pytest

from secknn import protocol
from secknn.core import HyperParams, QuantizedDataset
from secknn.engine import brute_force_knn, plaintext_clustering_knns, plaintext_linear_scan
from secknn.index import build_index
from secknn.protocol import (CLIENT, DEALER, SERVER, _run_three, client_session, dealer_session, run_clustering,
                             run_linear_scan, server_session)
from secknn.transport import ProtocolError

CHI2_63_001 = 103.4  # chi-square critical value, 63 degrees of freedom, significance 0.001


def linear_params(ds, k=10, l_s=100, r_p=2):
    return HyperParams.create(n=ds.n, d=ds.d, k_nn=k, l_s=l_s, r_p=r_p)


def test_linear_matches_plaintext(small_case):
    ds, qs, _ = small_case
    p = linear_params(ds)
    seeds = list(range(len(qs)))
    res = run_linear_scan(qs, ds, p, seeds, session_seed=3)
    assert res.ids.shape == (len(qs), 10)
    for i, s in enumerate(seeds):
        assert np.array_equal(res.ids[i], plaintext_linear_scan(qs[i], ds, p, s))
    assert len(res.transcripts) == len(qs)


def test_linear_naive_path_matches(small_case):
    ds, qs, _ = small_case
    p = linear_params(ds, l_s=ds.n)
    res = run_linear_scan(qs[:4], ds, p, [5, 6, 7, 8])
    for i, s in enumerate([5, 6, 7, 8]):
        assert np.array_equal(res.ids[i], plaintext_linear_scan(qs[i], ds, p, s))
    assert "topk" in res.transcripts[0].stages and "atopk" not in res.transcripts[0].stages


def test_nearest_self():
    rng = np.random.default_rng(0)
    ds = QuantizedDataset.from_coords(rng.integers(0, 256, (300, 8)), 8)
    p = HyperParams.create(n=300, d=8, k_nn=1, l_s=300, r_p=0)
    picks = [0, 17, 299]
    res = run_linear_scan(ds.coords[picks], ds, p, [1, 2, 3])
    assert res.ids[:, 0].tolist() == picks


def test_clustering_matches_plaintext(mid_case, mid_index):
    _, qs, _ = mid_case
    seeds = list(range(100, 100 + len(qs)))
    res = run_clustering(qs, mid_index, seeds, session_seed=4)
    for i, s in enumerate(seeds):
        assert np.array_equal(res.ids[i], plaintext_clustering_knns(qs[i], mid_index, seed=s))


def test_clustering_full_probe_exact(small_case):
    ds, qs, _ = small_case
    base = HyperParams.create(n=ds.n, d=ds.d, k_nn=5, m=16, s=0, r_p=0, r_c=0)
    index = build_index(ds, base, np.random.default_rng(1))
    res = run_clustering(qs[:5], index, [0, 1, 2, 3, 4])
    for i in range(5):
        d = ((ds.coords - qs[i]) ** 2).sum(axis=1)
        assert sorted(d[res.ids[i]].tolist()) == sorted(d[brute_force_knn(qs[i], ds, 5)].tolist())


def test_oram_rounds_bounded(mid_case, mid_index):
    _, qs, _ = mid_case
    res = run_clustering(qs[:3], mid_index, [0, 1, 2])
    blocks = sum(mid_index.k_c)
    for tr in res.transcripts:
        assert 0 < tr.rounds("oram") <= max(1, math.ceil(math.log2(blocks))) + 2
        assert tr.total_bytes > 0


def test_transcripts_deterministic(small_case):
    ds, qs, _ = small_case
    p = linear_params(ds)
    a = run_linear_scan(qs[:3], ds, p, [1, 2, 3], session_seed=9)
    b = run_linear_scan(qs[:3], ds, p, [1, 2, 3], session_seed=9)
    assert np.array_equal(a.ids, b.ids)
    for x, y in zip(a.transcripts, b.transcripts):
        assert {k: (v.bytes, v.messages, v.rounds) for k, v in x.stages.items()} == \
               {k: (v.bytes, v.messages, v.rounds) for k, v in y.stages.items()}


def _mismatch(p_client, p_server, ds):
    return _run_three(
        lambda every: lambda l: client_session(l, p_client, "linear", ds.coords[:1], np.random.default_rng(0)),
        lambda l: server_session(l, p_server, "linear", ds, np.random.default_rng(1), [0]),
        lambda l: dealer_session(l, np.random.default_rng(2)),
    )


def test_handshake_mismatch_aborts(small_case):
    ds, _, _ = small_case
    p = linear_params(ds)
    with pytest.raises(ProtocolError):
        _mismatch(p, p.replace(r_p=3), ds)
    with pytest.raises(ProtocolError):
        _mismatch(p.replace(b_c=7), p, ds)


def test_parameter_check():
    ds = QuantizedDataset.from_coords(np.zeros((10, 2), dtype=int), 8)
    with pytest.raises(ValueError):
        run_linear_scan(ds.coords[:1], ds, HyperParams.create(n=11, d=2, k_nn=1), [0])


def test_digest_stable():
    p = HyperParams.create(n=1000, d=8, k_nn=10, l_s=100)
    assert p.digest() == HyperParams.create(n=1000, d=8, k_nn=10, l_s=100).digest()
    assert p.digest() == HyperParams.from_config(p.to_config()).digest()
    assert p.digest() != p.replace(l_s=101).digest()


def test_client_view_is_uniform(small_case, monkeypatch):
    # the masked inner products and the client's id shares should look random
    ds, qs, _ = small_case
    p = linear_params(ds, l_s=200)
    seen_s, seen_ids = [], []
    dist, select = protocol.client_distances, protocol.party_select

    def rec_dist(sess, q):
        s = dist(sess, q)
        seen_s.append(s.copy())
        return s

    def rec_select(sess, stage, a, ids=None, valid=None):
        out = select(sess, stage, a, ids, valid)
        if sess.role == CLIENT:
            seen_ids.append(out["ids"].copy())
        return out

    monkeypatch.setattr(protocol, "client_distances", rec_dist)
    monkeypatch.setattr(protocol, "party_select", rec_select)
    q = np.repeat(qs[:1], 30, axis=0)
    run_linear_scan(q, ds, p, [0] * 30)
    s = np.concatenate(seen_s) % 64
    counts = np.bincount(s, minlength=64)
    exp = s.size / 64
    assert ((counts - exp) ** 2 / exp).sum() < CHI2_63_001
    # same query, same order: the true ids repeat but the client's shares do not
    shares = np.stack(seen_ids)
    assert len({tuple(r) for r in shares.tolist()}) == 30
    bits = np.unpackbits(shares.astype(">u2").view(np.uint8)).reshape(30, -1)
    assert abs(bits[:, -ds.n.bit_length():].mean() - 0.5) < 0.1

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from secknn.network import (AND_PER_BIT, build_network, comparator_cost, cost_rows, count_comparators, evaluate,
                            truncate_shares_model)
from secknn.selection import approx_topk, naive_topk


def test_counts():
    assert build_network("naive", 10 ** 6, 10).comparators == 10 ** 7
    assert build_network("approx", 10 ** 6, 10, 1000).comparators == 1_009_000
    assert build_network("approx", 64, 4, 64).comparators == build_network("naive", 64, 4).comparators


@given(st.integers(1, 2000), st.integers(1, 20), st.integers(1, 2000))
def test_count_formula_uneven_bins(n, k, l):
    if not k <= l <= n:
        with pytest.raises(ValueError):
            build_network("approx", n, k, l)
        return
    assert count_comparators("approx", n, k, l) == (n - l) + l * k


def test_and_gates_convention():
    net = build_network("naive", 100, 3, w=15)
    assert comparator_cost(15) == AND_PER_BIT * 15 == 45
    assert net.and_gates == 300 * 45


def test_invalid():
    with pytest.raises(ValueError):
        build_network("approx", 10, 5, 3)
    with pytest.raises(ValueError):
        build_network("bitonic", 10, 5)
    with pytest.raises(ValueError):
        build_network("naive", 0, 1)


def test_evaluate_single_and_ties():
    net = build_network("naive", 1, 1, w=8)
    v, i = evaluate(net, [42], [9])
    assert v.tolist() == [42] and i.tolist() == [9]
    net = build_network("naive", 6, 3, w=8)
    v, i = evaluate(net, [5] * 6, [10, 11, 12, 13, 14, 15])
    assert i.tolist() == [10, 11, 12]


def test_evaluate_values_at_maxval():
    v, i = evaluate(build_network("naive", 4, 2, w=3), [7, 7, 7, 7], [3, 2, 1, 0])
    assert v.tolist() == [7, 7] and i.tolist() == [3, 2]
    v, i = evaluate(build_network("naive", 1, 3, w=3), [7], [5])
    assert v.tolist() == [7, 7, 7] and i.tolist() == [5, 0, 0]


def test_evaluate_width_overflow():
    net = build_network("naive", 3, 1, w=4)
    with pytest.raises(ValueError):
        evaluate(net, [1, 16, 2], [0, 1, 2])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 60), st.integers(1, 8), st.data())
def test_differential_small(n, k, data):
    l = data.draw(st.integers(min(k, n), n))
    rng = np.random.default_rng(data.draw(st.integers(0, 1 << 30)))
    vals = rng.integers(0, 16, (5, n))
    ids = rng.integers(0, 1000, (5, n))
    nv, ni = evaluate(build_network("naive", n, k, w=4), vals, ids)
    for b in range(5):
        ev, ei = naive_topk(vals[b], ids[b], k, 15)
        assert ev.tolist() == nv[b].tolist() and ei.tolist() == ni[b].tolist()
    if k <= l:
        av, ai = evaluate(build_network("approx", n, k, l, w=4), vals, ids)
        for b in range(5):
            ev, ei = approx_topk(vals[b], ids[b], k, l, 15)
            assert ev.tolist() == av[b].tolist() and ei.tolist() == ai[b].tolist()


def test_truncation_model():
    assert truncate_shares_model(25, 0) == 25
    assert truncate_shares_model(25, 3) == 3
    assert truncate_shares_model((1 << 23) - 1, 8) == (1 << 15) - 1


@given(st.integers(0, 1 << 23), st.integers(0, 1 << 23), st.integers(0, 23))
def test_truncation_monotone(a, b, r):
    a, b = sorted((a, b))
    assert truncate_shares_model(a, r) <= truncate_shares_model(b, r)


def test_cost_rows_csv():
    text = cost_rows([build_network("naive", 10, 2, w=5), build_network("approx", 10, 2, 5, w=5)])
    lines = text.strip().splitlines()
    assert lines[0] == "kind,n,k,l,w,comparators,and_gates"
    assert lines[1] == "naive,10,2,,5,20,300"
    assert lines[2] == "approx,10,2,5,5,15,225"

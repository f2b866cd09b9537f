import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from secknn.selection import approx_topk, bin_bounds, bin_minima, naive_topk, select_topk, selection_plan


def oracle_topk(values, ids, k, maxval):
    """Sorted values, padded with the sentinel."""
    v = sorted(int(x) for x in values)[:k]
    return np.array(v + [maxval] * (k - len(v)))


def literal_sweep(values, ids, k, maxval):
    """Every comparator of the insertion sweep, no shortcuts. None marks an empty slot."""
    opt, idl = [None] * k, [0] * k
    for x, i in zip(values, ids):
        for j in range(k):
            if opt[j] is None or x < opt[j]:
                opt[j], x = x, opt[j]
                idl[j], i = i, idl[j]
            if x is None:
                break
    return [maxval if v is None else v for v in opt], idl


def test_naive_examples():
    v, i = naive_topk([5, 3, 9], [10, 11, 12], 2)
    assert v.tolist() == [3, 5] and i.tolist() == [11, 10]
    v, i = naive_topk([7, 7], [1, 2], 1)
    assert i.tolist() == [1]


def test_naive_pads_with_sentinel():
    v, i = naive_topk([4, 2], [7, 8], 4, maxval=99)
    assert v.tolist() == [2, 4, 99, 99]
    assert i.tolist() == [8, 7, 0, 0]


def test_naive_full_sort():
    rng = np.random.default_rng(0)
    vals = rng.integers(0, 1000, 50)
    v, _ = naive_topk(vals, np.arange(50), 50)
    assert v.tolist() == sorted(vals.tolist())


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 21), min_size=1, max_size=60), st.integers(1, 12))
def test_naive_matches_sorted_values_and_literal_sweep(vals, k):
    ids = np.arange(len(vals)) + 100
    got = naive_topk(vals, ids, k, maxval=21)
    assert got[0].tolist() == oracle_topk(vals, ids, k, 21).tolist()
    opt, idl = literal_sweep(vals, ids.tolist(), k, 21)
    assert got[0].tolist() == opt and got[1].tolist() == idl
    # every reported id carries the value reported next to it
    lookup = dict(zip(ids.tolist(), vals))
    assert all(lookup.get(i, 21) == v or v == 21 for v, i in zip(got[0].tolist(), got[1].tolist()))


def test_values_at_the_sentinel_still_fill_slots():
    v, i = naive_topk([7, 7, 7], [4, 5, 6], 2, maxval=7)
    assert v.tolist() == [7, 7] and i.tolist() == [4, 5]
    v, i = naive_topk([0, 0, 0, 0], [9, 8, 7, 6], 2, maxval=0)
    assert i.tolist() == [9, 8]
    v, i = naive_topk([7], [4], 3, maxval=7)
    assert v.tolist() == [7, 7, 7] and i.tolist() == [4, 0, 0]


def test_sweep_is_not_a_stable_sort():
    # the 0 displaces id 100 from the first slot; under strict < it cannot
    # displace its equal in the second slot, so id 100 drops out
    _, i = naive_topk([1, 1, 0], [100, 101, 102], 2)
    assert i.tolist() == [102, 101]


def test_approx_worked_example():
    vals = [8, 1, 6, 3, 9, 2, 7, 4]
    mins, mids = bin_minima(vals, np.arange(8), 4)
    assert mins.tolist() == [1, 3, 2, 4]
    v, i = approx_topk(vals, np.arange(8), 2, 4)
    assert v.tolist() == [1, 2] and i.tolist() == [1, 5]


def test_approx_with_n_bins_is_naive():
    rng = np.random.default_rng(1)
    for _ in range(50):
        vals = rng.integers(0, 30, 40)
        ids = rng.permutation(40)
        a = approx_topk(vals, ids, 5, 40)
        b = naive_topk(vals, ids, 5)
        assert a[0].tolist() == b[0].tolist() and a[1].tolist() == b[1].tolist()


def test_approx_k1_is_global_min():
    rng = np.random.default_rng(2)
    vals = rng.permutation(1000)
    for l in (1, 7, 100, 1000):
        v, i = approx_topk(vals, np.arange(1000), 1, l)
        assert v[0] == 0 and vals[i[0]] == 0


def test_approx_rejects_k_above_l():
    with pytest.raises(ValueError):
        approx_topk([1, 2, 3], [0, 1, 2], 3, 2)


@given(st.integers(1, 500), st.integers(1, 500))
def test_bins_balanced(n, l):
    if l > n:
        with pytest.raises(ValueError):
            bin_bounds(n, l)
        return
    sizes = np.diff(bin_bounds(n, l))
    assert sizes.size == l and sizes.sum() == n
    assert sizes.max() - sizes.min() <= 1
    assert sizes.min() >= 1


def test_bin_min_first_occurrence_wins():
    mins, ids = bin_minima([3, 1, 1, 5], [10, 11, 12, 13], 1)
    assert ids.tolist() == [11]


def test_selection_plan():
    assert selection_plan(100, 10, None) == ("naive", 100)
    assert selection_plan(100, 10, 50) == ("approx", 50)
    assert selection_plan(100, 10, 500) == ("naive", 100)
    assert selection_plan(100, 10, 100) == ("naive", 100)
    assert selection_plan(100, 10, 99) == ("approx", 99)
    vals = np.random.default_rng(0).integers(0, 50, 100)
    a = approx_topk(vals, np.arange(100), 10, 100)
    b = naive_topk(vals, np.arange(100), 10)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert selection_plan(8, 10, 50) == ("naive", 8)
    v, _ = select_topk([5, 1, 4], [0, 1, 2], 2, 500)
    assert v.tolist() == [1, 4]

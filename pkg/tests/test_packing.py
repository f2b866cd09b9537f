import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from secknn.packing import (RingElem, decode_query, distance_shares, encode_points, encode_query,
                            masked_response, negacyclic_schoolbook, pack_point_batches, packed_inner_products,
                            packed_products_array, plain_convolution)


def test_encode_query():
    f = encode_query(np.zeros(4, dtype=int), 8, 1 << 10)
    assert all(not e.coeffs.any() for e in f)
    q = np.array([3, 1, 4, 1])
    f = encode_query(q, 8, 1 << 10)
    assert all(e.is_constant() and e.coeffs[0] == v for e, v in zip(f, q))
    q = np.random.default_rng(0).integers(0, 256, 128)
    assert np.array_equal(decode_query(encode_query(q, 16, 1 << 23)), q)


def test_encode_points():
    g = encode_points(np.array([[5, 6]]), 8, 1 << 10)
    assert [e.is_constant() for e in g] == [True, True]
    pts = np.random.default_rng(1).integers(0, 256, (7, 3))
    g = encode_points(pts, 8, 1 << 10)
    for i in range(3):
        assert np.array_equal(g[i].coeffs[:7], pts[:, i]) and not g[i].coeffs[7:].any()
    g = encode_points(np.empty((0, 3)), 8, 1 << 10, d=3)
    assert len(g) == 3 and not any(e.coeffs.any() for e in g)
    with pytest.raises(ValueError):
        encode_points(np.zeros((9, 2)), 8, 1 << 10)


def test_hand_example():
    q = np.array([2, 3])
    pts = np.array([[1, 0], [0, 1], [4, 5], [1, 1], [0, 0], [7, 2], [3, 3], [6, 0]])
    h = packed_inner_products(encode_query(q, 8, 1 << 10), encode_points(pts, 8, 1 << 10))
    assert h.coeffs.tolist() == [2, 3, 23, 5, 0, 20, 15, 12]


def test_basis_query_extracts_coordinate():
    pts = np.random.default_rng(2).integers(0, 256, (16, 5))
    q = np.zeros(5, dtype=int)
    q[3] = 1
    h = packed_inner_products(encode_query(q, 16, 1 << 23), encode_points(pts, 16, 1 << 23))
    assert np.array_equal(h.coeffs, pts[:, 3])


def test_full_size_batch():
    rng = np.random.default_rng(3)
    N, d, t = 1 << 13, 128, 1 << 23
    q = rng.integers(0, 256, d)
    pts = rng.integers(0, 256, (N, d))
    h = packed_inner_products(encode_query(q, N, t), encode_points(pts, N, t))
    assert np.array_equal(h.coeffs, (pts @ q) % t)


def test_array_form_matches_ring_form():
    rng = np.random.default_rng(4)
    N, t = 64, 1 << 20
    pts = rng.integers(0, 256, (150, 6))
    q = rng.integers(0, 256, 6)
    flat = packed_products_array(q, pack_point_batches(pts, N, t), t)
    for b in range(3):
        batch = pts[b * N : (b + 1) * N]
        h = packed_inner_products(encode_query(q, N, t), encode_points(batch, N, t))
        assert np.array_equal(flat[b * N : b * N + len(batch)], h.coeffs[: len(batch)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), st.integers(1, 40), st.integers(0, 1 << 30))
def test_schoolbook_against_exact_convolution(logn, bits, seed):
    N, t = 1 << logn, 1 << bits
    rng = np.random.default_rng(seed)
    a = RingElem(rng.integers(0, t, N), t)
    b = RingElem(rng.integers(0, t, N), t)
    full = plain_convolution(a, b)
    want = [int(full[j]) - (int(full[j + N]) if j + N < len(full) else 0) for j in range(N)]
    assert negacyclic_schoolbook(a, b).coeffs.tolist() == [w % t for w in want]


def test_constant_products_do_not_wrap():
    rng = np.random.default_rng(5)
    N, t = 32, 1 << 23
    f = RingElem.constant(173, N, t)
    g = RingElem(rng.integers(0, 256, N), t)
    full = plain_convolution(f, g)
    assert all(int(x) == 0 for x in full[N:])
    assert (f * g) == negacyclic_schoolbook(f, g)


def test_mul_x_negacyclic():
    rng = np.random.default_rng(6)
    N, t = 16, 1 << 9
    a = RingElem(rng.integers(0, t, N), t)
    b = a
    for _ in range(N):
        b = b.mul_x()
    assert b == -a
    x = RingElem(np.eye(N, dtype=int)[1], t)
    assert a * x == a.mul_x()


def test_ring_checks():
    with pytest.raises(ValueError):
        RingElem([1, 2, 3], 1 << 8)
    with pytest.raises(ValueError):
        RingElem([1, 2], 12)
    with pytest.raises(ValueError):
        RingElem([1, 2], 1 << 8) + RingElem([1, 2, 3, 4], 1 << 8)


def test_distance_shares_reconstruct():
    rng = np.random.default_rng(7)
    t = 1 << 23
    for _ in range(1000):
        q = rng.integers(0, 256, 8)
        pts = rng.integers(0, 256, (5, 8))
        h = (pts @ q) % t
        r = rng.integers(0, t, 5)
        s = masked_response(h, r, t)
        c, sv = distance_shares(s, r, int(q @ q), (pts * pts).sum(axis=1), t)
        assert np.array_equal((c + sv) % t, ((pts - q) ** 2).sum(axis=1))


def test_distance_shares_self_and_determinism():
    t = 1 << 23
    q = np.array([10, 20, 30])
    r = np.random.default_rng(8).integers(0, t, 1)
    s = masked_response(np.array([q @ q]), r, t)
    c, sv = distance_shares(s, r, int(q @ q), [int(q @ q)], t)
    assert (c + sv) % t == 0
    r2 = np.random.default_rng(8).integers(0, t, 1)
    assert np.array_equal(masked_response(np.array([q @ q]), r2, t), s)

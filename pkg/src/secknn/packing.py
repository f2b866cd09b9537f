"""Coefficient packing of inner products in Z_t[x]/(x^N + 1).

A query coordinate becomes a constant polynomial and coordinate ``i`` of a
batch of up to ``N`` points becomes one polynomial whose ``j``-th coefficient
belongs to point ``j``. The sum over coordinates of (constant * polynomial)
then holds every inner product in its own coefficient. Only the algebra is
modelled here; nothing is encrypted.
"""

from __future__ import annotations

import math

import numpy as np


def _check_modulus(t: int) -> int:
    if t < 2 or t & (t - 1) or t > 1 << 62:
        raise ValueError("plaintext modulus must be a power of two up to 2^62")
    return t - 1


class RingElem:
    """Element of Z_t[x]/(x^N + 1) with coefficients in [0, t)."""

    __slots__ = ("coeffs", "t")

    def __init__(self, coeffs, t: int) -> None:
        mask = _check_modulus(t)
        c = np.asarray(coeffs, dtype=np.int64)
        if c.ndim != 1 or c.size < 1 or c.size & (c.size - 1):
            raise ValueError("ring dimension must be a power of two")
        self.coeffs = c & mask
        self.t = t

    @classmethod
    def zero(cls, N: int, t: int) -> "RingElem":
        return cls(np.zeros(N, dtype=np.int64), t)

    @classmethod
    def constant(cls, value: int, N: int, t: int) -> "RingElem":
        c = np.zeros(N, dtype=np.int64)
        c[0] = value
        return cls(c, t)

    @property
    def N(self) -> int:
        return self.coeffs.size

    def is_constant(self) -> bool:
        return not self.coeffs[1:].any()

    def _same_ring(self, other: "RingElem") -> None:
        if self.N != other.N or self.t != other.t:
            raise ValueError("operands live in different rings")

    def __add__(self, other: "RingElem") -> "RingElem":
        self._same_ring(other)
        return RingElem(self.coeffs + other.coeffs, self.t)

    def __sub__(self, other: "RingElem") -> "RingElem":
        self._same_ring(other)
        return RingElem(self.coeffs - other.coeffs, self.t)

    def __neg__(self) -> "RingElem":
        return RingElem(-self.coeffs, self.t)

    def __eq__(self, other) -> bool:
        return isinstance(other, RingElem) and self.t == other.t and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self) -> str:
        return f"RingElem(N={self.N}, t={self.t})"

    def mul_x(self) -> "RingElem":
        """Multiply by x; the top coefficient wraps around negated."""
        c = np.roll(self.coeffs, 1)
        c[0] = -c[0]
        return RingElem(c, self.t)

    def __mul__(self, other: "RingElem") -> "RingElem":
        self._same_ring(other)
        if other.is_constant():
            return RingElem(self.coeffs * other.coeffs[0], self.t)
        if self.is_constant():
            return RingElem(other.coeffs * self.coeffs[0], self.t)
        return negacyclic_schoolbook(self, other)


def negacyclic_schoolbook(a: RingElem, b: RingElem) -> RingElem:
    """Reference product: full convolution, then fold degree >= N with a sign flip.

    int64 products may overflow, but wraparound is modulo 2^64 and t divides it.
    """
    a._same_ring(b)
    N = a.N
    full = np.convolve(a.coeffs, b.coeffs)
    out = full[:N].copy()
    out[: N - 1] -= full[N:]
    return RingElem(out, a.t)


def plain_convolution(a: RingElem, b: RingElem) -> np.ndarray:
    """Unreduced product coefficients as exact Python integers."""
    av = [int(x) for x in a.coeffs]
    bv = [int(x) for x in b.coeffs]
    out = [0] * (len(av) + len(bv) - 1)
    for i, x in enumerate(av):
        if x:
            for j, y in enumerate(bv):
                out[i + j] += x * y
    return np.array(out, dtype=object)


# --------------------------------------------------------------------------
# encodings


def encode_query(q, N: int, t: int) -> list[RingElem]:
    return [RingElem.constant(int(v), N, t) for v in np.asarray(q, dtype=np.int64)]


def decode_query(f: list[RingElem]) -> np.ndarray:
    return np.array([int(e.coeffs[0]) for e in f], dtype=np.int64)


def encode_points(points, N: int, t: int, d: int | None = None) -> list[RingElem]:
    """Coordinate-major polynomials for a batch of at most ``N`` points."""
    pts = np.asarray(points, dtype=np.int64)
    if pts.size == 0:
        if d is None:
            raise ValueError("dimension needed for an empty batch")
        return [RingElem.zero(N, t) for _ in range(d)]
    if pts.ndim != 2 or pts.shape[0] > N:
        raise ValueError(f"a batch holds between 0 and N={N} points")
    coef = np.zeros((pts.shape[1], N), dtype=np.int64)
    coef[:, : pts.shape[0]] = pts.T
    return [RingElem(row, t) for row in coef]


def packed_inner_products(f: list[RingElem], g: list[RingElem]) -> RingElem:
    if len(f) != len(g) or not f:
        raise ValueError("need the same positive number of query and point polynomials")
    h = f[0] * g[0]
    for fi, gi in zip(f[1:], g[1:]):
        h = h + fi * gi
    return h


# --------------------------------------------------------------------------
# array forms used on the wire


def pack_point_batches(points, N: int, t: int) -> np.ndarray:
    """``(batches, d, N)`` coefficient array; batch ``k`` holds points kN..kN+N-1."""
    pts = np.asarray(points, dtype=np.int64) & (t - 1)
    n, d = pts.shape
    batches = max(1, math.ceil(n / N))
    coef = np.zeros((batches * N, d), dtype=np.int64)
    coef[:n] = pts
    return np.ascontiguousarray(coef.reshape(batches, N, d).transpose(0, 2, 1))


def packed_products_array(q, batches: np.ndarray, t: int) -> np.ndarray:
    """Coefficients of sum_i f_i g_i for every batch, flattened to ``batches*N``.

    With constant f_i the ring product is a scalar multiple, so this is the
    coefficient-wise form of :func:`packed_inner_products`.
    """
    q = np.asarray(q, dtype=np.int64)
    h = np.einsum("i,kin->kn", q, batches)
    return h.reshape(-1) & (t - 1)


def masked_response(h, r, t: int) -> np.ndarray:
    """What the client obtains: the packed inner products plus the server's mask."""
    h = np.asarray(h, dtype=np.int64)
    r = np.asarray(r, dtype=np.int64)
    return (h[: r.size] + r) & (t - 1)


def client_distance_share(s, q_norm: int, t: int) -> np.ndarray:
    return (-2 * np.asarray(s, dtype=np.int64) + int(q_norm)) & (t - 1)


def server_distance_share(r, p_norms, t: int) -> np.ndarray:
    return (2 * np.asarray(r, dtype=np.int64) + np.asarray(p_norms, dtype=np.int64)) & (t - 1)


def distance_shares(s, r, q_norm: int, p_norms, t: int):
    """Turn ``s = <q,p> + r`` into additive shares of the squared distances.

    Client: ``-2 s + |q|^2``. Server: ``2 r + |p|^2``. The sum is
    ``|q|^2 - 2<q,p> + |p|^2``.
    """
    return client_distance_share(s, q_norm, t), server_distance_share(r, p_norms, t)

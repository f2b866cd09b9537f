"""Additive shares modulo a power of two, XOR shares, and dealer-aided B2A.

Shares are plain ``int64`` numpy arrays; the two halves of a pair are held by
different parties. Every modulus here is a power of two, so reductions are a
bit mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _mask(t: int) -> int:
    if t < 2 or t & (t - 1) or t > 1 << 62:
        raise ValueError("modulus must be a power of two in [2, 2^62]")
    return t - 1


def width_of(t: int) -> int:
    _mask(t)
    return t.bit_length() - 1


def uniform(rng: np.random.Generator, shape, bits: int) -> np.ndarray:
    if not 0 <= bits <= 62:
        raise ValueError("share widths are limited to 62 bits")
    if bits == 0:
        return np.zeros(shape, dtype=np.int64)
    return rng.integers(0, 1 << bits, size=shape, dtype=np.int64)


def share_arith(secret, t: int, rng: np.random.Generator):
    """Split into ``(c, s)`` with ``c`` uniform and ``c + s = secret (mod t)``."""
    mask = _mask(t)
    x = np.asarray(secret, dtype=np.int64)
    c = uniform(rng, x.shape, width_of(t))
    return c, (x - c) & mask


def reconstruct_arith(c, s, t: int) -> np.ndarray:
    return (np.asarray(c, dtype=np.int64) + np.asarray(s, dtype=np.int64)) & _mask(t)


def share_xor(secret, width: int, rng: np.random.Generator):
    x = np.asarray(secret, dtype=np.int64)
    if x.size and (x.min() < 0 or x.max() >> width):
        raise ValueError(f"secret does not fit in {width} bits")
    c = uniform(rng, x.shape, width)
    return c, x ^ c


def reconstruct_xor(c, s) -> np.ndarray:
    return np.asarray(c, dtype=np.int64) ^ np.asarray(s, dtype=np.int64)


def share_bytes(secret: np.ndarray, rng: np.random.Generator):
    x = np.asarray(secret, dtype=np.uint8)
    c = rng.integers(0, 256, size=x.shape, dtype=np.uint8)
    return c, x ^ c


# --------------------------------------------------------------------------
# B2A


@dataclass
class B2AMaterial:
    """One party's half of the per-bit correlated randomness.

    ``r_xor`` XOR-shares a random mask ``r`` per value; ``r_bits`` holds
    additive shares (mod t) of every bit of ``r``, least significant first.
    """

    r_xor: np.ndarray  # (count,)
    r_bits: np.ndarray  # (count, width)
    width: int


class Dealer:
    """Source of correlated randomness for B2A."""

    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def b2a_material(self, count: int, width: int, t: int) -> tuple[B2AMaterial, B2AMaterial]:
        if width > width_of(t):
            raise ValueError(f"width {width} exceeds the modulus width {width_of(t)}")
        r = uniform(self.rng, count, width)
        r_c, r_s = share_xor(r, width, self.rng)
        bits = (r[:, None] >> np.arange(width)) & 1
        b_c, b_s = share_arith(bits, t, self.rng)
        return B2AMaterial(r_c, b_c, width), B2AMaterial(r_s, b_s, width)


def b2a_open(x_share, mat: B2AMaterial) -> np.ndarray:
    """Value a party publishes: its share XOR its share of the mask."""
    x = np.asarray(x_share, dtype=np.int64)
    if x.size and (x.min() < 0 or x.max() >> mat.width):
        raise ValueError(f"share does not fit in {mat.width} bits")
    return x ^ mat.r_xor


def b2a_finish(opened, mat: B2AMaterial, t: int, first: bool) -> np.ndarray:
    """Additive share from the opened ``c = x ^ r`` and bit shares of ``r``.

    Per bit, ``x_j = c_j + (1 - 2 c_j) r_j``; the public ``c_j`` term is added
    by the first party only.
    """
    mask = _mask(t)
    if mat.width == 0:
        return np.zeros(len(mat.r_xor), dtype=np.int64)
    c_bits = (np.asarray(opened, dtype=np.int64)[:, None] >> np.arange(mat.width)) & 1
    share_bits = (1 - 2 * c_bits) * mat.r_bits
    if first:
        share_bits = share_bits + c_bits
    weights = np.int64(1) << np.arange(mat.width, dtype=np.int64)
    # int64 overflow wraps modulo 2^64, a multiple of t
    return ((share_bits & mask) @ weights) & mask


def b2a_convert(x_c, x_s, width: int, t: int, dealer: Dealer):
    """Both parties' steps run locally; used by tests and as a reference."""
    x_c = np.asarray(x_c, dtype=np.int64).ravel()
    x_s = np.asarray(x_s, dtype=np.int64).ravel()
    m_c, m_s = dealer.b2a_material(x_c.size, width, t)
    opened = b2a_open(x_c, m_c) ^ b2a_open(x_s, m_s)
    return b2a_finish(opened, m_c, t, True), b2a_finish(opened, m_s, t, False)

"""Domain types, fixed-point quantization and hyperparameter sets."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ParamError(ValueError):
    """Raised for inconsistent or out-of-range hyperparameters."""


def ceil_log2(x: int) -> int:
    if x < 1:
        raise ValueError("ceil_log2 needs a positive argument")
    return (x - 1).bit_length()


def default_pid_bits(n: int) -> int:
    """ID width: ceil(log2 n) rounded up to a whole byte."""
    bits = max(ceil_log2(max(n, 2)), 1)
    return 8 * math.ceil(bits / 8)


def distance_bits(b_c: int, d: int) -> int:
    return 2 * b_c + ceil_log2(d)


# --------------------------------------------------------------------------
# points and datasets


@dataclass(frozen=True)
class QuantizedPoint:
    coords: tuple[int, ...]
    id: int

    def check(self, b_c: int, b_pid: int) -> None:
        top = 1 << b_c
        if any(c < 0 or c >= top for c in self.coords):
            raise ValueError(f"coordinate outside [0, 2^{b_c})")
        if not 0 <= self.id < (1 << b_pid):
            raise ValueError(f"id {self.id} does not fit in {b_pid} bits")


@dataclass(frozen=True)
class QuantizedDataset:
    """n points of dimension d stored as an (n, d) integer array plus ids."""

    coords: np.ndarray
    ids: np.ndarray
    b_c: int
    b_pid: int

    def __post_init__(self) -> None:
        coords = np.ascontiguousarray(self.coords, dtype=np.int64)
        ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if coords.ndim != 2:
            raise ValueError("coords must be a 2-D array")
        if ids.shape != (coords.shape[0],):
            raise ValueError("one id per point required")
        if coords.size and (coords.min() < 0 or coords.max() >= (1 << self.b_c)):
            raise ValueError(f"coordinates must fit in {self.b_c} bits")
        if ids.size:
            if ids.min() < 0 or ids.max() >= (1 << self.b_pid):
                raise ValueError(f"ids must fit in {self.b_pid} bits")
            if np.unique(ids).size != ids.size:
                raise ValueError("ids must be distinct")
        coords.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_coords(cls, coords, b_c: int, ids=None, b_pid: int | None = None):
        coords = np.asarray(coords)
        n = coords.shape[0]
        if ids is None:
            ids = np.arange(n)
        if b_pid is None:
            b_pid = default_pid_bits(max(n, int(np.max(ids, initial=0)) + 1))
        return cls(coords, ids, b_c, b_pid)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def point(self, i: int) -> QuantizedPoint:
        return QuantizedPoint(tuple(int(c) for c in self.coords[i]), int(self.ids[i]))

    def norms(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.coords, self.coords)


# --------------------------------------------------------------------------
# quantization and distances


def quantize(raw, b_c: int, lo: float, hi: float) -> np.ndarray:
    """Map reals uniformly onto [0, 2^b_c - 1], rounding half up.

    Works elementwise on scalars, vectors or matrices.
    """
    if not hi > lo:
        raise ValueError("quantization needs hi > lo")
    if b_c < 1:
        raise ValueError("b_c must be at least 1")
    x = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite coordinate")
    top = (1 << b_c) - 1
    scaled = (x - lo) / (hi - lo) * top
    q = np.floor(scaled + 0.5)
    return np.clip(q, 0, top).astype(np.int64)


def quantize_dataset(raw, b_c: int, ids=None, lo=None, hi=None):
    """Quantize a matrix using the global min/max of all coordinates.

    Returns the dataset together with the (lo, hi) range, which the caller
    reuses for queries.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if lo is None:
        lo = float(raw.min())
    if hi is None:
        hi = float(raw.max())
    if hi <= lo:
        hi = lo + 1.0
    return QuantizedDataset.from_coords(quantize(raw, b_c, lo, hi), b_c, ids), (lo, hi)


def squared_distance(p, q) -> int:
    p = np.asarray(getattr(p, "coords", p), dtype=np.int64)
    q = np.asarray(getattr(q, "coords", q), dtype=np.int64)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    diff = p - q
    return int(diff @ diff)


def squared_distances(q, coords: np.ndarray) -> np.ndarray:
    """Exact squared distances from q to every row of coords."""
    q = np.asarray(q, dtype=np.int64)
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] != q.shape[0]:
        raise ValueError("dimension mismatch")
    diff = coords - q
    return np.einsum("ij,ij->i", diff, diff)


# --------------------------------------------------------------------------
# hyperparameters


_VECTOR_FIELDS = ("k_c", "u", "l")
_FLOAT_FIELDS = ("alpha",)


@dataclass(frozen=True)
class HyperParams:
    n: int
    d: int
    k_nn: int = 10
    T: int = 0
    k_c: tuple[int, ...] = ()
    m: int = 0
    u: tuple[int, ...] = ()
    u_all: int = 0
    l: tuple[int, ...] = ()
    alpha: float = 0.56
    s: int = 0
    l_s: int = 1
    b_c: int = 8
    b_d: int = 0
    b_cid: int = 0
    b_pid: int = 0
    r_c: int = 0
    r_p: int = 0
    N: int = 1 << 13
    t: int = 0

    def __post_init__(self) -> None:
        for name in _VECTOR_FIELDS:
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    @classmethod
    def create(cls, **kw) -> "HyperParams":
        """Build a parameter set, filling every derived field."""
        kw = dict(kw)
        d = kw["d"]
        b_c = kw.get("b_c", 8)
        kw.setdefault("b_d", distance_bits(b_c, d))
        kw.setdefault("t", 1 << kw["b_d"])
        k_c = tuple(kw.get("k_c", ()))
        kw.setdefault("T", len(k_c))
        kw.setdefault("u_all", sum(kw.get("u", ())))
        kw.setdefault("b_cid", ceil_log2(sum(k_c)) if k_c else 0)
        kw.setdefault("b_pid", default_pid_bits(kw["n"]))
        return cls(**kw)

    def validate(self) -> None:
        if self.n < 0 or self.d < 1:
            raise ParamError("need n >= 0 and d >= 1")
        if self.b_c < 1:
            raise ParamError("b_c must be positive")
        if self.b_d != distance_bits(self.b_c, self.d):
            raise ParamError(f"b_d must equal 2*b_c + ceil(log2 d) = {distance_bits(self.b_c, self.d)}")
        if self.t != 1 << self.b_d:
            raise ParamError("t must equal 2^b_d")
        if not (0 <= self.r_c <= self.b_d and 0 <= self.r_p <= self.b_d):
            raise ParamError("truncation widths must lie in [0, b_d]")
        if not 0 < self.alpha < 1:
            raise ParamError("alpha must lie in (0, 1)")
        if self.k_nn < 1:
            raise ParamError("k_nn must be positive")
        if not (len(self.k_c) == len(self.u) == len(self.l) == self.T):
            raise ParamError("k_c, u and l need exactly T entries")
        if self.u_all != sum(self.u):
            raise ParamError("u_all must equal sum(u)")
        if self.T:
            if self.m < 1:
                raise ParamError("clustering parameters need m >= 1")
            if self.b_cid != ceil_log2(sum(self.k_c)):
                raise ParamError("b_cid must equal ceil(log2 sum(k_c))")
            for kc, ui, li in zip(self.k_c, self.u, self.l):
                if not 1 <= ui <= kc:
                    raise ParamError(f"u={ui} must lie in [1, k_c={kc}]")
                if li < ui:
                    raise ParamError(f"l={li} must be at least u={ui}")
        if self.b_pid < 1:
            raise ParamError("b_pid must be positive")
        if self.N < 1 or self.N & (self.N - 1):
            raise ParamError("ring dimension N must be a power of two")

    def maxval(self, r: int) -> int:
        """Largest truncated value; doubles as the top-k sentinel."""
        return (1 << (self.b_d - r)) - 1

    def replace(self, **kw) -> "HyperParams":
        """Copy with changes, recomputing derived fields that were not given."""
        base = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        derived = {"b_d", "t", "u_all", "b_cid", "T"}
        base.update(kw)
        for name in derived - set(kw):
            base.pop(name)
        if "b_pid" not in kw and "n" in kw:
            base.pop("b_pid")
        return HyperParams.create(**base)

    # config text ------------------------------------------------------------

    def to_config(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in _VECTOR_FIELDS:
                v = ",".join(str(x) for x in v)
            elif f.name in _FLOAT_FIELDS:
                v = repr(float(v))
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text: str) -> "HyperParams":
        names = {f.name for f in dataclasses.fields(cls)}
        kw: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParamError(f"line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in names:
                raise ParamError(f"line {lineno}: unknown key {key!r}")
            if key in _VECTOR_FIELDS:
                kw[key] = tuple(int(v) for v in value.split(",") if v.strip())
            elif key in _FLOAT_FIELDS:
                kw[key] = float(value)
            else:
                kw[key] = int(value)
        if "n" not in kw or "d" not in kw:
            raise ParamError("config needs at least n and d")
        return cls.create(**kw)

    def digest(self) -> str:
        return hashlib.sha256(self.to_config().encode()).hexdigest()


def load_params(spec: str | Path) -> HyperParams:
    """Resolve a preset tag or a config file path."""
    text = str(spec)
    if text in PRESETS or text.removesuffix("-ls") in PRESETS:
        if text.endswith("-ls"):
            return load_preset(text[:-3], algorithm="linear")
        return load_preset(text)
    return HyperParams.from_config(Path(spec).read_text())


# --------------------------------------------------------------------------
# published presets


@dataclass(frozen=True)
class _Preset:
    n: int
    d: int
    b_c: int
    linear: dict = field(default_factory=dict)
    clustering: dict = field(default_factory=dict)


PRESETS: dict[str, _Preset] = {
    "sift": _Preset(
        n=1_000_000, d=128, b_c=8,
        linear=dict(l_s=8334, r_p=8),
        clustering=dict(
            l_s=262, r_p=8, T=4, k_c=(50810, 25603, 9968, 4227), m=20,
            u=(50, 31, 19, 13), s=31412, l=(458, 270, 178, 84), r_c=5, alpha=0.56,
        ),
    ),
    "deep1b-1m": _Preset(
        n=1_000_000, d=96, b_c=8,
        linear=dict(l_s=8334, r_p=8),
        clustering=dict(
            l_s=210, r_p=8, T=5, k_c=(44830, 25867, 11795, 5607, 2611), m=22,
            u=(46, 31, 19, 13, 7), s=25150, l=(458, 270, 178, 84, 84), r_c=5, alpha=0.56,
        ),
    ),
    "deep1b-10m": _Preset(
        n=10_000_000, d=96, b_c=8,
        linear=dict(l_s=83, r_p=9),
        clustering=dict(
            l_s=423, r_p=8, T=6, k_c=(209727, 107417, 39132, 14424, 5796, 2394), m=48,
            u=(88, 46, 25, 13, 7, 7), s=50649, l=(924, 458, 178, 93, 84, 84), r_c=5,
            alpha=0.56,
        ),
    ),
    "amazon": _Preset(
        n=1 << 20, d=50, b_c=9,
        linear=dict(l_s=8739, r_p=7),
        clustering=dict(
            l_s=84, r_p=6, T=5, k_c=(41293, 24143, 9708, 3516, 1156), m=25,
            u=(37, 37, 22, 10, 7), s=8228, l=(364, 364, 178, 84, 84), r_c=4, alpha=0.56,
        ),
    ),
}


def load_preset(name: str, algorithm: str = "clustering") -> HyperParams:
    """Published per-dataset hyperparameters (k_nn = 10, N = 2^13)."""
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ParamError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if algorithm not in ("clustering", "linear"):
        raise ParamError("algorithm must be 'clustering' or 'linear'")
    extra = preset.clustering if algorithm == "clustering" else preset.linear
    return HyperParams.create(n=preset.n, d=preset.d, b_c=preset.b_c, k_nn=10, N=1 << 13, **extra)


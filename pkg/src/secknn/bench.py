"""Datasets, accuracy measurement, Monte Carlo checks and cost reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import HyperParams
from .doram import prf_table_rows
from .network import CSV_FIELDS, build_network
from .selection import approx_topk, selection_plan

# --------------------------------------------------------------------------
# synthetic data


def gen_synthetic(n: int, d: int, blobs: int = 10, spread: float = 1.0, seed: int = 0,
                  separation: float = 10.0):
    """Gaussian blobs; returns ``(points float32 (n, d), labels int32 (n,))``.

    Centers are drawn one by one in a cube and kept only if they lie at least
    ``separation`` blob radii (``spread * sqrt(d)``) from every earlier center.
    Blob sizes differ by at most one.
    """
    if n < 0 or d < 1 or blobs < 1 or spread <= 0:
        raise ValueError("need n >= 0, d >= 1, blobs >= 1 and spread > 0")
    rng = np.random.default_rng(seed)
    radius = spread * math.sqrt(d)
    min_gap = separation * radius
    side = max(min_gap * 2.0 * blobs ** (1.0 / d), radius)
    centers = np.empty((blobs, d))
    placed = 0
    tries = 0
    while placed < blobs:
        cand = rng.uniform(0.0, side, d)
        if placed == 0 or np.min(np.linalg.norm(centers[:placed] - cand, axis=1)) >= min_gap:
            centers[placed] = cand
            placed += 1
        tries += 1
        if tries > 1000 * blobs:
            side *= 1.5
            tries = 0
    labels = np.arange(n, dtype=np.int32) % blobs
    rng.shuffle(labels)
    points = centers[labels] + rng.normal(0.0, spread, (n, d))
    return points.astype(np.float32), labels


def sample_queries(points, labels, count: int, spread: float, seed: int) -> np.ndarray:
    """Fresh draws from the same blobs: a random point's blob center plus noise."""
    rng = np.random.default_rng(seed)
    blobs = np.unique(labels)
    centers = np.stack([points[labels == b].mean(axis=0) for b in blobs])
    pick = rng.integers(0, blobs.size, count)
    return (centers[pick] + rng.normal(0.0, spread, (count, points.shape[1]))).astype(np.float32)


# --------------------------------------------------------------------------
# .fvecs / .bvecs / .ivecs

_FORMATS = {"fvecs": np.dtype("<f4"), "bvecs": np.dtype("u1"), "ivecs": np.dtype("<i4")}


class VecsError(ValueError):
    pass


def _fmt(fmt: str | None, path) -> str:
    fmt = fmt or Path(path).suffix.lstrip(".")
    if fmt not in _FORMATS:
        raise VecsError(f"unknown vector format {fmt!r}; use one of {sorted(_FORMATS)}")
    return fmt


def write_vecs(path, arr, fmt: str | None = None) -> None:
    fmt = _fmt(fmt, path)
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise VecsError("write_vecs needs a 2-D array")
    n, d = arr.shape
    dt = _FORMATS[fmt]
    rec = np.empty((n, 4 + d * dt.itemsize), dtype=np.uint8)
    rec[:, :4] = np.full((n, 1), d, dtype="<i4").view(np.uint8)
    rec[:, 4:] = np.ascontiguousarray(arr.astype(dt)).view(np.uint8).reshape(n, -1)
    Path(path).write_bytes(rec.tobytes())


def _scan_records(raw: bytes, itemsize: int) -> None:
    """Walk the file record by record to name the first bad one."""
    pos, idx, first = 0, 0, None
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise VecsError(f"record {idx}: truncated length field")
        d = int(np.frombuffer(raw, dtype="<i4", count=1, offset=pos)[0])
        if first is None:
            first = d
        elif d != first:
            raise VecsError(f"record {idx}: dimension {d} differs from {first}")
        if d < 0:
            raise VecsError(f"record {idx}: negative dimension")
        end = pos + 4 + d * itemsize
        if end > len(raw):
            raise VecsError(f"record {idx}: truncated (needs {end - pos} bytes, {len(raw) - pos} left)")
        pos, idx = end, idx + 1


def load_vecs(path, fmt: str | None = None) -> np.ndarray:
    fmt = _fmt(fmt, path)
    dt = _FORMATS[fmt]
    raw = Path(path).read_bytes()
    if not raw:
        return np.empty((0, 0), dtype=dt)
    d = int(np.frombuffer(raw, dtype="<i4", count=1)[0])
    rec = 4 + d * dt.itemsize
    if d < 0 or len(raw) % rec:
        _scan_records(raw, dt.itemsize)
        raise VecsError("inconsistent records")
    n = len(raw) // rec
    table = np.frombuffer(raw, dtype=np.uint8).reshape(n, rec)
    dims = table[:, :4].copy().view("<i4").ravel()
    if (dims != d).any():
        bad = int(np.flatnonzero(dims != d)[0])
        raise VecsError(f"record {bad}: dimension {int(dims[bad])} differs from {d}")
    return table[:, 4:].copy().view(dt).reshape(n, d).astype(dt.newbyteorder("="))


# --------------------------------------------------------------------------
# accuracy


def eval_accuracy(results, truth, k: int) -> float:
    """Mean fraction of the true ``k`` neighbours present in each result."""
    results, truth = np.atleast_2d(results), np.atleast_2d(truth)
    if len(results) != len(truth):
        raise ValueError("one result row per ground-truth row required")
    if len(results) == 0:
        return 1.0
    hits = [len(set(map(int, r[:k])) & set(map(int, g[:k]))) / k for r, g in zip(results, truth)]
    return float(np.mean(hits))


@dataclass
class EvalReport:
    dataset: str
    n: int
    d: int
    k_nn: int
    accuracy: float
    stages: list = field(default_factory=list)
    comparators: dict = field(default_factory=dict)
    seconds: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")

    def summary(self) -> str:
        lines = [f"{self.dataset}: n={self.n} d={self.d} k={self.k_nn} accuracy={self.accuracy:.4f} "
                 f"time={self.seconds:.2f}s"]
        for row in self.stages:
            lines.append(f"  {row['stage']:<9} bytes={row['bytes']:<10} rounds={row['rounds']}")
        for name, count in self.comparators.items():
            lines.append(f"  comparators[{name}]={count}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# Monte Carlo checks of the bin-min guarantees


@dataclass
class TheoremReport:
    which: str
    n: int
    k: int
    delta: float
    l: int
    trials: int
    statistic: float
    threshold: float
    passed: bool
    samples: np.ndarray

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["which", "n", "k", "delta", "l", "trials", "statistic", "threshold", "passed"])
        w.writerow([self.which, self.n, self.k, self.delta, self.l, self.trials,
                    f"{self.statistic:.6f}", f"{self.threshold:.6f}", int(self.passed)])
        w.writerow([])
        w.writerow(["trial", "value"])
        for i, v in enumerate(self.samples.tolist()):
            w.writerow([i, v])
        return buf.getvalue()


def bins_for(which: str, k: int, delta: float) -> int:
    if which == "expectation":
        return math.ceil(k / delta - 1e-9)
    if which == "whp":
        return math.ceil(k * k / delta - 1e-9)
    raise ValueError("which must be 'expectation' or 'whp'")


def run_theorem_suite(which: str, n: int, k: int, delta: float, trials: int, seed: int = 0,
                      slack: float = 0.05) -> TheoremReport:
    """Bin-min selection over random orders of ``n`` distinct values.

    ``expectation``: mean overlap with the exact top-k must reach ``(1-delta)k``.
    ``whp``: the exact set must come out in at least ``1-delta-slack`` of trials.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    l = bins_for(which, k, delta)
    if l > n:
        raise ValueError(f"l = {l} bins exceed n = {n}")
    rng = np.random.default_rng(seed)
    ids = np.arange(n)
    exact = set(range(k))
    samples = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        values = rng.permutation(n)
        _, out = approx_topk(values, ids, k, l)
        got = len(exact & set(values[out].tolist()))
        samples[i] = got if which == "expectation" else int(got == k)
    if which == "expectation":
        stat, thr = float(samples.mean()), (1 - delta) * k
    else:
        stat, thr = float(samples.mean()), 1 - delta - slack
    return TheoremReport(which, n, k, delta, l, trials, stat, thr, stat >= thr, samples)


# --------------------------------------------------------------------------
# cost reports


def _pair(n: int, k: int, l, w: int):
    naive = build_network("naive", n, k, None, w)
    kind, bins = selection_plan(n, k, l)
    return naive, build_network("approx", n, k, bins, w) if kind == "approx" else naive


def selection_networks(params: HyperParams, algorithm: str):
    """Networks a query runs, as ``(label, naive_equivalent, chosen)`` triples."""
    out = []
    w_p = params.b_d - params.r_p
    if algorithm == "linear":
        out.append(("scan",) + _pair(params.n, params.k_nn, params.l_s, w_p))
        return out
    w_c = params.b_d - params.r_c
    for i, (kc, u, l) in enumerate(zip(params.k_c, params.u, params.l)):
        out.append((f"centers{i}",) + _pair(kc, u, l, w_c))
    cand = params.u_all * params.m
    net = build_network("naive", cand, params.k_nn, None, w_p)
    out.append(("clusters", net, net))
    if params.s:
        out.append(("stash",) + _pair(params.s, params.k_nn, params.l_s, w_p))
    final = 2 * params.k_nn if params.s else params.k_nn
    net = build_network("naive", final, params.k_nn, None, w_p)
    out.append(("final", net, net))
    return out


def report_costs(params: HyperParams, algorithm: str = "linear", n: int | None = None) -> str:
    """CSV of comparator and AND counts (naive vs approx) followed by the PRF table."""
    if n is not None and n != params.n:
        params = params.replace(n=n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("part",) + CSV_FIELDS)
    for label, naive, chosen in selection_networks(params, algorithm):
        w.writerow((label,) + tuple(naive.row().values()))
        if chosen is not naive:
            w.writerow((label,) + tuple(chosen.row().values()))
    w.writerow([])
    w.writerow(["prf", "size", "bits", "and_gates", "and_per_bit"])
    for row in prf_table_rows():
        w.writerow([row["prf"], row["size"], row["bits"], row["and_gates"], row["and_per_bit"]])
    return buf.getvalue()


def grid_search(evaluate, grid: dict, cost, target: float = 0.9):
    """Cheapest grid point whose accuracy reaches ``target``.

    ``evaluate(**point) -> accuracy`` and ``cost(**point) -> number``. Returns
    ``(point, accuracy, cost)`` or ``None``. This is an exhaustive sweep, not
    a tuned optimiser.
    """
    keys = sorted(grid)
    best = None
    for combo in np.array(np.meshgrid(*[grid[k] for k in keys], indexing="ij")).reshape(len(keys), -1).T:
        point = {k: type(grid[k][0])(v) for k, v in zip(keys, combo)}
        c = cost(**point)
        if best is not None and c >= best[2]:
            continue
        acc = evaluate(**point)
        if acc >= target:
            best = (point, acc, c)
    return best

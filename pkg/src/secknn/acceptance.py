"""End-to-end acceptance checks, shared by the test suite and ``secknn selftest``.

Every check returns a :class:`Criterion` carrying a pass flag and a one-line
detail. Expensive fixtures (synthetic datasets, cluster indexes) are cached
per process.
"""

from __future__ import annotations

import contextlib
import functools
import io
import math
import time
from dataclasses import dataclass

import numpy as np

from .bench import eval_accuracy, gen_synthetic, run_theorem_suite, sample_queries
from .clustering import balance_clusters, max_levels
from .core import HyperParams, quantize, quantize_dataset
from .doram import doram_init, doram_read, dpf_eval_full, dpf_gen, multi_read, new_key
from .engine import brute_force_batch, plaintext_clustering_knns, plaintext_linear_scan
from .index import build_index
from .network import build_network, evaluate
from .packing import encode_points, encode_query, packed_inner_products
from .protocol import run_clustering, run_linear_scan
from .selection import approx_topk, naive_topk


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:>2} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, name: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*a, **kw) -> Criterion:
            t0 = time.perf_counter()
            passed, detail = fn(*a, **kw)
            return Criterion(number, name, bool(passed), detail, time.perf_counter() - t0)
        return run
    return wrap


# --------------------------------------------------------------------------
# 1-2: bin-min guarantees


@_timed(1, "bin-min expectation")
def check_expectation(trials: int = 200, seed: int = 1):
    rep = run_theorem_suite("expectation", 100_000, 50, 0.1, trials, seed)
    ok = rep.passed and rep.l == 500 and rep.trials >= 200
    return ok, f"l={rep.l} mean overlap {rep.statistic:.2f} >= {rep.threshold:.1f} over {rep.trials} orders"


@_timed(2, "bin-min exact output whp")
def check_whp(trials: int = 500, seed: int = 2):
    rep = run_theorem_suite("whp", 100_000, 10, 0.1, trials, seed)
    ok = rep.passed and rep.l == 1000 and rep.trials >= 500 and rep.statistic >= 0.85
    return ok, f"l={rep.l} exact frequency {rep.statistic:.3f} >= 0.85 over {rep.trials} orders"


# --------------------------------------------------------------------------
# 3-4: selection networks


def network_grid():
    for n in (1000, 10_000):
        for k in (1, 5, 10):
            for l in sorted({k, 10 * k, n}):
                yield n, k, l


@_timed(3, "selection-network equivalence")
def check_networks(instances: int = 10_000, seed: int = 3, width: int = 12):
    rng = np.random.default_rng(seed)
    cells = list(network_grid())
    per = math.ceil(instances / len(cells))
    mismatches = total = 0
    for n, k, l in cells:
        vals = rng.integers(0, 1 << width, (per, n))
        ids = np.stack([rng.permutation(n) for _ in range(per)])
        naive = build_network("naive", n, k, None, width)
        approx = build_network("approx", n, k, l, width)
        nv, ni = evaluate(naive, vals, ids)
        av, ai = evaluate(approx, vals, ids)
        for b in range(per):
            ev, ei = naive_topk(vals[b], ids[b], k, (1 << width) - 1)
            fv, fi = approx_topk(vals[b], ids[b], k, l, (1 << width) - 1)
            mismatches += not (np.array_equal(ev, nv[b]) and np.array_equal(ei, ni[b]))
            mismatches += not (np.array_equal(fv, av[b]) and np.array_equal(fi, ai[b]))
        total += per
    return mismatches == 0, f"{total} instances x 2 networks over {len(cells)} grid cells, {mismatches} mismatches"


@_timed(4, "gate accounting")
def check_gate_counts():
    bad = []
    for n, k, l in network_grid():
        if build_network("naive", n, k).comparators != n * k:
            bad.append(("naive", n, k))
        if build_network("approx", n, k, l).comparators != (n - l) + l * k:
            bad.append(("approx", n, k, l))
    naive = build_network("naive", 10 ** 6, 10)
    approx = build_network("approx", 10 ** 6, 10, 1000)
    ratio = approx.comparators / naive.comparators
    ok = not bad and naive.comparators == 10 ** 7 and approx.comparators == 1_009_000 and abs(ratio - 0.1009) < 1e-9
    return ok, f"naive {naive.comparators}, approx {approx.comparators}, ratio {ratio:.4f}, formula violations {len(bad)}"


# --------------------------------------------------------------------------
# 5: packing


@_timed(5, "packing identity")
def check_packing(batches: int = 100, seed: int = 5, N: int = 1 << 13, d: int = 128, t: int = 1 << 23):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(batches):
        q = rng.integers(0, 256, d)
        pts = rng.integers(0, 256, (N, d))
        h = packed_inner_products(encode_query(q, N, t), encode_points(pts, N, t))
        want = (pts @ q) % t
        bad += int(np.count_nonzero(h.coeffs != want))
    return bad == 0, f"{batches} batches, N={N}, d={d}, t=2^{t.bit_length() - 1}, {bad} wrong coefficients"


# --------------------------------------------------------------------------
# 6: DPF and ORAM


@_timed(6, "DPF / ORAM reads")
def check_doram(seed: int = 6):
    rng = np.random.default_rng(seed)
    depth = 12
    n = 1 << depth
    # exhaustive: every programmable index, each checked over the full domain
    roots_bad = 0
    for i in range(n):
        pair = dpf_gen(i, depth, rng)
        diff = dpf_eval_full(pair.a) ^ dpf_eval_full(pair.b)
        roots_bad += int(diff.sum() != 1 or diff[i] != 1)
    db = rng.integers(0, 256, (n, 48), dtype=np.uint8)
    ka, kb = new_key(rng), new_key(rng)
    masked = doram_init(db, ka, kb)
    read_bad = 0
    for i in rng.integers(0, n, 1000).tolist():
        ya, yb = doram_read(masked, dpf_gen(i, depth, rng), ka, kb, rng)
        read_bad += int(not np.array_equal(ya ^ yb, db[i]))
    idx = rng.integers(0, n, 64)
    share_a = rng.integers(0, n, 64)
    res = multi_read(masked, share_a, (idx - share_a) % n, ka, kb, seed)
    multi_ok = np.array_equal(res.shares_a ^ res.shares_b, db[idx])
    limit = depth + 2
    ok = roots_bad == 0 and read_bad == 0 and multi_ok and res.rounds <= limit
    return ok, (f"indicator failures {roots_bad}/{n} at depth {depth}; read failures {read_bad}/1000; "
                f"64-read batch correct={multi_ok} in {res.rounds} rounds (limit {limit})")


# --------------------------------------------------------------------------
# synthetic fixtures


@functools.lru_cache(maxsize=None)
def synthetic_case(n: int, d: int, blobs: int, queries: int, seed: int):
    pts, labels = gen_synthetic(n, d, blobs=blobs, spread=1.0, seed=seed, separation=3.0)
    ds, (lo, hi) = quantize_dataset(pts, 8)
    qs = quantize(sample_queries(pts, labels, queries, 1.0, seed + 1), 8, lo, hi).astype(np.int64)
    return ds, qs


def desk_linear_params(n: int, d: int) -> HyperParams:
    return HyperParams.create(n=n, d=d, k_nn=10, b_c=8, l_s=min(n, 1000), r_p=4)


def desk_probes(k_c) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """About one percent of every group plus one, ten bins per probe."""
    u = tuple(min(k, k // 100 + 1) for k in k_c)
    l = tuple(min(k, 10 * x) for k, x in zip(k_c, u))
    return u, l


@functools.lru_cache(maxsize=None)
def desk_cluster_index(n: int, d: int, blobs: int, queries: int, seed: int, m: int, s: int):
    ds, _ = synthetic_case(n, d, blobs, queries, seed)
    base = HyperParams.create(n=n, d=d, k_nn=10, b_c=8, m=m, s=s, l_s=300, r_p=4, r_c=4)
    index = build_index(ds, base, np.random.default_rng(seed))
    u, l = desk_probes(index.params.k_c)
    return index.with_probes(u, l)


# --------------------------------------------------------------------------
# 7: protocol equals plaintext


@_timed(7, "protocol matches plaintext")
def check_protocol_equivalence(queries: int = 100, seed: int = 7):
    n, d = 1 << 14, 32
    ds, qs = synthetic_case(n, d, 160, queries, seed)
    params = desk_linear_params(n, d)
    seeds = list(range(1000, 1000 + queries))
    lin = run_linear_scan(qs, ds, params, seeds, session_seed=seed)
    lin_bad = sum(not np.array_equal(lin.ids[i], plaintext_linear_scan(qs[i], ds, params, s))
                  for i, s in enumerate(seeds))
    index = desk_cluster_index(n, d, 160, queries, seed, 64, 600)
    cl = run_clustering(qs, index, seeds, session_seed=seed)
    cl_bad = sum(not np.array_equal(cl.ids[i], plaintext_clustering_knns(qs[i], index, seed=s))
                 for i, s in enumerate(seeds))
    return lin_bad == 0 and cl_bad == 0, (f"n={n}: linear {queries - lin_bad}/{queries}, "
                                          f"clustering {queries - cl_bad}/{queries} identical "
                                          f"(T={index.T}, s={index.s})")


# --------------------------------------------------------------------------
# 8: end-to-end accuracy


@_timed(8, "end-to-end 10-NN accuracy")
def check_accuracy(queries: int = 100, seed: int = 8, bar: float = 0.9):
    n, d = 100_000, 32
    ds, qs = synthetic_case(n, d, 1000, queries, seed)
    truth = brute_force_batch(qs, ds, 10)
    seeds = list(range(queries))
    params = desk_linear_params(n, d)
    lin = run_linear_scan(qs, ds, params, seeds, session_seed=seed)
    index = desk_cluster_index(n, d, 1000, queries, seed, 128, 3000)
    cl = run_clustering(qs, index, seeds, session_seed=seed)
    acc_l = eval_accuracy(lin.ids, truth, 10)
    acc_c = eval_accuracy(cl.ids, truth, 10)
    return acc_l >= bar and acc_c >= bar, (f"n={n} d={d} {queries} queries: linear {acc_l:.3f}, "
                                           f"clustering {acc_c:.3f} (bar {bar})")


# --------------------------------------------------------------------------
# 9: balanced clustering


@_timed(9, "balanced clustering")
def check_balance(datasets: int = 10, n: int = 10_000, m: int = 20, alpha: float = 0.56, seed: int = 9):
    limit = math.ceil(math.log(n) / math.log(1 / alpha)) + 5
    worst_size = worst_groups = 0
    coverage_ok = True
    for r in range(datasets):
        pts, _ = gen_synthetic(n, 16, blobs=20, spread=1.0, seed=seed * 100 + r, separation=2.0)
        groups = balance_clusters(pts, m, alpha, np.random.default_rng(r))
        members = np.concatenate([mem for g in groups for mem in g.members])
        coverage_ok &= members.size == n and np.array_equal(np.sort(members), np.arange(n))
        worst_size = max(worst_size, max(len(mem) for g in groups for mem in g.members))
        worst_groups = max(worst_groups, len(groups))
    ok = coverage_ok and worst_size <= m and worst_groups <= limit and max_levels(n, alpha) <= limit
    return ok, (f"{datasets} datasets: largest cluster {worst_size} (m={m}), exact coverage={coverage_ok}, "
                f"most groups {worst_groups} (limit {limit})")


# --------------------------------------------------------------------------
# 10: PRF cost table through the CLI


@_timed(10, "PRF cost table")
def check_prf_table():
    from .cli import main

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(["costs", "--params", "sift-ls"])
    found = {}
    for line in buf.getvalue().splitlines():
        parts = line.split(",")
        if len(parts) == 5 and parts[0] in ("kreyvium", "aes-128"):
            found.setdefault(parts[0], []).append(int(parts[3]))
    want = {"kreyvium": [3840, 69810, 150912], "aes-128": [5000, 865000, 1920000]}
    return code == 0 and found == want, f"rows {found}"


CHECKS = (check_expectation, check_whp, check_networks, check_gate_counts, check_packing,
          check_doram, check_protocol_equivalence, check_accuracy, check_balance, check_prf_table)


def run_all(only=None, echo=print) -> list[Criterion]:
    out = []
    for number, check in enumerate(CHECKS, start=1):
        if only and number not in only:
            continue
        res = check()
        out.append(res)
        if echo is not None:
            echo(res.line())
    return out

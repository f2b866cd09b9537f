"""Command-line entry point: ``secknn <subcommand> ...``.

Exit codes: 0 success, 1 runtime error, 2 a check or acceptance criterion failed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import socket
import sys
import threading
import time
from pathlib import Path

import numpy as np

from .core import HyperParams, ParamError, QuantizedDataset, load_params, quantize, quantize_dataset
from .index import ClusterIndex, build_index

log = logging.getLogger("secknn")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class CheckFailed(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _ints(text: str | None):
    return None if text is None else tuple(int(x) for x in text.split(",") if x.strip())


def _range(text: str | None):
    if text is None:
        return None
    lo, hi = (float(x) for x in text.split(","))
    return lo, hi


def _load_raw(path, fmt):
    from .bench import load_vecs

    return load_vecs(path, fmt)


def _is_index(path) -> bool:
    with open(path, "rb") as fh:
        from .index import MAGIC

        return fh.read(len(MAGIC)) == MAGIC


def _dataset(args, b_c: int):
    raw = _load_raw(args.data, args.format)
    rng = _range(getattr(args, "range", None))
    lo, hi = rng if rng else (None, None)
    ds, (lo, hi) = quantize_dataset(raw, b_c, lo=lo, hi=hi)
    log.info("quantized %d points of dimension %d with range [%g, %g]", ds.n, ds.d, lo, hi)
    return ds, (lo, hi)


def _linear_params(args, ds: QuantizedDataset) -> HyperParams:
    params = load_params(args.params) if args.params else HyperParams.create(n=ds.n, d=ds.d, l_s=ds.n)
    if params.d != ds.d:
        raise ParamError(f"parameters are for d={params.d}, data has d={ds.d}")
    kw = {}
    if params.n != ds.n:
        kw["n"] = ds.n
    if params.l_s > ds.n:
        kw["l_s"] = ds.n
    if args.k:
        kw["k_nn"] = args.k
    return params.replace(**kw) if kw else params


def _queries(path, fmt, b_c: int, rng):
    raw = _load_raw(path, fmt)
    if rng is None:
        lo, hi = float(raw.min()), float(raw.max())
        log.warning("no --range given; quantizing queries with their own range [%g, %g]", lo, hi)
    else:
        lo, hi = rng
    return quantize(raw, b_c, lo, hi).astype(np.int64)


def _write_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    from .bench import gen_synthetic, sample_queries, write_vecs

    pts, labels = gen_synthetic(args.n, args.d, args.blobs, args.spread, args.seed, args.separation)
    write_vecs(args.out, pts, "fvecs")
    if args.labels:
        write_vecs(args.labels, labels.reshape(-1, 1), "ivecs")
    if args.queries_out:
        qs = sample_queries(pts, labels, args.num_queries, args.spread, args.seed + 1)
        write_vecs(args.queries_out, qs, "fvecs")
    print(f"wrote {args.n} points of dimension {args.d} to {args.out}")
    return EXIT_OK


def cmd_build_index(args) -> int:
    if args.params:
        base = load_params(args.params)
        b_c = base.b_c
    else:
        base, b_c = None, 8
    ds, (lo, hi) = _dataset(args, b_c)
    if base is None:
        base = HyperParams.create(n=ds.n, d=ds.d, m=args.m or 20, s=args.s or 0)
    else:
        base = base.replace(n=ds.n, d=ds.d)
    kw = {}
    if args.m:
        kw["m"] = args.m
    if args.s is not None:
        kw["s"] = args.s
    if args.k:
        kw["k_nn"] = args.k
    if kw:
        base = base.replace(**kw)
    t0 = time.perf_counter()
    index = build_index(ds, base, np.random.default_rng(args.seed), u=_ints(args.u), l=_ints(args.l))
    index.save(args.out)
    cfg = Path(str(args.out) + ".cfg")
    cfg.write_text(index.params.to_config())
    print(f"built index in {time.perf_counter() - t0:.1f}s: T={index.T} k_c={list(index.k_c)} "
          f"s={index.s} m={index.m}")
    print(f"parameters written to {cfg}; quantization range {lo!r},{hi!r}")
    return EXIT_OK


def _server_data(args):
    """(kind, params, data) for the server role."""
    if args.data is None:
        raise ParamError("the server needs --data (vector file or index)")
    if _is_index(args.data):
        index = ClusterIndex.load(args.data)
        params = index.params
        if args.params:
            params = load_params(args.params)
            index.check_params(params)
        return "clustering", params, index
    b_c = load_params(args.params).b_c if args.params else 8
    ds, _ = _dataset(args, b_c)
    return "linear", _linear_params(args, ds), ds


def _listen(host: str, port: int) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(4)
    return srv


def _dealer_loop(host: str, port: int, sessions: int, seed: int, ready: threading.Event | None = None) -> None:
    from .protocol import CLIENT, DEALER, SERVER, dealer_session
    from .transport import ProtocolError, SocketChannel, TransportError

    srv = _listen(host, port)
    if ready is not None:
        ready.set()
    log.info("dealer listening on %s:%d", host, port)
    rng = np.random.default_rng(seed)
    done = 0
    try:
        while not sessions or done < sessions:
            links, hellos = {}, {}
            try:
                while len(links) < 2:
                    conn, _ = srv.accept()
                    ch = SocketChannel(conn, DEALER)
                    msg = ch.recv("handshake", dealer=True)
                    role = msg.get("role")
                    if role not in (CLIENT, SERVER) or role in links:
                        ch.abort(f"unexpected hello from role {role!r}")
                        ch.close()
                        continue
                    links[role], hellos[role] = ch, msg
                served = dealer_session(links, rng, hellos)
                log.info("dealer session finished after %d queries", served)
            except (ProtocolError, TransportError) as exc:
                log.warning("dealer session failed: %s", exc)
            finally:
                for ch in links.values():
                    ch.close()
            done += 1
    finally:
        srv.close()


def _server_loop(host: str, port: int, args, sessions: int, ready: threading.Event | None = None) -> None:
    from .protocol import CLIENT, DEALER, SERVER, server_session
    from .transport import ProtocolError, SocketChannel, TransportError, connect

    kind, params, data = _server_data(args)
    srv = _listen(host, port)
    if ready is not None:
        ready.set()
    print(f"server ({kind}) listening on {host}:{port}, dealer at {host}:{port + 1}", flush=True)
    rng = np.random.default_rng(args.seed)
    done = 0
    try:
        while not sessions or done < sessions:
            conn, peer = srv.accept()
            links = {CLIENT: SocketChannel(conn, SERVER), DEALER: connect(host, port + 1, SERVER)}
            try:
                served = server_session(links, params, kind, data, rng)
                log.info("session with %s served %d queries", peer, served)
            except (ProtocolError, TransportError) as exc:
                log.warning("session with %s failed: %s", peer, exc)
            finally:
                for ch in links.values():
                    ch.close()
            done += 1
    finally:
        srv.close()


def cmd_serve(args) -> int:
    from .transport import parse_addr

    host, port = parse_addr(args.addr)
    if args.role == "dealer":
        _dealer_loop(host, port + 1, args.sessions, args.seed)
    elif args.role == "server":
        _server_loop(host, port, args, args.sessions)
    else:
        ready = threading.Event()
        th = threading.Thread(target=_dealer_loop, args=(host, port + 1, args.sessions, args.seed + 1, ready),
                              daemon=True)
        th.start()
        ready.wait(10)
        _server_loop(host, port, args, args.sessions)
        th.join(timeout=30)
    return EXIT_OK


def cmd_query(args) -> int:
    from .protocol import CLIENT, DEALER, SERVER, client_session
    from .transport import connect, parse_addr

    if not args.params or not args.queries:
        raise ParamError("query needs --params (same as the server's) and --queries")
    params = load_params(args.params)
    if args.n:
        params = params.replace(n=args.n, l_s=min(params.l_s, args.n))
    if args.k:
        params = params.replace(k_nn=args.k)
    kind = "clustering" if params.T else "linear"
    qs = _queries(args.queries, args.format, params.b_c, _range(args.range))
    host, port = parse_addr(args.addr)
    links = {SERVER: connect(host, port, CLIENT), DEALER: connect(host, port + 1, CLIENT)}
    rows = []

    def record(i, ids, tr):
        for row in tr.rows():
            rows.append(dict(query=i, **row))

    try:
        ids = client_session(links, params, kind, qs, np.random.default_rng(args.seed), record)
    finally:
        for ch in links.values():
            ch.close()
    out = "\n".join(",".join(str(int(x)) for x in row) for row in ids) + "\n"
    _emit(out, args.out)
    if args.transcript:
        _write_csv(args.transcript, rows)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .bench import EvalReport, eval_accuracy, selection_networks
    from .engine import brute_force_batch, plaintext_clustering_knns, plaintext_linear_scan
    from .protocol import run_clustering, run_linear_scan

    if args.index:
        index = ClusterIndex.load(args.index)
        params = index.params
        if args.k:
            index = index.with_probes(params.u, params.l, k_nn=args.k)
            params = index.params
        if args.data is None:
            raise ParamError("eval needs --data for the ground truth")
        ds, rng = _dataset(args, params.b_c)
        kind = "clustering"
    else:
        b_c = load_params(args.params).b_c if args.params else 8
        ds, rng = _dataset(args, b_c)
        params = _linear_params(args, ds)
        kind = "linear"
    if args.queries is None:
        raise ParamError("eval needs --queries")
    qs = _queries(args.queries, args.format, params.b_c, rng)
    if args.limit:
        qs = qs[: args.limit]
    truth = brute_force_batch(qs, ds, params.k_nn)
    seeds = [args.seed + i for i in range(len(qs))]
    t0 = time.perf_counter()
    stages = []
    if args.mode == "plaintext":
        if kind == "linear":
            ids = np.stack([plaintext_linear_scan(q, ds, params, s) for q, s in zip(qs, seeds)])
        else:
            ids = np.stack([plaintext_clustering_knns(q, index, params, s) for q, s in zip(qs, seeds)])
    else:
        run = (run_linear_scan(qs, ds, params, seeds, args.seed) if kind == "linear"
               else run_clustering(qs, index, seeds, params, args.seed))
        ids = run.ids
        totals: dict = {}
        for tr in run.transcripts:
            for row in tr.rows():
                agg = totals.setdefault(row["stage"], dict(stage=row["stage"], bytes=0, rounds=0, seconds=0.0))
                agg["bytes"] += row["bytes"]
                agg["rounds"] += row["rounds"]
                agg["seconds"] += row["seconds"]
        q = max(1, len(qs))
        stages = [dict(stage=s, bytes=v["bytes"] // q, rounds=round(v["rounds"] / q, 2),
                       seconds=round(v["seconds"] / q, 6)) for s, v in sorted(totals.items())]
    seconds = time.perf_counter() - t0
    comparators = {label: chosen.comparators for label, _, chosen in selection_networks(params, kind)}
    report = EvalReport(str(args.data), ds.n, ds.d, params.k_nn, eval_accuracy(ids, truth, params.k_nn),
                        stages, comparators, seconds)
    print(report.summary())
    if args.out:
        _write_csv(args.out, [dict(metric="accuracy", value=report.accuracy), dict(metric="seconds", value=seconds)]
                   + [dict(metric=f"{r['stage']}_bytes_per_query", value=r["bytes"]) for r in stages])
    if args.min_accuracy is not None and report.accuracy < args.min_accuracy:
        raise CheckFailed(f"accuracy {report.accuracy:.4f} below {args.min_accuracy}")
    return EXIT_OK


def cmd_theorems(args) -> int:
    from .bench import run_theorem_suite

    which = ("expectation", "whp") if args.which == "both" else (args.which,)
    ok, texts = True, []
    for w in which:
        k = args.k or (50 if w == "expectation" else 10)
        trials = args.trials or (200 if w == "expectation" else 500)
        rep = run_theorem_suite(w, args.n, k, args.delta, trials, args.seed)
        print(f"{w}: n={rep.n} k={rep.k} delta={rep.delta} l={rep.l} trials={rep.trials} "
              f"statistic={rep.statistic:.4f} threshold={rep.threshold:.4f} "
              f"{'PASS' if rep.passed else 'FAIL'}")
        texts.append(rep.csv())
        ok &= rep.passed
    if args.out:
        Path(args.out).write_text("\n".join(texts))
    if not ok:
        raise CheckFailed("a Monte Carlo check failed")
    return EXIT_OK


def cmd_costs(args) -> int:
    from .bench import report_costs

    spec = args.params or "sift-ls"
    params = load_params(spec)
    algorithm = args.algorithm or ("clustering" if params.T else "linear")
    _emit(report_costs(params, algorithm, args.n), args.out)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .acceptance import run_all

    only = set(_ints(args.only)) if args.only else None
    results = run_all(only)
    if args.out:
        _write_csv(args.out, [dict(criterion=r.number, name=r.name, passed=int(r.passed), detail=r.detail,
                                   seconds=round(r.seconds, 2)) for r in results])
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if failed:
        raise CheckFailed(f"criteria {failed} failed")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="secknn", description="Secure approximate k-NN search toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--params", help="preset tag (sift, amazon, sift-ls, ...) or key=value file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--k", type=int, help="number of neighbours (overrides k_nn)")
        sp.add_argument("--out", help="output path (default: stdout where applicable)")
        if data:
            sp.add_argument("--data", help="dataset (.fvecs/.bvecs/.ivecs) or index file")
            sp.add_argument("--format", choices=("fvecs", "bvecs", "ivecs"),
                            help="vector file format (default: from the suffix)")
            sp.add_argument("--range", help="quantization range LO,HI (default: data min/max)")

    sp = sub.add_parser("gen", help="write a synthetic Gaussian-blob dataset")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--blobs", type=int, default=10)
    sp.add_argument("--spread", type=float, default=1.0)
    sp.add_argument("--separation", type=float, default=10.0, help="min center gap in blob radii")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--labels", help="also write blob labels (.ivecs)")
    sp.add_argument("--queries-out", help="also write fresh query points (.fvecs)")
    sp.add_argument("--num-queries", type=int, default=100)
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("build-index", help="balanced clustering index for the clustering protocol")
    common(sp)
    sp.add_argument("--m", type=int, help="cluster capacity")
    sp.add_argument("--s", type=int, help="stash size target")
    sp.add_argument("--u", help="probes per group, comma-separated")
    sp.add_argument("--l", help="bins per group, comma-separated")
    sp.set_defaults(fn=cmd_build_index)

    sp = sub.add_parser("serve", help="run the server and/or dealer role over TCP")
    common(sp)
    sp.add_argument("--role", choices=("server", "dealer", "both"), default="both")
    sp.add_argument("--addr", default="127.0.0.1:7700", help="server host:port; the dealer uses port+1")
    sp.add_argument("--sessions", type=int, default=0, help="stop after this many sessions (0: run forever)")
    sp.set_defaults(fn=cmd_serve)

    sp = sub.add_parser("query", help="client role: send queries to a running server")
    common(sp, data=False)
    sp.add_argument("--role", choices=("client",), default="client")
    sp.add_argument("--queries", help="query vectors")
    sp.add_argument("--format", choices=("fvecs", "bvecs", "ivecs"))
    sp.add_argument("--range", help="quantization range LO,HI used for the dataset")
    sp.add_argument("--n", type=int, help="dataset size when the parameters come from a preset")
    sp.add_argument("--addr", default="127.0.0.1:7700")
    sp.add_argument("--transcript", help="write per-query stage bytes/rounds CSV here")
    sp.set_defaults(fn=cmd_query)

    sp = sub.add_parser("eval", help="accuracy against the exact oracle (in-process roles)")
    common(sp)
    sp.add_argument("--queries", help="query vectors")
    sp.add_argument("--index", help="cluster index file (clustering protocol)")
    sp.add_argument("--mode", choices=("protocol", "plaintext"), default="protocol")
    sp.add_argument("--limit", type=int, help="use only the first LIMIT queries")
    sp.add_argument("--min-accuracy", type=float, help="exit with code 2 below this accuracy")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("theorems", help="Monte Carlo checks of bin-min selection")
    sp.add_argument("--which", choices=("expectation", "whp", "both"), default="both")
    sp.add_argument("--n", type=int, default=100_000)
    sp.add_argument("--k", type=int)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_theorems)

    sp = sub.add_parser("costs", help="comparator/AND-gate report and PRF cost table")
    sp.add_argument("--params", help="preset tag or file (default sift-ls)")
    sp.add_argument("--algorithm", choices=("linear", "clustering"))
    sp.add_argument("--n", type=int)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_costs)

    sp = sub.add_parser("selftest", help="run the acceptance criteria")
    sp.add_argument("--only", help="comma-separated criterion numbers")
    sp.add_argument("--out", help="CSV of results")
    sp.set_defaults(fn=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except CheckFailed as exc:
        print(f"FAILED: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as exc:  # any runtime problem maps to exit code 1
        log.debug("error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Two-party k-NN protocols with a dealer standing in for the trusted steps.

Roles:

* client: holds the query, learns only the final ids;
* server: holds the points (or the cluster index) and draws the shuffles;
* dealer: evaluates the packed distance products on the parties' encodings,
  runs the selection functionalities, supplies B2A randomness and DPF
  corrections, and removes the PRF pad after oblivious reads.

Every message crosses a framed :class:`~secknn.transport.Channel`, so the
byte and round counts per stage come from the wire, not from a model.
"""

from __future__ import annotations

import contextlib
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import ideal
from .core import HyperParams, QuantizedDataset
from .doram import BlockLayout, MaskedDb, dealer_multi_read, new_key, party_multi_read, prf_pad
from .engine import linear_order, shuffle_orders
from .index import ClusterIndex
from .packing import (client_distance_share, masked_response, pack_point_batches, packed_products_array,
                      server_distance_share)
from .selection import selection_plan
from .sharing import B2AMaterial, Dealer, b2a_finish, b2a_open, uniform
from .transport import Channel, ProtocolError, TransportError, pipe

PROTOCOL_VERSION = 1
CLIENT, SERVER, DEALER = "client", "server", "dealer"
PRF = "aes-ctr"


def _wire(x, bits: int) -> np.ndarray:
    """Smallest unsigned dtype holding ``bits``-bit values."""
    for dt, width in ((np.uint8, 8), (np.uint16, 16), (np.uint32, 32)):
        if bits <= width:
            return np.asarray(x).astype(dt)
    return np.asarray(x).astype(np.uint64)


def _i64(x) -> np.ndarray:
    return np.asarray(x).astype(np.int64)


# --------------------------------------------------------------------------
# sessions and transcripts


@dataclass
class StageRecord:
    bytes: int = 0
    messages: int = 0
    rounds: int = 0
    seconds: float = 0.0


@dataclass
class ProtocolTranscript:
    stages: dict[str, StageRecord] = field(default_factory=dict)

    @property
    def total_bytes(self) -> int:
        return sum(r.bytes for r in self.stages.values())

    def rounds(self, stage: str) -> int:
        return self.stages[stage].rounds if stage in self.stages else 0

    def rows(self) -> list[dict]:
        return [dict(stage=k, bytes=v.bytes, messages=v.messages, rounds=v.rounds,
                     seconds=round(v.seconds, 6)) for k, v in sorted(self.stages.items())]


def snapshot(channels) -> dict:
    snap = {}
    for ch in channels:
        for stage, st in ch.stats.stages.items():
            snap[(id(ch), stage)] = (st.bytes_sent, st.msgs_sent, st.flights)
    return snap


def transcript_between(before: dict, after: dict, seconds: dict | None = None) -> ProtocolTranscript:
    rec: dict[str, StageRecord] = defaultdict(StageRecord)
    for key, (b, m, f) in after.items():
        b0, m0, f0 = before.get(key, (0, 0, 0))
        if m == m0:
            continue
        r = rec[key[1]]
        r.bytes += b - b0
        r.messages += m - m0
        r.rounds = max(r.rounds, f - f0)
    for stage, sec in (seconds or {}).items():
        rec[stage].seconds += sec
    return ProtocolTranscript(dict(rec))


@dataclass
class Session:
    role: str
    params: HyperParams
    kind: str
    links: dict[str, Channel]
    rng: np.random.Generator
    timers: dict = field(default_factory=lambda: defaultdict(float))

    @contextlib.contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timers[name] += time.perf_counter() - t0

    def link(self, name: str) -> Channel:
        return self.links[name]


def hello(params: HyperParams, role: str, kind: str) -> dict:
    return dict(version=PROTOCOL_VERSION, role=role, kind=kind, digest=params.digest(),
                config=params.to_config())


def handshake(ch: Channel, role: str, params: HyperParams, kind: str, dealer: bool = False) -> dict:
    """Exchange version and parameter digest; any mismatch aborts."""
    ch.send("handshake", hello(params, role, kind), dealer=dealer)
    peer = ch.recv("handshake", dealer=dealer)
    problems = []
    if peer.get("version") != PROTOCOL_VERSION:
        problems.append(f"version {peer.get('version')} != {PROTOCOL_VERSION}")
    if peer.get("kind") != kind:
        problems.append(f"protocol {peer.get('kind')!r} != {kind!r}")
    if peer.get("digest") != params.digest():
        problems.append("parameter digests differ")
    if problems:
        ch.abort("; ".join(problems))
        raise ProtocolError("handshake failed: " + "; ".join(problems))
    return peer


def dealer_handshake(ch: Channel, peer: dict | None = None) -> dict:
    """Dealer side: learn the public parameters from the server's hello.

    ``peer`` is that hello when the caller has already read it.
    """
    peer = peer if peer is not None else ch.recv("handshake", dealer=True)
    if peer.get("version") != PROTOCOL_VERSION:
        ch.abort("protocol version mismatch")
        raise ProtocolError("handshake failed: protocol version mismatch")
    params = HyperParams.from_config(peer["config"])
    ch.send("handshake", hello(params, DEALER, peer["kind"]), dealer=True)
    return peer


# --------------------------------------------------------------------------
# shared building blocks


def selection_stage(n: int, k: int, l: int | None) -> tuple[str, int | None]:
    kind, bins = selection_plan(n, k, l)
    return ("atopk", bins) if kind == "approx" else ("topk", None)


def client_distances(sess: Session, q: np.ndarray) -> np.ndarray:
    """Client half of a distance round; returns ``<q,p> + r`` per point."""
    p = sess.params
    dealer = sess.link(DEALER)
    dealer.send("dist", {"f": _wire(q, p.b_c)}, dealer=True)
    return _i64(dealer.recv("dist", dealer=True)["s"])


def server_distances(sess: Session, points: np.ndarray, value_bits: int) -> np.ndarray:
    """Server half: send packed point polynomials and the mask, return the mask."""
    p = sess.params
    r = uniform(sess.rng, points.shape[0], p.b_d)
    g = pack_point_batches(points, p.N, p.t)
    sess.link(DEALER).send("dist", {"g": _wire(g, value_bits), "r": _wire(r, p.b_d), "n": int(points.shape[0])},
                           dealer=True)
    return r


def dealer_distances(sess: Session) -> None:
    p = sess.params
    msg_c = sess.link(CLIENT).recv("dist", dealer=True)
    msg_s = sess.link(SERVER).recv("dist", dealer=True)
    h = packed_products_array(_i64(msg_c["f"]), _i64(msg_s["g"]), p.t)
    s = masked_response(h[: msg_s["n"]], _i64(msg_s["r"]), p.t)
    sess.link(CLIENT).send("dist", {"s": _wire(s, p.b_d)}, dealer=True)


def party_select(sess: Session, stage: str, a, ids=None, valid=None) -> dict:
    msg = {"a": _wire(a, sess.params.b_d)}
    if ids is not None:
        msg["ids"] = _wire(ids, sess.params.b_pid)
    if valid is not None:
        msg["valid"] = _wire(valid, 1)
    ch = sess.link(DEALER)
    ch.send(stage, msg, dealer=True)
    out = ch.recv(stage, dealer=True)
    return {k: _i64(v) for k, v in out.items()}


def dealer_select(sess: Session, stage: str, *, k: int, l: int | None, r: int, return_val: bool,
                  value_bits: int) -> None:
    """Receive both inputs, run the selection functionality, send the outputs.

    Missing id shares stand for the all-zero array a party may input.
    """
    p = sess.params
    msg_c = sess.link(CLIENT).recv(stage, dealer=True)
    msg_s = sess.link(SERVER).recv(stage, dealer=True)
    n = len(msg_c["a"])
    zeros = np.zeros(n, dtype=np.int64)
    req = ideal.TopkRequest(
        a_c=_i64(msg_c["a"]), a_s=_i64(msg_s["a"]),
        idlist_c=_i64(msg_c.get("ids", zeros)), idlist_s=_i64(msg_s.get("ids", zeros)),
        r=r, k=k, t=p.t, b_pid=p.b_pid, return_val=return_val, value_bits=value_bits,
        valid_c=_i64(msg_c["valid"]) if "valid" in msg_c else None,
        valid_s=_i64(msg_s["valid"]) if "valid" in msg_s else None,
    )
    if (req.valid_c is None) != (req.valid_s is None):
        raise ProtocolError("only one party supplied validity flags")
    if stage == "atopk":
        out_c, out_s = ideal.f_atopk(req, l, sess.rng)
    else:
        out_c, out_s = ideal.f_topk(req, sess.rng)
    for name, out in ((CLIENT, out_c), (SERVER, out_s)):
        msg = {"ids": _wire(out.ids, p.b_pid)}
        if out.values is not None:
            msg["values"] = _wire(out.values, p.b_d)
        sess.link(name).send(stage, msg, dealer=True)


# --------------------------------------------------------------------------
# linear scan


def client_linear_query(sess: Session, q) -> np.ndarray:
    p = sess.params
    q = np.asarray(q, dtype=np.int64)
    with sess.stage("dist"):
        s = client_distances(sess, q)
        a_c = client_distance_share(s, int(q @ q), p.t)
    stage, _ = selection_stage(p.n, p.k_nn, p.l_s)
    with sess.stage(stage):
        ids_c = party_select(sess, stage, a_c)["ids"]
    with sess.stage("reveal"):
        ids_s = _i64(sess.link(SERVER).recv("reveal")["ids"])
    return ids_c ^ ids_s


def server_linear_query(sess: Session, dataset: QuantizedDataset, seed: int) -> None:
    p = sess.params
    order = linear_order(dataset.n, seed)
    pts = dataset.coords[order]
    r = server_distances(sess, pts, p.b_c)
    a_s = server_distance_share(r, dataset.norms()[order], p.t)
    stage, _ = selection_stage(p.n, p.k_nn, p.l_s)
    ids_s = party_select(sess, stage, a_s, ids=dataset.ids[order])["ids"]
    sess.link(CLIENT).send("reveal", {"ids": _wire(ids_s, p.b_pid)})


def dealer_linear_query(sess: Session) -> None:
    p = sess.params
    dealer_distances(sess)
    stage, bins = selection_stage(p.n, p.k_nn, p.l_s)
    dealer_select(sess, stage, k=p.k_nn, l=bins, r=p.r_p, return_val=False, value_bits=p.b_d)


# --------------------------------------------------------------------------
# clustering


def cluster_layout(params: HyperParams) -> BlockLayout:
    return BlockLayout.for_params(params.m, params.d, params.b_c, params.b_pid, params.b_d)


def index_blocks(index: ClusterIndex) -> np.ndarray:
    layout = cluster_layout(index.params)
    parts = [layout.encode(g.coords, g.ids, g.norms(), g.valid) for g in index.groups]
    return np.concatenate(parts, axis=0)


def group_of_probe(params: HyperParams) -> np.ndarray:
    return np.repeat(np.arange(params.T), params.u)


def client_cluster_setup(sess: Session) -> MaskedDb:
    server = sess.link(SERVER)
    with sess.stage("setup"):
        key = new_key(sess.rng)
        once = server.recv("setup")["db"]
        masked = once ^ prf_pad(PRF, key, once.shape[0], once.shape[1])
        server.send("setup", {"db": masked})
        dealer = sess.link(DEALER)
        dealer.send("setup", {"key": key}, dealer=True)
        # the acknowledgement arrives once the server's setup is in as well
        dealer.recv("setup", dealer=True)
    return MaskedDb(masked, PRF)


def server_cluster_setup(sess: Session, index: ClusterIndex) -> MaskedDb:
    blocks = index_blocks(index)
    key = new_key(sess.rng)
    client = sess.link(CLIENT)
    client.send("setup", {"db": blocks ^ prf_pad(PRF, key, blocks.shape[0], blocks.shape[1])})
    masked = client.recv("setup")["db"]
    sess.link(DEALER).send("setup", {"key": key, "blocks": int(blocks.shape[0]),
                                     "block_bytes": int(blocks.shape[1])}, dealer=True)
    return MaskedDb(masked, PRF)


def _recv_material(sess: Session) -> tuple[B2AMaterial, B2AMaterial]:
    msg = sess.link(DEALER).recv("b2a", dealer=True)
    p = sess.params
    return (B2AMaterial(_i64(msg["coord_r"]), _i64(msg["coord_bits"]), p.b_c),
            B2AMaterial(_i64(msg["norm_r"]), _i64(msg["norm_bits"]), p.b_d))


def _party_cluster_points(sess: Session, y: np.ndarray, first: bool):
    """Shares of retrieved blocks -> additive points and norms, XOR ids and flags."""
    p = sess.params
    coords, ids, norms, valid = cluster_layout(p).decode(y)
    # padding bits above a field's width XOR to zero, so dropping them keeps the sharing
    coords &= (1 << p.b_c) - 1
    norms &= (1 << p.b_d) - 1
    ids &= (1 << p.b_pid) - 1
    valid &= 1
    coord_mat, norm_mat = _recv_material(sess)
    width = max(p.b_c, p.b_d)
    # one exchange covers both fields
    mine = np.concatenate((b2a_open(coords.ravel(), coord_mat), b2a_open(norms.ravel(), norm_mat)))
    peer = sess.link(SERVER if first else CLIENT)
    if first:
        peer.send("b2a", {"c": _wire(mine, width)})
        theirs = _i64(peer.recv("b2a")["c"])
    else:
        theirs = _i64(peer.recv("b2a")["c"])
        peer.send("b2a", {"c": _wire(mine, width)})
    opened = mine ^ theirs
    nc = coords.size
    a_coords = b2a_finish(opened[:nc], coord_mat, p.t, first).reshape(-1, p.d)
    a_norms = b2a_finish(opened[nc:], norm_mat, p.t, first)
    return a_coords, a_norms, ids.ravel(), valid.ravel()


def client_cluster_query(sess: Session, q, masked: MaskedDb) -> np.ndarray:
    p = sess.params
    mask = p.t - 1
    q = np.asarray(q, dtype=np.int64)
    qq = int(q @ q)
    # steps per group: center distances, then cluster selection
    picked = []
    for i in range(p.T):
        with sess.stage("dist"):
            s = client_distances(sess, q)
            a_c = client_distance_share(s, qq, p.t)
        stage, _ = selection_stage(p.k_c[i], p.u[i], p.l[i])
        with sess.stage(stage):
            picked.append(party_select(sess, stage, a_c)["ids"])
    with sess.stage("oram"):
        y = party_multi_read(sess.link(DEALER), 0, masked, p.u_all, sess.rng,
                             {"idx": _wire(np.concatenate(picked), p.b_cid or 1)})
    with sess.stage("b2a"):
        pts, norms, ids, valid = _party_cluster_points(sess, y, True)
    with sess.stage("dist"):
        s = client_distances(sess, q)
        # the client's own point shares contribute a local inner product
        a_c = (client_distance_share((pts @ q) + s, qq, p.t) + norms) & mask
    with sess.stage("topk"):
        out = party_select(sess, "topk", a_c, ids=ids, valid=valid)
    vals, best = out["values"], out["ids"]
    if p.s:
        with sess.stage("dist"):
            s = client_distances(sess, q)
            a_c = client_distance_share(s, qq, p.t)
        stage, _ = selection_stage(p.s, p.k_nn, p.l_s)
        with sess.stage(stage):
            out = party_select(sess, stage, a_c)
        vals, best = np.concatenate((vals, out["values"])), np.concatenate((best, out["ids"]))
    with sess.stage("topk"):
        ids_c = party_select(sess, "topk", vals, ids=best)["ids"]
    with sess.stage("reveal"):
        ids_s = _i64(sess.link(SERVER).recv("reveal")["ids"])
    return ids_c ^ ids_s


def server_cluster_query(sess: Session, index: ClusterIndex, masked: MaskedDb, seed: int) -> None:
    p = sess.params
    orders = shuffle_orders(index.k_c, index.s, seed)
    picked = []
    for i, (g, perm) in enumerate(zip(index.groups, orders.centers)):
        centers = g.centers[perm]
        r = server_distances(sess, centers, p.b_c)
        a_s = server_distance_share(r, np.einsum("ij,ij->i", centers, centers), p.t)
        stage, _ = selection_stage(p.k_c[i], p.u[i], p.l[i])
        picked.append(party_select(sess, stage, a_s, ids=perm)["ids"])
    y = party_multi_read(sess.link(DEALER), 1, masked, p.u_all, sess.rng,
                         {"idx": _wire(np.concatenate(picked), p.b_cid or 1)})
    pts, norms, ids, valid = _party_cluster_points(sess, y, False)
    r = server_distances(sess, pts, p.b_d)
    a_s = (2 * r + norms) & (p.t - 1)
    out = party_select(sess, "topk", a_s, ids=ids, valid=valid)
    vals, best = out["values"], out["ids"]
    if p.s:
        perm = orders.stash
        pts = index.stash_coords[perm]
        r = server_distances(sess, pts, p.b_c)
        a_s = server_distance_share(r, np.einsum("ij,ij->i", pts, pts), p.t)
        stage, _ = selection_stage(p.s, p.k_nn, p.l_s)
        out = party_select(sess, stage, a_s, ids=index.stash_ids[perm])
        vals, best = np.concatenate((vals, out["values"])), np.concatenate((best, out["ids"]))
    ids_s = party_select(sess, "topk", vals, ids=best)["ids"]
    sess.link(CLIENT).send("reveal", {"ids": _wire(ids_s, p.b_pid)})


class _DealerOram:
    def __init__(self, key_c: bytes, key_s: bytes, blocks: int, block_bytes: int) -> None:
        self.key_c, self.key_s = key_c, key_s
        self.blocks, self.block_bytes = blocks, block_bytes


def dealer_cluster_setup(sess: Session) -> _DealerOram:
    msg_c = sess.link(CLIENT).recv("setup", dealer=True)
    msg_s = sess.link(SERVER).recv("setup", dealer=True)
    sess.link(CLIENT).send("setup", {"ok": True}, dealer=True)
    return _DealerOram(msg_c["key"], msg_s["key"], msg_s["blocks"], msg_s["block_bytes"])


def dealer_cluster_query(sess: Session, oram: _DealerOram) -> None:
    p = sess.params
    for i in range(p.T):
        dealer_distances(sess)
        stage, bins = selection_stage(p.k_c[i], p.u[i], p.l[i])
        dealer_select(sess, stage, k=p.u[i], l=bins, r=p.r_c, return_val=False, value_bits=p.b_d)
    offsets = np.concatenate(([0], np.cumsum(p.k_c)))[group_of_probe(p)]

    def resolve(msg_c, msg_s):
        local = _i64(msg_c["idx"]) ^ _i64(msg_s["idx"])
        return offsets + local

    dealer_multi_read(sess.link(CLIENT), sess.link(SERVER), PRF, oram.key_c, oram.key_s,
                      oram.blocks, oram.block_bytes, resolve, sess.rng)
    count = p.u_all * p.m
    dealer = Dealer(sess.rng)
    c_c, c_s = dealer.b2a_material(count * p.d, p.b_c, p.t)
    n_c, n_s = dealer.b2a_material(count, p.b_d, p.t)
    for name, cm, nm in ((CLIENT, c_c, n_c), (SERVER, c_s, n_s)):
        sess.link(name).send("b2a", {"coord_r": _wire(cm.r_xor, p.b_c), "coord_bits": _wire(cm.r_bits, p.b_d),
                                     "norm_r": _wire(nm.r_xor, p.b_d), "norm_bits": _wire(nm.r_bits, p.b_d)},
                             dealer=True)
    dealer_distances(sess)
    dealer_select(sess, "topk", k=p.k_nn, l=None, r=p.r_p, return_val=True, value_bits=p.b_d)
    if p.s:
        dealer_distances(sess)
        stage, bins = selection_stage(p.s, p.k_nn, p.l_s)
        dealer_select(sess, stage, k=p.k_nn, l=bins, r=p.r_p, return_val=True, value_bits=p.b_d)
    dealer_select(sess, "topk", k=p.k_nn, l=None, r=0, return_val=False, value_bits=p.b_d - p.r_p)


# --------------------------------------------------------------------------
# session loops (shared by in-process runs and the network CLI)


def client_session(links: dict, params: HyperParams, kind: str, queries, rng, on_query=None,
                   watch=None) -> np.ndarray:
    """Run all queries; ``on_query(i, ids, transcript)`` is called after each.

    ``watch`` lists the channel endpoints whose counters feed the per-query
    transcripts (default: the client's own). When a query returns, the other
    roles have already sent everything belonging to it.
    """
    sess = Session(CLIENT, params, kind, links, rng)
    handshake(links[SERVER], CLIENT, params, kind)
    handshake(links[DEALER], CLIENT, params, kind, dealer=True)
    channels = list(watch) if watch is not None else list(links.values())
    masked = client_cluster_setup(sess) if kind == "clustering" else None
    results = []
    for qi, q in enumerate(queries):
        before = snapshot(channels)
        sess.timers.clear()
        for ch in links.values():
            ch.new_round()
        for name in (SERVER, DEALER):
            links[name].send("handshake", {"op": "query"}, dealer=name == DEALER)
        ids = client_linear_query(sess, q) if kind == "linear" else client_cluster_query(sess, q, masked)
        results.append(ids)
        if on_query is not None:
            on_query(qi, ids, transcript_between(before, snapshot(channels), dict(sess.timers)))
    for name in (SERVER, DEALER):
        links[name].send("handshake", {"op": "close"}, dealer=name == DEALER)
    return np.array(results, dtype=np.int64).reshape(len(results), params.k_nn)


def server_session(links: dict, params: HyperParams, kind: str, data, rng, seeds=None) -> int:
    """Serve queries until the client closes. ``seeds`` yields shuffle seeds."""
    sess = Session(SERVER, params, kind, links, rng)
    handshake(links[CLIENT], SERVER, params, kind)
    handshake(links[DEALER], SERVER, params, kind, dealer=True)
    if kind == "clustering":
        data.check_params(params)
        masked = server_cluster_setup(sess, data)
    seeds = iter(seeds) if seeds is not None else None
    served = 0
    while links[CLIENT].recv("handshake")["op"] == "query":
        for ch in links.values():
            ch.new_round()
        seed = next(seeds) if seeds is not None else int(rng.integers(1 << 62))
        if kind == "linear":
            server_linear_query(sess, data, seed)
        else:
            server_cluster_query(sess, data, masked, seed)
        served += 1
    return served


def dealer_session(links: dict, rng, hellos: dict | None = None) -> int:
    """The server's hello fixes the parameters; the client's must match them.

    ``hellos`` holds hellos already read off the links (a socket dealer reads
    them to tell its two connections apart).
    """
    hellos = hellos or {}
    peer = dealer_handshake(links[SERVER], hellos.get(SERVER))
    params = HyperParams.from_config(peer["config"])
    kind = peer["kind"]
    sess = Session(DEALER, params, kind, links, rng)
    client_hello = hellos.get(CLIENT) or links[CLIENT].recv("handshake", dealer=True)
    if client_hello.get("digest") != params.digest() or client_hello.get("kind") != kind \
            or client_hello.get("version") != PROTOCOL_VERSION:
        links[CLIENT].abort("parameters differ from the server's")
        links[SERVER].abort("client parameters differ")
        raise ProtocolError("handshake failed: client and server parameters differ")
    links[CLIENT].send("handshake", hello(params, DEALER, kind), dealer=True)
    oram = dealer_cluster_setup(sess) if kind == "clustering" else None
    served = 0
    while links[CLIENT].recv("handshake", dealer=True)["op"] == "query":
        for ch in links.values():
            ch.new_round()
        if kind == "linear":
            dealer_linear_query(sess)
        else:
            dealer_cluster_query(sess, oram)
        served += 1
    return served


# --------------------------------------------------------------------------
# in-process runs


@dataclass
class RunResult:
    ids: np.ndarray
    transcripts: list[ProtocolTranscript]


def _run_three(client_fn, server_fn, dealer_fn):
    """``client_fn`` takes the list of all endpoints and returns the client body."""
    cs, sc = pipe(CLIENT, SERVER)
    cd, dc = pipe(CLIENT, DEALER)
    sd, ds = pipe(SERVER, DEALER)
    links = {
        CLIENT: {SERVER: cs, DEALER: cd},
        SERVER: {CLIENT: sc, DEALER: sd},
        DEALER: {CLIENT: dc, SERVER: ds},
    }
    results, errors = {}, []
    every = [cs, sc, cd, dc, sd, ds]
    client_fn = client_fn(every)

    def run(name, fn):
        try:
            results[name] = fn(links[name])
        except BaseException as exc:
            errors.append((name, exc))
            for ch in every:
                ch.abort(f"{name} failed: {exc}")

    threads = [threading.Thread(target=run, args=(SERVER, server_fn), daemon=True),
               threading.Thread(target=run, args=(DEALER, dealer_fn), daemon=True)]
    for th in threads:
        th.start()
    run(CLIENT, client_fn)
    for th in threads:
        th.join(timeout=600)
    if errors:
        # the first failure is the cause; the others are the aborts it triggered
        primary = [e for e in errors if not isinstance(e[1], (ProtocolError, TransportError))] or errors
        raise primary[0][1]
    return results


def _rngs(seed: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def run_linear_scan(queries, dataset: QuantizedDataset, params: HyperParams, seeds,
                    session_seed: int = 0) -> RunResult:
    """Linear-scan protocol for each query; ``seeds`` are the server's shuffle seeds."""
    if params.n != dataset.n or params.d != dataset.d:
        raise ValueError("parameters do not match the dataset")
    rc, rs, rd = _rngs(session_seed)
    transcripts: list = []
    out = _run_three(
        lambda every: lambda l: client_session(l, params, "linear", queries, rc,
                                               lambda i, ids, tr: transcripts.append(tr), every),
        lambda l: server_session(l, params, "linear", dataset, rs, seeds),
        lambda l: dealer_session(l, rd),
    )
    return RunResult(out[CLIENT], transcripts)


def run_clustering(queries, index: ClusterIndex, seeds, params: HyperParams | None = None,
                   session_seed: int = 0) -> RunResult:
    params = params if params is not None else index.params
    index.check_params(params)
    rc, rs, rd = _rngs(session_seed)
    transcripts: list = []
    out = _run_three(
        lambda every: lambda l: client_session(l, params, "clustering", queries, rc,
                                               lambda i, ids, tr: transcripts.append(tr), every),
        lambda l: server_session(l, params, "clustering", index, rs, seeds),
        lambda l: dealer_session(l, rd),
    )
    return RunResult(out[CLIENT], transcripts)

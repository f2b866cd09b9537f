"""Clustered search index: balanced groups padded to ``m`` slots plus a stash."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import balance_clusters, build_stash
from .core import HyperParams, ParamError, QuantizedDataset

MAGIC = b"SKNX"
VERSION = 1


@dataclass
class ClusterGroupSlots:
    """One group: ``k`` centers and ``(k, m)`` member slots."""

    centers: np.ndarray  # (k, d) int64
    coords: np.ndarray  # (k, m, d) int64, dummies are zero vectors
    ids: np.ndarray  # (k, m) int64, dummies carry id 0
    valid: np.ndarray  # (k, m) bool

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def norms(self) -> np.ndarray:
        return np.einsum("kmd,kmd->km", self.coords, self.coords)


@dataclass
class ClusterIndex:
    params: HyperParams
    groups: list[ClusterGroupSlots]
    stash_coords: np.ndarray  # (s, d)
    stash_ids: np.ndarray  # (s,)

    @property
    def T(self) -> int:
        return len(self.groups)

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def k_c(self) -> tuple[int, ...]:
        return tuple(g.k for g in self.groups)

    @property
    def s(self) -> int:
        return int(self.stash_ids.size)

    @property
    def block_offsets(self) -> np.ndarray:
        """Global block number of each group's first cluster (plus the total)."""
        return np.concatenate(([0], np.cumsum(self.k_c))).astype(np.int64)

    def check_params(self, params: HyperParams) -> None:
        if (params.T, params.k_c, params.m, params.s) != (self.T, self.k_c, self.m, self.s):
            raise ParamError("parameters do not describe this index (T, k_c, m or s differ)")
        if params.d != self.params.d or params.b_c != self.params.b_c:
            raise ParamError("parameters disagree with the index on d or b_c")

    def with_probes(self, u, l, **kw) -> "ClusterIndex":
        """Same index, different per-group probe counts and bin counts."""
        params = self.params.replace(u=tuple(u), l=tuple(l), **kw)
        return ClusterIndex(params, self.groups, self.stash_coords, self.stash_ids)

    def all_ids(self) -> np.ndarray:
        parts = [g.ids[g.valid] for g in self.groups] + [self.stash_ids]
        return np.concatenate(parts)

    # serialization ----------------------------------------------------------

    def to_bytes(self) -> bytes:
        out = io.BytesIO()
        cfg = self.params.to_config().encode()
        out.write(MAGIC)
        out.write(struct.pack("<HI", VERSION, len(cfg)))
        out.write(cfg)
        d = self.params.d
        for g in self.groups:
            out.write(struct.pack("<I", g.k))
            out.write(g.centers.astype("<i8").tobytes())
            out.write(g.coords.astype("<i8").tobytes())
            out.write(g.ids.astype("<i8").tobytes())
            out.write(g.valid.astype("u1").tobytes())
        out.write(struct.pack("<I", self.s))
        out.write(self.stash_coords.astype("<i8").reshape(self.s, d).tobytes())
        out.write(self.stash_ids.astype("<i8").tobytes())
        return out.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ClusterIndex":
        buf = memoryview(data)
        if bytes(buf[:4]) != MAGIC:
            raise ValueError("not a cluster index file")
        version, cfg_len = struct.unpack_from("<HI", buf, 4)
        if version != VERSION:
            raise ValueError(f"unsupported index version {version}")
        pos = 10
        params = HyperParams.from_config(bytes(buf[pos : pos + cfg_len]).decode())
        pos += cfg_len
        d, m = params.d, params.m

        def take(count: int, dtype: str) -> np.ndarray:
            nonlocal pos
            size = count * np.dtype(dtype).itemsize
            if pos + size > len(buf):
                raise ValueError("index file is truncated")
            arr = np.frombuffer(buf[pos : pos + size], dtype=dtype).copy()
            pos += size
            return arr

        groups = []
        for _ in range(params.T):
            (k,) = struct.unpack("<I", take(4, "u1").tobytes())
            centers = take(k * d, "<i8").reshape(k, d).astype(np.int64)
            coords = take(k * m * d, "<i8").reshape(k, m, d).astype(np.int64)
            ids = take(k * m, "<i8").reshape(k, m).astype(np.int64)
            valid = take(k * m, "u1").reshape(k, m).astype(bool)
            groups.append(ClusterGroupSlots(centers, coords, ids, valid))
        (s,) = struct.unpack("<I", take(4, "u1").tobytes())
        stash_coords = take(s * d, "<i8").reshape(s, d).astype(np.int64)
        stash_ids = take(s, "<i8").astype(np.int64)
        if pos != len(buf):
            raise ValueError("trailing bytes after index payload")
        index = cls(params, groups, stash_coords, stash_ids)
        index.check_params(params)
        return index

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ClusterIndex":
        return cls.from_bytes(Path(path).read_bytes())


def _slots(dataset: QuantizedDataset, members, m: int) -> ClusterGroupSlots:
    k, d = len(members), dataset.d
    top = (1 << dataset.b_c) - 1
    centers = np.empty((k, d), dtype=np.int64)
    coords = np.zeros((k, m, d), dtype=np.int64)
    ids = np.zeros((k, m), dtype=np.int64)
    valid = np.zeros((k, m), dtype=bool)
    for c, rows in enumerate(members):
        pts = dataset.coords[rows]
        centers[c] = np.clip(np.floor(pts.mean(axis=0) + 0.5), 0, top)
        coords[c, : rows.size] = pts
        ids[c, : rows.size] = dataset.ids[rows]
        valid[c, : rows.size] = True
    return ClusterGroupSlots(centers, coords, ids, valid)


def build_index(dataset: QuantizedDataset, base: HyperParams, rng: np.random.Generator | None = None,
                u=None, l=None, iters: int = 25, tol: float = 0.05) -> ClusterIndex:
    """Cluster ``dataset`` with ``base.m``, ``base.alpha`` and stash target ``base.s``.

    Probe counts ``u``/``l`` come from the arguments, else from ``base`` when
    its group count matches the built index (clamped to each group), else
    every cluster is probed.
    """
    if base.m < 1:
        raise ParamError("index construction needs m >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    raw = balance_clusters(dataset.coords, base.m, base.alpha, rng, iters=iters, tol=tol)
    kept, stash_rows = build_stash(raw, base.s)
    groups = [_slots(dataset, g.members, base.m) for g in kept]
    k_c = tuple(g.k for g in groups)
    if u is None:
        if base.T == len(k_c):
            u = tuple(min(ui, kc) for ui, kc in zip(base.u, k_c))
            l = tuple(min(max(li, ui), kc) for li, ui, kc in zip(base.l, u, k_c))
        else:
            u, l = k_c, k_c
    elif l is None:
        l = tuple(u)
    params = base.replace(n=dataset.n, T=len(k_c), k_c=k_c, u=tuple(u), l=tuple(l),
                          s=int(stash_rows.size), b_pid=dataset.b_pid)
    return ClusterIndex(params, groups, dataset.coords[stash_rows].copy(), dataset.ids[stash_rows].copy())

"""Framed duplex transport with per-stage byte and round accounting.

Frame: 4-byte little-endian payload length, 1-byte stage tag, payload.
Messages to or from the dealer carry ``0x80 | stage``; ``0xFF`` aborts.

A payload is a dict of scalars, strings, bytes and numpy arrays, encoded as
a JSON header followed by the raw little-endian array buffers.
"""

from __future__ import annotations

import json
import queue
import socket
import struct
import threading
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

STAGES = {
    "handshake": 0x01,
    "setup": 0x02,
    "dist": 0x03,
    "atopk": 0x04,
    "topk": 0x05,
    "oram": 0x06,
    "b2a": 0x07,
    "reveal": 0x08,
}
STAGE_NAMES = {v: k for k, v in STAGES.items()}
DEALER_BIT = 0x80
ABORT = 0xFF
_HEADER = struct.Struct("<IB")
MAX_FRAME = 1 << 31


class TransportError(RuntimeError):
    """Connection lost or malformed frame."""


class ProtocolError(RuntimeError):
    """Peer misbehaved, parameters disagree, or the session was aborted."""


def stage_tag(stage: str, dealer: bool = False) -> int:
    try:
        code = STAGES[stage]
    except KeyError:
        raise ValueError(f"unknown stage {stage!r}") from None
    return code | DEALER_BIT if dealer else code


def tag_name(tag: int) -> str:
    if tag == ABORT:
        return "abort"
    name = STAGE_NAMES.get(tag & ~DEALER_BIT, f"0x{tag:02x}")
    return f"dealer:{name}" if tag & DEALER_BIT else name


# --------------------------------------------------------------------------
# payload codec


def encode(obj: dict) -> bytes:
    header, chunks, offset = {}, [], 0
    for key, value in obj.items():
        if isinstance(value, np.ndarray):
            arr = np.ascontiguousarray(value)
            dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("|", "<", "=") else arr.dtype
            raw = arr.astype(dt, copy=False).tobytes()
            header[key] = {"a": dt.str, "shape": list(arr.shape), "off": offset, "len": len(raw)}
            chunks.append(raw)
            offset += len(raw)
        elif isinstance(value, (bytes, bytearray)):
            header[key] = {"b": offset, "len": len(value)}
            chunks.append(bytes(value))
            offset += len(value)
        elif isinstance(value, (np.integer,)):
            header[key] = {"v": int(value)}
        elif isinstance(value, (bool, int, float, str, list)) or value is None:
            header[key] = {"v": value}
        else:
            raise TypeError(f"cannot encode field {key!r} of type {type(value).__name__}")
    head = json.dumps(header, separators=(",", ":")).encode()
    return struct.pack("<I", len(head)) + head + b"".join(chunks)


def decode(data: bytes) -> dict:
    if len(data) < 4:
        raise TransportError("payload too short")
    (hlen,) = struct.unpack_from("<I", data, 0)
    try:
        header = json.loads(data[4 : 4 + hlen])
    except ValueError as exc:
        raise TransportError("malformed payload header") from exc
    body = memoryview(data)[4 + hlen :]
    out = {}
    for key, meta in header.items():
        if "v" in meta:
            out[key] = meta["v"]
        elif "a" in meta:
            raw = body[meta["off"] : meta["off"] + meta["len"]]
            if len(raw) != meta["len"]:
                raise TransportError(f"field {key!r} is truncated")
            out[key] = np.frombuffer(raw, dtype=np.dtype(meta["a"])).reshape(meta["shape"]).copy()
        else:
            out[key] = bytes(body[meta["b"] : meta["b"] + meta["len"]])
    return out


# --------------------------------------------------------------------------
# channels


@dataclass
class StageStats:
    bytes_sent: int = 0
    bytes_recv: int = 0
    msgs_sent: int = 0
    msgs_recv: int = 0
    flights: int = 0  # outgoing bursts: a send that follows a receive (or starts the stage)


@dataclass
class LinkStats:
    stages: dict = field(default_factory=lambda: defaultdict(StageStats))

    def total_bytes(self) -> int:
        return sum(s.bytes_sent + s.bytes_recv for s in self.stages.values())


class Channel:
    """One endpoint of a link. Subclasses move whole frames."""

    def __init__(self, name: str = "") -> None:
        self.name = name
        self.stats = LinkStats()
        self._last = {}  # stage -> "send" | "recv"
        self._lock = threading.Lock()

    # raw frame movement
    def _put(self, frame: bytes) -> None:
        raise NotImplementedError

    def _get(self, timeout: float | None) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def send(self, stage: str, obj: dict, dealer: bool = False) -> int:
        payload = encode(obj)
        if len(payload) >= MAX_FRAME:
            raise TransportError("message too large for one frame")
        tag = stage_tag(stage, dealer)
        frame = _HEADER.pack(len(payload), tag) + payload
        with self._lock:
            st = self.stats.stages[stage]
            if self._last.get(stage) != "send":
                st.flights += 1
            self._last[stage] = "send"
            st.bytes_sent += len(frame)
            st.msgs_sent += 1
        self._put(frame)
        return len(frame)

    def recv(self, stage: str, dealer: bool = False, timeout: float | None = 300.0) -> dict:
        frame = self._get(timeout)
        if len(frame) < _HEADER.size:
            raise TransportError(f"short frame while waiting for {stage}")
        length, tag = _HEADER.unpack_from(frame, 0)
        if length != len(frame) - _HEADER.size:
            raise TransportError(f"frame length mismatch in stage {stage}")
        payload = frame[_HEADER.size :]
        if tag == ABORT:
            reason = decode(payload).get("reason", "")
            raise ProtocolError(f"peer aborted during {stage}: {reason}")
        expected = stage_tag(stage, dealer)
        if tag != expected:
            raise ProtocolError(f"expected {tag_name(expected)} message, got {tag_name(tag)}")
        with self._lock:
            st = self.stats.stages[stage]
            self._last[stage] = "recv"
            st.bytes_recv += len(frame)
            st.msgs_recv += 1
        return decode(payload)

    def abort(self, reason: str) -> None:
        payload = encode({"reason": reason})
        try:
            self._put(_HEADER.pack(len(payload), ABORT) + payload)
        except (TransportError, OSError):
            pass

    def new_round(self) -> None:
        """Start counting flights afresh, e.g. at a query boundary."""
        with self._lock:
            self._last.clear()

    def flights(self, stage: str) -> int:
        return self.stats.stages[stage].flights if stage in self.stats.stages else 0


class PipeChannel(Channel):
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, name: str = "") -> None:
        super().__init__(name)
        self.inbox, self.outbox = inbox, outbox

    def _put(self, frame: bytes) -> None:
        self.outbox.put(frame)

    def _get(self, timeout):
        try:
            return self.inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportError(f"{self.name or 'channel'}: timed out waiting for a frame") from None


def pipe(name_a: str = "a", name_b: str = "b") -> tuple[PipeChannel, PipeChannel]:
    """Connected in-memory endpoints."""
    ab, ba = queue.Queue(), queue.Queue()
    return PipeChannel(ba, ab, name_a), PipeChannel(ab, ba, name_b)


class SocketChannel(Channel):
    def __init__(self, sock: socket.socket, name: str = "") -> None:
        super().__init__(name)
        self.sock = sock
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _put(self, frame: bytes) -> None:
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(min(n - len(buf), 1 << 20))
            except socket.timeout:
                raise TransportError("timed out waiting for a frame") from None
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from exc
            if not chunk:
                raise TransportError("connection closed by peer")
            buf += chunk
        return bytes(buf)

    def _get(self, timeout):
        self.sock.settimeout(timeout)
        head = self._exact(_HEADER.size)
        length, _ = _HEADER.unpack(head)
        if length >= MAX_FRAME:
            raise TransportError("oversized frame")
        return head + self._exact(length)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def connect(host: str, port: int, name: str = "", timeout: float = 30.0) -> SocketChannel:
    sock = socket.create_connection((host, port), timeout=timeout)
    return SocketChannel(sock, name)


def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {addr!r}")
    return host, int(port)

"""Message types exchanged between actors and their wire encoding.

A frame is ``kind (1 byte) | body length (4 bytes, big-endian) | body``.
Bodies are built from length-prefixed strings and the canonical cell
encoding.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from ..lattice import LwwCell, Timestamp, decode_cell_from, encode_cell

Endpoint = tuple[str, int]


class FrameKind(enum.IntEnum):
    REQUEST = 1
    RESPONSE = 2
    GOSSIP = 3
    BROADCAST = 4


class Op(enum.Enum):
    GET = "GET"
    PUT = "PUT"
    RESOLVE = "RESOLVE"


class Status(enum.Enum):
    OK = "OK"
    KEY_MISSING = "KEY_MISSING"
    REDIRECT = "REDIRECT"
    ERROR = "ERROR"


class BroadcastKind(enum.Enum):
    JOIN = "JOIN"
    DEPART = "DEPART"
    HEARTBEAT = "HEARTBEAT"
    RV = "RV"
    REMOVE = "REMOVE"


@dataclass(frozen=True)
class Request:
    op: Op
    key: str
    payload: bytes | None = None
    internal: bool = False
    refresh: bool = False
    # internal writers may supply their own stamp instead of the worker's
    ts: Timestamp | None = None


@dataclass(frozen=True)
class Response:
    status: Status
    cell: LwwCell | None = None
    addresses: tuple[Endpoint, ...] = ()
    error: str = ""


@dataclass(frozen=True)
class GossipMessage:
    sender: Endpoint
    entries: tuple[tuple[str, LwwCell], ...]
    want_ack: bool = False


@dataclass(frozen=True)
class GossipAck:
    sender: Endpoint
    entries: tuple[tuple[str, Timestamp], ...]


@dataclass(frozen=True)
class Broadcast:
    kind: BroadcastKind
    node_id: str
    tier: int = 0
    weight: int = 0
    key: str = ""
    cell: LwwCell | None = None
    sent_ms: int = 0
    extra: tuple[str, ...] = field(default=())


Message = Request | Response | GossipMessage | GossipAck | Broadcast


class WireError(ValueError):
    pass


_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class _Writer:
    def __init__(self) -> None:
        self.parts: list[bytes] = []

    def u8(self, v: int) -> None:
        self.parts.append(_U8.pack(v))

    def u32(self, v: int) -> None:
        self.parts.append(_U32.pack(v))

    def u64(self, v: int) -> None:
        self.parts.append(_U64.pack(v))

    def blob(self, b: bytes) -> None:
        self.u32(len(b))
        self.parts.append(b)

    def text(self, s: str) -> None:
        self.blob(s.encode())

    def cell(self, c: LwwCell | None) -> None:
        if c is None:
            self.u8(0)
        else:
            self.u8(1)
            self.parts.append(encode_cell(c))

    def endpoint(self, e: Endpoint) -> None:
        self.text(e[0])
        self.u32(e[1])

    def bytes(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def _take(self, s: struct.Struct) -> int:
        if self.pos + s.size > len(self.data):
            raise WireError("truncated body")
        (v,) = s.unpack_from(self.data, self.pos)
        self.pos += s.size
        return v

    def u8(self) -> int:
        return self._take(_U8)

    def u32(self) -> int:
        return self._take(_U32)

    def u64(self) -> int:
        return self._take(_U64)

    def blob(self) -> bytes:
        n = self.u32()
        if self.pos + n > len(self.data):
            raise WireError("truncated blob")
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return bytes(b)

    def text(self) -> str:
        return self.blob().decode()

    def cell(self) -> LwwCell | None:
        if not self.u8():
            return None
        c, self.pos = decode_cell_from(self.data, self.pos)
        return c

    def endpoint(self) -> Endpoint:
        return (self.text(), self.u32())

    def done(self) -> None:
        if self.pos != len(self.data):
            raise WireError("trailing bytes in body")


_OPS = list(Op)
_STATUSES = list(Status)
_BKINDS = list(BroadcastKind)

# RESPONSE frames carry either a client Response or a gossip acknowledgement
_SUB_RESPONSE = 0
_SUB_ACK = 1


def encode_message(msg: Message) -> bytes:
    w = _Writer()
    if isinstance(msg, Request):
        kind = FrameKind.REQUEST
        w.u8(_OPS.index(msg.op))
        w.text(msg.key)
        w.u8(msg.payload is not None)
        if msg.payload is not None:
            w.blob(msg.payload)
        w.u8(int(msg.internal) | (int(msg.refresh) << 1) | (int(msg.ts is not None) << 2))
        if msg.ts is not None:
            w.u64(msg.ts.clock_ms)
            w.u32(msg.ts.node_seq)
            w.u32(msg.ts.op_seq)
    elif isinstance(msg, Response):
        kind = FrameKind.RESPONSE
        w.u8(_SUB_RESPONSE)
        w.u8(_STATUSES.index(msg.status))
        w.cell(msg.cell)
        w.u32(len(msg.addresses))
        for a in msg.addresses:
            w.endpoint(a)
        w.text(msg.error)
    elif isinstance(msg, GossipAck):
        kind = FrameKind.RESPONSE
        w.u8(_SUB_ACK)
        w.endpoint(msg.sender)
        w.u32(len(msg.entries))
        for key, ts in msg.entries:
            w.text(key)
            w.u64(ts.clock_ms)
            w.u32(ts.node_seq)
            w.u32(ts.op_seq)
    elif isinstance(msg, GossipMessage):
        kind = FrameKind.GOSSIP
        w.endpoint(msg.sender)
        w.u8(int(msg.want_ack))
        w.u32(len(msg.entries))
        for key, cell in msg.entries:
            w.text(key)
            w.cell(cell)
    elif isinstance(msg, Broadcast):
        kind = FrameKind.BROADCAST
        w.u8(_BKINDS.index(msg.kind))
        w.text(msg.node_id)
        w.u8(msg.tier)
        w.u32(msg.weight)
        w.text(msg.key)
        w.cell(msg.cell)
        w.u64(msg.sent_ms)
        w.u32(len(msg.extra))
        for e in msg.extra:
            w.text(e)
    else:
        raise WireError(f"cannot encode {type(msg).__name__}")
    body = w.bytes()
    return _U8.pack(kind) + _U32.pack(len(body)) + body


def frame_length(header: bytes) -> int:
    """Body length announced by a 5-byte frame header."""
    if len(header) != 5:
        raise WireError("frame header is 5 bytes")
    return _U32.unpack_from(header, 1)[0]


def decode_message(frame: bytes) -> Message:
    if len(frame) < 5:
        raise WireError("truncated frame header")
    try:
        kind = FrameKind(frame[0])
    except ValueError as exc:
        raise WireError(f"unknown frame kind {frame[0]}") from exc
    n = frame_length(frame[:5])
    if len(frame) != 5 + n:
        raise WireError(f"frame body is {len(frame) - 5} bytes, header says {n}")
    r = _Reader(frame[5:])
    msg: Message
    if kind is FrameKind.REQUEST:
        op = _OPS[r.u8()]
        key = r.text()
        payload = r.blob() if r.u8() else None
        flags = r.u8()
        ts = Timestamp(r.u64(), r.u32(), r.u32()) if flags & 4 else None
        msg = Request(op, key, payload, internal=bool(flags & 1), refresh=bool(flags & 2), ts=ts)
    elif kind is FrameKind.RESPONSE:
        sub = r.u8()
        if sub == _SUB_RESPONSE:
            status = _STATUSES[r.u8()]
            cell = r.cell()
            addrs = tuple(r.endpoint() for _ in range(r.u32()))
            msg = Response(status, cell, addrs, r.text())
        elif sub == _SUB_ACK:
            sender = r.endpoint()
            entries = []
            for _ in range(r.u32()):
                key = r.text()
                entries.append((key, Timestamp(r.u64(), r.u32(), r.u32())))
            msg = GossipAck(sender, tuple(entries))
        else:
            raise WireError(f"unknown response subtype {sub}")
    elif kind is FrameKind.GOSSIP:
        sender = r.endpoint()
        want_ack = bool(r.u8())
        entries = []
        for _ in range(r.u32()):
            key = r.text()
            cell = r.cell()
            if cell is None:
                raise WireError("gossip entry without a cell")
            entries.append((key, cell))
        msg = GossipMessage(sender, tuple(entries), want_ack)
    else:
        bkind = _BKINDS[r.u8()]
        node_id = r.text()
        tier = r.u8()
        weight = r.u32()
        key = r.text()
        cell = r.cell()
        sent_ms = r.u64()
        extra = tuple(r.text() for _ in range(r.u32()))
        msg = Broadcast(bkind, node_id, tier, weight, key, cell, sent_ms, extra)
    r.done()
    return msg

"""Last-writer-wins cells and their merge algebra.

Every value held by a storage worker, user data and system metadata alike,
is an :class:`LwwCell`. Two cells merge by keeping the one with the larger
:class:`Timestamp`; timestamps are totally ordered by
``(clock_ms, node_seq, op_seq)`` so replicas converge regardless of the
order or multiplicity in which updates arrive.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Protocol

_HEADER = struct.Struct(">QIII")

TOMBSTONE = b""


class CodecError(ValueError):
    """Raised when a byte string is not a well-formed encoded cell."""


@dataclass(frozen=True, order=True, slots=True)
class Timestamp:
    clock_ms: int
    node_seq: int
    op_seq: int

    def __post_init__(self) -> None:
        if self.clock_ms < 0 or self.node_seq < 0 or self.op_seq < 0:
            raise ValueError(f"timestamp fields must be non-negative: {self!r}")


@dataclass(frozen=True, slots=True)
class LwwCell:
    ts: Timestamp
    payload: bytes

    @property
    def is_tombstone(self) -> bool:
        return self.payload == TOMBSTONE


def merge(a: LwwCell, b: LwwCell) -> LwwCell:
    """Return whichever input carries the greater timestamp."""
    return a if a.ts >= b.ts else b


def dominates(a: LwwCell, b: LwwCell) -> bool:
    return a.ts >= b.ts


def merge_all(cells: Iterable[LwwCell]) -> LwwCell:
    return reduce(merge, cells)


def encode_cell(cell: LwwCell) -> bytes:
    ts = cell.ts
    return _HEADER.pack(ts.clock_ms, ts.node_seq, ts.op_seq, len(cell.payload)) + cell.payload


def decode_cell(data: bytes) -> LwwCell:
    cell, used = decode_cell_from(data, 0)
    if used != len(data):
        raise CodecError(f"{len(data) - used} trailing bytes after cell")
    return cell


def decode_cell_from(data: bytes, offset: int) -> tuple[LwwCell, int]:
    """Decode one cell starting at ``offset``; return it and the end offset."""
    end = offset + _HEADER.size
    if end > len(data):
        raise CodecError("truncated cell header")
    clock_ms, node_seq, op_seq, length = _HEADER.unpack_from(data, offset)
    if end + length > len(data):
        raise CodecError(f"payload truncated: want {length} bytes, have {len(data) - end}")
    payload = bytes(data[end : end + length])
    return LwwCell(Timestamp(clock_ms, node_seq, op_seq), payload), end + length


class Clock(Protocol):
    def now_ms(self) -> int: ...


class SimClock:
    """Manually advanced clock for deterministic runs."""

    def __init__(self, start_ms: int = 0):
        self._now_ms = start_ms

    def now_ms(self) -> int:
        return self._now_ms

    def now_s(self) -> float:
        return self._now_ms / 1000.0

    def advance_ms(self, delta_ms: int) -> int:
        if delta_ms < 0:
            raise ValueError("clock cannot run backwards")
        self._now_ms += delta_ms
        return self._now_ms

    def set_ms(self, value_ms: int) -> None:
        if value_ms < self._now_ms:
            raise ValueError("clock cannot run backwards")
        self._now_ms = value_ms


class WallClock:
    def now_ms(self) -> int:
        return time.time_ns() // 1_000_000


class Stamper:
    """Issues strictly increasing timestamps for a single writer.

    ``op_seq`` keeps growing across calls so two writes from the same
    writer never collide, even when the clock does not move.
    """

    def __init__(self, writer_id: int, clock: Clock):
        self.writer_id = writer_id
        self.clock = clock
        self._op_seq = 0

    def stamp(self) -> Timestamp:
        self._op_seq += 1
        return Timestamp(self.clock.now_ms(), self.writer_id, self._op_seq)

    def cell(self, payload: bytes) -> LwwCell:
        return LwwCell(self.stamp(), bytes(payload))

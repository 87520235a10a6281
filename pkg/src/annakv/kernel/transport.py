"""Message transports.

Both transports share one contract: messages may be delayed, duplicated and
reordered but arrive uncorrupted. Delivery is driven explicitly by the
scheduler (:meth:`Transport.deliver_round`) so runs are reproducible.
:class:`SocketTransport` pushes every frame through a local stream socket
and decodes it on the other side, exercising the wire format end to end.
"""

from __future__ import annotations

import logging
import queue
import random
import socket
import threading
from dataclasses import dataclass
from typing import Callable

from .messages import Message, Request, Response, WireError, decode_message, encode_message, frame_length

log = logging.getLogger(__name__)

Handler = Callable[[Message], "Message | None"]


@dataclass
class FaultConfig:
    duplicate_prob: float = 0.0
    reorder: bool = False
    max_delay_rounds: int = 0


class Transport:
    def __init__(self, faults: FaultConfig | None = None, seed: int = 0):
        self.faults = faults or FaultConfig()
        self.rng = random.Random(seed)
        self._handlers: dict[str, Handler] = {}
        self._queue: list[tuple[int, int, str, Message]] = []
        self._round = 0
        self._seq = 0
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.duplicated = 0
        self.calls = 0

    # -- membership -------------------------------------------------------
    def register(self, address: str, handler: Handler) -> None:
        self._handlers[address] = handler

    def unregister(self, address: str) -> None:
        self._handlers.pop(address, None)

    def is_up(self, address: str) -> bool:
        return address in self._handlers

    # -- wire hook --------------------------------------------------------
    def _transmit(self, msg: Message) -> Message:
        return msg

    # -- async messages -----------------------------------------------------
    def send(self, dst: str, msg: Message) -> bool:
        """Queue ``msg`` for ``dst``; False when ``dst`` is not reachable."""
        if dst not in self._handlers:
            self.dropped += 1
            return False
        delay = self.rng.randint(0, self.faults.max_delay_rounds) if self.faults.max_delay_rounds else 0
        self._enqueue(dst, self._transmit(msg), self._round + 1 + delay)
        self.sent += 1
        if self.faults.duplicate_prob and self.rng.random() < self.faults.duplicate_prob:
            extra = self.rng.randint(0, self.faults.max_delay_rounds) if self.faults.max_delay_rounds else 0
            self._enqueue(dst, msg, self._round + 1 + extra)
            self.duplicated += 1
        return True

    def _enqueue(self, dst: str, msg: Message, ready: int) -> None:
        self._seq += 1
        self._queue.append((ready, self._seq, dst, msg))

    def in_flight(self) -> int:
        return len(self._queue)

    def deliver_round(self) -> int:
        """Deliver every message due this round; returns how many."""
        self._round += 1
        due = [m for m in self._queue if m[0] <= self._round]
        if not due:
            return 0
        self._queue = [m for m in self._queue if m[0] > self._round]
        if self.faults.reorder:
            self.rng.shuffle(due)
        else:
            due.sort(key=lambda m: m[1])
        n = 0
        for _, _, dst, msg in due:
            handler = self._handlers.get(dst)
            if handler is None:
                self.dropped += 1
                continue
            handler(msg)
            n += 1
        self.delivered += n
        return n

    def drain(self, max_rounds: int = 10_000) -> int:
        total = 0
        for _ in range(max_rounds):
            if not self._queue:
                break
            total += self.deliver_round()
        return total

    # -- synchronous request/response ----------------------------------------
    def call(self, dst: str, req: Request) -> Response | None:
        handler = self._handlers.get(dst)
        if handler is None:
            return None
        self.calls += 1
        resp = handler(self._transmit(req))
        if resp is None:
            return None
        return self._transmit(resp)  # type: ignore[return-value]

    def close(self) -> None:
        pass


InMemoryTransport = Transport


class SocketTransport(Transport):
    """Routes every frame through a local stream socket pair."""

    def __init__(self, faults: FaultConfig | None = None, seed: int = 0, timeout_s: float = 10.0):
        super().__init__(faults, seed)
        self._tx, self._rx = socket.socketpair()
        self._frames: queue.Queue[bytes | Exception] = queue.Queue()
        self._timeout = timeout_s
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self.bytes_sent = 0

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self._rx.recv(n - len(buf))
            if not chunk:
                raise EOFError("socket closed")
            buf.extend(chunk)
        return bytes(buf)

    def _read_loop(self) -> None:
        try:
            while True:
                header = self._recv_exact(5)
                body = self._recv_exact(frame_length(header))
                self._frames.put(header + body)
        except (EOFError, OSError):
            return
        except Exception as exc:  # surfaced to the waiting sender
            self._frames.put(exc)

    def _transmit(self, msg: Message) -> Message:
        frame = encode_message(msg)
        self._tx.sendall(frame)
        self.bytes_sent += len(frame)
        got = self._frames.get(timeout=self._timeout)
        if isinstance(got, Exception):
            raise WireError(f"socket reader failed: {got}")
        return decode_message(got)

    def close(self) -> None:
        for s in (self._tx, self._rx):
            try:
                s.close()
            except OSError:
                pass

"""A storage worker: private store, request handling, gossip and handoff."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from contextlib import contextmanager

from ..lattice import Clock, LwwCell, Stamper, Timestamp, merge
from ..metadata import MetaKind, is_meta_key, key_of_rv_key
from ..ring import RingMember, Tier
from .messages import (
    Broadcast,
    BroadcastKind,
    Endpoint,
    GossipAck,
    GossipMessage,
    Message,
    Op,
    Request,
    Response,
    Status,
)
from .storage import TierStore, current_actor, make_store
from .transport import Transport
from .view import MetaView

log = logging.getLogger(__name__)

RV_PREFIX = "__anna_meta__/" + MetaKind.RV.value + "/"


def worker_address(endpoint: Endpoint) -> str:
    return f"{endpoint[0]}/{endpoint[1]}"


class Worker:
    def __init__(
        self,
        node_id: str,
        index: int,
        tier: Tier,
        writer_id: int,
        clock: Clock,
        view: MetaView,
        transport: Transport,
        data_dir: str | None = None,
    ):
        self.node_id = node_id
        self.index = index
        self.tier = tier
        self.endpoint: Endpoint = (node_id, index)
        self.address = worker_address(self.endpoint)
        self.view = view
        self.transport = transport
        self.stamper = Stamper(writer_id, clock)
        self.store: TierStore = make_store(self, tier, data_dir, node_id, index)
        self.dirty: set[str] = set()
        self.access: Counter[str] = Counter()
        # key -> endpoints that still owe an acknowledgement before we may drop it
        self.handoff: dict[str, set[Endpoint]] = {}
        self.ops = 0
        self.gossip_entries_in = 0
        self.gossip_entries_out = 0
        self.redirects = 0
        self.running = True

    def __repr__(self) -> str:
        return f"Worker({self.address})"

    @contextmanager
    def _acting(self):
        token = current_actor.set(self)
        try:
            yield
        finally:
            current_actor.reset(token)

    # -- dispatch ----------------------------------------------------------
    def handle(self, msg: Message) -> Message | None:
        if not self.running:
            return None
        with self._acting():
            if isinstance(msg, Request):
                return self.handle_request(msg)
            if isinstance(msg, GossipMessage):
                self.on_gossip(msg)
            elif isinstance(msg, GossipAck):
                self.on_ack(msg)
            elif isinstance(msg, Broadcast):
                self.on_broadcast(msg)
        return None

    # -- client path ---------------------------------------------------------
    def is_owner(self, key: str) -> bool:
        return self.endpoint in self.view.owner_set(key)

    def handle_request(self, req: Request) -> Response:
        if not req.key or req.op is Op.RESOLVE:
            return Response(Status.ERROR, error="malformed request")
        if is_meta_key(req.key) and not req.internal:
            return Response(Status.ERROR, error="reserved key prefix")
        if req.op is Op.PUT and req.payload is None:
            return Response(Status.ERROR, error="PUT without payload")
        if not self.is_owner(req.key):
            self.redirects += 1
            return Response(Status.REDIRECT, addresses=tuple(self.view.preferred(req.key)))
        self.ops += 1
        if not is_meta_key(req.key):
            self.access[req.key] += 1
        if req.op is Op.GET:
            cell = self.store.load(req.key)
            if cell is None:
                return Response(Status.KEY_MISSING)
            return Response(Status.OK, cell=cell)
        if req.internal and req.ts is not None:
            cell = LwwCell(req.ts, bytes(req.payload))
        else:
            cell = self.stamper.cell(req.payload)
        self._merge_local(req.key, cell, mark_dirty=True)
        return Response(Status.OK, cell=cell)

    def _merge_local(self, key: str, cell: LwwCell, mark_dirty: bool) -> LwwCell:
        current = self.store.load(key)
        merged = cell if current is None else merge(current, cell)
        if merged is not current:
            self.store.persist(key, merged)
            if key.startswith(RV_PREFIX):
                self._on_rv_cell(key_of_rv_key(key), merged)
        if mark_dirty:
            self.dirty.add(key)
        return merged

    # -- gossip ----------------------------------------------------------------
    def gossip_round(self) -> list[tuple[str, GossipMessage]]:
        """Multicast dirty keys to their other replicas and retry handoffs."""
        if not self.running:
            return []
        with self._acting():
            plain: dict[Endpoint, list[tuple[str, LwwCell]]] = defaultdict(list)
            for key in sorted(self.dirty):
                cell = self.store.load(key)
                if cell is None:
                    continue
                for dst in sorted(self.view.owner_set(key) - {self.endpoint}):
                    plain[dst].append((key, cell))
            acked: dict[Endpoint, list[tuple[str, LwwCell]]] = defaultdict(list)
            for key in sorted(self.handoff):
                cell = self.store.load(key)
                if cell is None:
                    del self.handoff[key]
                    continue
                for dst in sorted(self.handoff[key]):
                    acked[dst].append((key, cell))
            out: list[tuple[str, GossipMessage]] = []
            failed: set[str] = set()
            for batch, want_ack in ((plain, False), (acked, True)):
                for dst, entries in sorted(batch.items()):
                    msg = GossipMessage(self.endpoint, tuple(entries), want_ack)
                    if self.transport.send(worker_address(dst), msg):
                        out.append((worker_address(dst), msg))
                        self.gossip_entries_out += len(entries)
                    elif not want_ack:
                        failed.update(k for k, _ in entries)
            self.dirty = failed & self.dirty
            return out

    def on_gossip(self, msg: GossipMessage) -> None:
        acks: list[tuple[str, Timestamp]] = []
        for key, cell in msg.entries:
            self.gossip_entries_in += 1
            merged = self._merge_local(key, cell, mark_dirty=False)
            owner = self.is_owner(key)
            if not owner and key not in self.handoff:
                # stale sender view or stale own view: pass it on rather than keep it
                self._start_handoff(key)
            if msg.want_ack and owner:
                acks.append((key, merged.ts))
        if acks:
            self.transport.send(worker_address(msg.sender), GossipAck(self.endpoint, tuple(acks)))

    def on_ack(self, ack: GossipAck) -> None:
        for key, ts in ack.entries:
            pending = self.handoff.get(key)
            if pending is None:
                continue
            cell = self.store.load(key)
            if cell is not None and ts >= cell.ts:
                pending.discard(ack.sender)
            if not pending:
                self._finish_handoff(key)

    def _start_handoff(self, key: str) -> None:
        targets = self.view.owner_set(key) - {self.endpoint}
        self.dirty.discard(key)
        if targets:
            self.handoff[key] = targets
        else:
            # nobody else can own it yet; keep the data until the view improves
            self.handoff.pop(key, None)

    def _finish_handoff(self, key: str) -> None:
        del self.handoff[key]
        if not self.is_owner(key):
            self.store.delete(key)

    def pending_work(self) -> bool:
        return bool(self.dirty or self.handoff)

    # -- membership / metadata changes -------------------------------------------
    def on_broadcast(self, b: Broadcast) -> None:
        if b.kind is BroadcastKind.JOIN:
            tier = Tier(b.tier)
            ring = self.view.global_rings[tier]
            if b.node_id not in ring:
                self._reshape(lambda: self.view.set_ring(tier, ring.insert(RingMember(b.node_id, b.weight))))
        elif b.kind in (BroadcastKind.DEPART, BroadcastKind.REMOVE):
            tier = Tier(b.tier)
            ring = self.view.global_rings[tier]
            if b.node_id in ring:
                self._reshape(lambda: self.view.set_ring(tier, ring.remove(b.node_id)))
        elif b.kind is BroadcastKind.RV and b.cell is not None:
            self._on_rv_cell(b.key, b.cell)

    def _on_rv_cell(self, key: str, cell: LwwCell) -> None:
        old = self.view.owner_set(key)
        if self.view.apply_rv(key, cell):
            self._rebalance_key(key, old)

    def _reshape(self, change) -> None:
        keys = list(self.store.keys())
        old = {k: self.view.owner_set(k) for k in keys}
        if change():
            for k in keys:
                self._rebalance_key(k, old[k])
            for k in list(self.handoff):
                if k not in old:
                    self._rebalance_key(k, set())

    def _rebalance_key(self, key: str, old_owners: set[Endpoint]) -> None:
        if self.store.load(key) is None:
            return
        new_owners = self.view.owner_set(key)
        if self.endpoint in new_owners:
            self.handoff.pop(key, None)
            if new_owners - old_owners - {self.endpoint}:
                self.dirty.add(key)
        else:
            self._start_handoff(key)

    # -- statistics ------------------------------------------------------------
    def take_counters(self) -> tuple[Counter[str], int, int]:
        with self._acting():
            counts, self.access = self.access, Counter()
            ops, self.ops = self.ops, 0
            gossip, self.gossip_entries_in = self.gossip_entries_in, 0
            return counts, ops, gossip

    def storage_usage(self) -> tuple[int, int]:
        return self.store.stored_bytes(), len(self.store)

    def snapshot(self) -> dict[str, LwwCell]:
        """Copy of the store, for tests and oracles."""
        with self._acting():
            out = {}
            for k in self.store.keys():
                c = self.store.load(k)
                if c is not None:
                    out[k] = c
            return out

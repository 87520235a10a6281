"""Storage node: owns a set of workers, heartbeats, joins and departs."""

from __future__ import annotations

import logging
from collections import Counter
from typing import Callable, Iterable

from ..lattice import Clock, LwwCell, Timestamp
from ..metadata import (
    MetaKind,
    NodeStats,
    encode_key_stats,
    encode_node_stats,
    meta_key,
)
from ..ring import RingMember, Tier, encode_membership
from .messages import Broadcast, BroadcastKind, Message, Op, Request, Response, Status
from .transport import Transport
from .view import MetaView
from .worker import Worker, worker_address

log = logging.getLogger(__name__)

WRITER_STRIDE = 64


def ring_meta_key(tier: Tier) -> str:
    return meta_key(MetaKind.RING, [tier.name])


def route_internal(transport: Transport, view: MetaView, req: Request, max_hops: int = 4) -> Response | None:
    """Send an internal request to an owner of its key, following redirects."""
    candidates = [worker_address(e) for e in view.preferred(req.key)]
    tried: set[str] = set()
    hops = 0
    while candidates and hops < max_hops:
        addr = candidates.pop(0)
        if addr in tried:
            continue
        tried.add(addr)
        resp = transport.call(addr, req)
        if resp is None:
            continue
        if resp.status is Status.REDIRECT:
            hops += 1
            candidates = [worker_address(e) for e in resp.addresses] + candidates
            continue
        return resp
    return None


class StorageNode:
    def __init__(
        self,
        node_id: str,
        tier: Tier,
        ordinal: int,
        n_workers: int,
        clock: Clock,
        view: MetaView,
        transport: Transport,
        directory: Callable[[], Iterable[str]],
        data_dir: str | None = None,
        weight: int = 100,
        capacity_bytes: int = 1 << 30,
        op_cost_ms: float = 0.05,
        gossip_cost_ms: float = 0.01,
    ):
        self.node_id = node_id
        self.tier = tier
        self.weight = weight
        self.clock = clock
        self.transport = transport
        self.directory = directory
        self.view = view.copy()
        self.capacity_bytes = capacity_bytes
        self.op_cost_ms = op_cost_ms
        self.gossip_cost_ms = gossip_cost_ms
        self.workers = [
            Worker(node_id, i, tier, ordinal * WRITER_STRIDE + i, clock, view.copy(), transport, data_dir)
            for i in range(n_workers)
        ]
        self.last_heard: dict[str, int] = {}
        self.state = "LIVE"
        self.running = True
        transport.register(node_id, self.handle)
        for w in self.workers:
            transport.register(w.address, w.handle)

    def __repr__(self) -> str:
        return f"StorageNode({self.node_id}, {self.tier.name})"

    # -- messaging -------------------------------------------------------------
    def handle(self, msg: Message) -> Message | None:
        if not self.running or not isinstance(msg, Broadcast):
            return None
        if msg.node_id != self.node_id:
            self.last_heard[msg.node_id] = self.clock.now_ms()
        if msg.kind is BroadcastKind.HEARTBEAT:
            return None
        self._apply_to_view(self.view, msg)
        for w in self.workers:
            w.handle(msg)
        return None

    @staticmethod
    def _apply_to_view(view: MetaView, b: Broadcast) -> None:
        if b.kind is BroadcastKind.JOIN:
            ring = view.global_rings[Tier(b.tier)]
            if b.node_id not in ring:
                view.set_ring(Tier(b.tier), ring.insert(RingMember(b.node_id, b.weight)))
        elif b.kind in (BroadcastKind.DEPART, BroadcastKind.REMOVE):
            view.set_ring(Tier(b.tier), view.global_rings[Tier(b.tier)].remove(b.node_id))
        elif b.kind is BroadcastKind.RV and b.cell is not None:
            view.apply_rv(b.key, b.cell)

    def broadcast(self, kind: BroadcastKind, **fields) -> int:
        msg = Broadcast(kind, self.node_id, int(self.tier), self.weight, sent_ms=self.clock.now_ms(), **fields)
        sent = 0
        for addr in self.directory():
            if addr != self.node_id and self.transport.send(addr, msg):
                sent += 1
        return sent

    def heartbeat(self) -> None:
        if self.running:
            self.broadcast(BroadcastKind.HEARTBEAT)

    def gossip(self) -> int:
        if not self.running:
            return 0
        return sum(len(w.gossip_round()) for w in self.workers)

    def suspects(self, timeout_ms: int) -> list[str]:
        now = self.clock.now_ms()
        out = []
        for tier in Tier:
            for peer in self.view.global_rings[tier].member_ids:
                if peer == self.node_id:
                    continue
                heard = self.last_heard.setdefault(peer, now)
                if now - heard > timeout_ms:
                    out.append(peer)
        return out

    def remove_peer(self, peer: str, tier: Tier) -> None:
        """Local reaction to a failure timeout: drop ``peer`` from every ring view."""
        self.handle(Broadcast(BroadcastKind.REMOVE, peer, int(tier)))

    # -- lifecycle ---------------------------------------------------------------
    def join(self) -> None:
        """Insert self into the tier ring, persist it, announce to everyone."""
        ring = self.view.global_rings[self.tier].insert(RingMember(self.node_id, self.weight))
        self.view.set_ring(self.tier, ring)
        for w in self.workers:
            w.view.set_ring(self.tier, ring)
        self.put_internal(ring_meta_key(self.tier), encode_membership(ring))
        self.broadcast(BroadcastKind.JOIN)

    def depart(self) -> None:
        self.state = "DEPARTING"
        ring = self.view.global_rings[self.tier].remove(self.node_id)
        self.put_internal(ring_meta_key(self.tier), encode_membership(ring))
        self.broadcast(BroadcastKind.DEPART)
        self.handle(Broadcast(BroadcastKind.DEPART, self.node_id, int(self.tier)))

    def drained(self) -> bool:
        return all(len(w.store) == 0 and not w.handoff for w in self.workers)

    def stop(self) -> None:
        self.running = False
        for w in self.workers:
            w.running = False
            self.transport.unregister(w.address)
        self.transport.unregister(self.node_id)

    fail = stop

    # -- internal metadata access -------------------------------------------------
    def put_internal(self, key: str, payload: bytes, ts: Timestamp | None = None) -> LwwCell | None:
        resp = route_internal(self.transport, self.view, Request(Op.PUT, key, payload, internal=True, ts=ts))
        return resp.cell if resp is not None and resp.status is Status.OK else None

    def get_internal(self, key: str) -> LwwCell | None:
        resp = route_internal(self.transport, self.view, Request(Op.GET, key, internal=True))
        return resp.cell if resp is not None and resp.status is Status.OK else None

    # -- statistics ------------------------------------------------------------------
    def collect_stats(self, epoch: int, window_ms: int) -> tuple[NodeStats, Counter[str]]:
        counts: Counter[str] = Counter()
        ops = gossip = 0
        stored = replicas = 0
        for w in self.workers:
            c, o, g = w.take_counters()
            counts.update(c)
            ops += o
            gossip += g
            b, n = w.storage_usage()
            stored += b
            replicas += n
        busy = ops * self.op_cost_ms + gossip * self.gossip_cost_ms
        occupancy = min(1.0, busy / max(1.0, window_ms * len(self.workers)))
        stats = NodeStats(
            node_id=self.node_id,
            tier=self.tier,
            occupancy=occupancy,
            storage_fraction=min(1.0, stored / self.capacity_bytes),
            epoch=epoch,
            stored_bytes=stored,
            capacity_bytes=self.capacity_bytes,
            key_replicas=replicas,
        )
        return stats, counts

    def publish_stats(self, epoch: int, window_ms: int) -> NodeStats:
        stats, counts = self.collect_stats(epoch, window_ms)
        self.put_internal(meta_key(MetaKind.NODE_STATS, [self.node_id, str(epoch)]), encode_node_stats(stats))
        self.put_internal(meta_key(MetaKind.KEY_STATS, [self.node_id, str(epoch)]), encode_key_stats(counts))
        return stats

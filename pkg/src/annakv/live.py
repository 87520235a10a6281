"""A complete in-process cluster: storage nodes, routing nodes and clients.

Everything runs on one thread under a simulated clock. Client requests are
synchronous calls; gossip, acknowledgements and broadcasts are queued and
delivered one round at a time, so the run is fully deterministic for a
given seed and fault configuration.
"""

from __future__ import annotations

import logging
import shutil
import tempfile
from typing import Iterable, Mapping

from .cluster import ClusterManager, CostModel, NodeHandle, NodeState
from .kernel.messages import Broadcast, BroadcastKind, Endpoint
from .kernel.node import StorageNode, ring_meta_key
from .kernel.transport import Transport
from .kernel.view import MetaView
from .lattice import LwwCell, SimClock, Stamper, merge
from .metadata import (
    LatencyReport,
    ReplicationVector,
    encode_latency,
    encode_rv,
    meta_key,
    MetaKind,
    rv_key,
)
from .monitor import ClusterSnapshot, collect
from .ring import TIERS, RingMember, Tier, decode_membership, encode_membership, local_ring, make_ring
from .routing import Client, RoutingNode

log = logging.getLogger(__name__)

DEFAULT_WORKERS = {Tier.MEM: 4, Tier.EBS: 4}
MANAGER_WRITER = 2**32 - 1


class LiveMetaStore:
    """Monitor-facing view of the metadata keys held by the live cluster."""

    def __init__(self, cluster: "LiveCluster"):
        self.cluster = cluster

    def get(self, key: str) -> bytes | None:
        cell = self.cluster.get_internal(key)
        if cell is None or cell.is_tombstone:
            return None
        return cell.payload

    def scan(self, prefix: str) -> list[tuple[str, bytes]]:
        # administrative scan of every running worker, merged per key
        found: dict[str, LwwCell] = {}
        for node in self.cluster.running_nodes():
            for w in node.workers:
                for key, cell in w.snapshot().items():
                    if key.startswith(prefix):
                        old = found.get(key)
                        found[key] = cell if old is None else merge(old, cell)
        return sorted((k, c.payload) for k, c in found.items() if not c.is_tombstone)


class LiveCluster:
    def __init__(
        self,
        mem_nodes: int = 1,
        ebs_nodes: int = 3,
        k: int = 2,
        workers: Mapping[Tier, int] | None = None,
        transport: Transport | None = None,
        seed: int = 0,
        data_dir: str | None = None,
        gossip_period_ms: int = 100,
        heartbeat_timeout_ms: int | None = None,
        spawn_delay_s: float = 5.0,
        n_routing: int = 2,
        n_clients: int = 8,
        capacity_bytes: int = 1 << 20,
        cost: CostModel = CostModel(),
        op_cost_ms: Mapping[Tier, float] | None = None,
    ):
        self.k = k
        self.workers = dict(workers or DEFAULT_WORKERS)
        self.clock = SimClock()
        self.transport = transport or Transport(seed=seed)
        self._own_dir = data_dir is None
        self.data_dir = data_dir or tempfile.mkdtemp(prefix="annakv-")
        self.gossip_period_ms = gossip_period_ms
        self.heartbeat_timeout_ms = heartbeat_timeout_ms or 5 * gossip_period_ms
        self.capacity_bytes = capacity_bytes
        # simulated service time per request, which drives reported occupancy
        self.op_cost_ms = dict(op_cost_ms or {Tier.MEM: 0.05, Tier.EBS: 0.05})
        self.manager = ClusterManager(self, k, self.workers, spawn_delay_s, cost)
        self.nodes: dict[str, StorageNode] = {}
        self._ordinal = 0
        self.rounds = 0
        # membership changes are serialised through the manager, so ring
        # metadata has a single writer; the top node_seq wins same-ms ties
        # against a joining or departing node's own write
        self._ring_stamper = Stamper(MANAGER_WRITER, self.clock)

        ids = {t: self.manager.bootstrap(t, n) for t, n in ((Tier.MEM, mem_nodes), (Tier.EBS, ebs_nodes))}
        rings = {t: make_ring([RingMember(i) for i in ids[t]]) for t in TIERS}
        view = MetaView(k, rings, {t: local_ring(self.workers[t]) for t in TIERS})
        for t in TIERS:
            for nid in ids[t]:
                self._make_node(nid, t, view)
        self.routing = [
            RoutingNode(f"route{i}", self.transport, k, self.workers, self._seeds, self.clock)
            for i in range(n_routing)
        ]
        first = self.nodes[ids[Tier.MEM][0]] if ids[Tier.MEM] else next(iter(self.nodes.values()))
        for t in TIERS:
            first.put_internal(ring_meta_key(t), encode_membership(rings[t]), self._ring_stamper.stamp())
        self.clients = [
            Client(
                f"client{i}",
                self.transport,
                [r.address for r in self.routing],
                seed=seed * 1000 + i,
                on_backoff=self._on_backoff,
                tier_of=self.tier_of,
            )
            for i in range(n_clients)
        ]
        self.meta = LiveMetaStore(self)

    # -- wiring -------------------------------------------------------------------
    def _make_node(self, node_id: str, tier: Tier, view: MetaView) -> StorageNode:
        node = StorageNode(
            node_id,
            tier,
            self._ordinal,
            self.workers[tier],
            self.clock,
            view,
            self.transport,
            self.directory,
            data_dir=self.data_dir,
            capacity_bytes=self.capacity_bytes,
            op_cost_ms=self.op_cost_ms[tier],
        )
        self._ordinal += 1
        self.nodes[node_id] = node
        return node

    def directory(self) -> list[str]:
        return [nid for nid, n in self.nodes.items() if n.running] + [r.address for r in self.routing]

    def _seeds(self) -> list[str]:
        return [nid for nid, n in self.nodes.items() if n.running and n.state == "LIVE"]

    def running_nodes(self) -> list[StorageNode]:
        return [n for n in self.nodes.values() if n.running]

    def tier_of(self, node_id: str) -> Tier:
        node = self.nodes.get(node_id)
        if node is not None:
            return node.tier
        return Tier.MEM if node_id.startswith("m") else Tier.EBS

    def any_live(self) -> StorageNode:
        for nid in self._seeds():
            return self.nodes[nid]
        raise RuntimeError("no live storage node")

    def get_internal(self, key: str) -> LwwCell | None:
        return self.any_live().get_internal(key)

    def put_internal(self, key: str, payload: bytes) -> LwwCell | None:
        return self.any_live().put_internal(key, payload)

    # -- Backend interface for the manager ------------------------------------------
    def spawn(self, handle: NodeHandle) -> None:
        # a fresh node bootstraps its view from an existing member's metadata
        base = self.any_live().view
        node = self._make_node(handle.node_id, handle.tier, base)
        node.join()
        self._publish_ring(handle.tier)

    def depart(self, handle: NodeHandle) -> None:
        self.nodes[handle.node_id].depart()
        self._publish_ring(handle.tier)

    def drained(self, handle: NodeHandle) -> bool:
        return self.nodes[handle.node_id].drained()

    def deallocate(self, handle: NodeHandle) -> None:
        self.nodes[handle.node_id].stop()

    def kill(self, handle: NodeHandle) -> None:
        self.nodes[handle.node_id].fail()

    def suspected(self, now: float) -> Iterable[str]:
        out: set[str] = set()
        for node in self.running_nodes():
            out.update(node.suspects(self.heartbeat_timeout_ms))
        return out

    def declare_failed(self, handle: NodeHandle) -> None:
        b = Broadcast(BroadcastKind.REMOVE, handle.node_id, int(handle.tier))
        for node in self.running_nodes():
            node.remove_peer(handle.node_id, handle.tier)
        for r in self.routing:
            r.handle(b)
        self._publish_ring(handle.tier)

    def _publish_ring(self, tier: Tier) -> None:
        live = [nid for nid in self.manager.ids(tier) if self.nodes.get(nid) is not None]
        ring = make_ring([RingMember(nid, self.nodes[nid].weight) for nid in live])
        self.any_live().put_internal(ring_meta_key(tier), encode_membership(ring), self._ring_stamper.stamp())

    def apply_rv(self, key: str, rv: ReplicationVector) -> LwwCell | None:
        if rv.total_replicas < self.k + 1:
            raise ValueError(f"replication vector {rv} breaks the k={self.k} floor")
        node = self.any_live()
        if node.view.rv(key) == rv:
            # unchanged placement: nothing to write, nothing to gossip
            return node.view.rv_cells.get(key)
        cell = node.put_internal(rv_key(key), encode_rv(rv))
        if cell is None:
            raise RuntimeError(f"could not store replication vector for {key!r}")
        node.handle(Broadcast(BroadcastKind.RV, node.node_id, int(node.tier), key=key, cell=cell))
        node.broadcast(BroadcastKind.RV, key=key, cell=cell)
        return cell

    # -- time ------------------------------------------------------------------------------
    def gossip_round(self, heartbeat: bool = True) -> None:
        for node in self.running_nodes():
            if heartbeat:
                node.heartbeat()
            node.gossip()
        self.transport.deliver_round()
        self.rounds += 1

    def step(self, ms: int) -> None:
        """Advance simulated time, running gossip and the manager loop."""
        end = self.clock.now_ms() + ms
        while self.clock.now_ms() < end:
            self.clock.advance_ms(min(self.gossip_period_ms, end - self.clock.now_ms()))
            self.gossip_round()
            now = self.clock.now_s()
            self.manager.tick(now)
            self.manager.detect_failures(now)

    def _on_backoff(self, ms: int) -> None:
        self.step(ms)

    def pending_work(self) -> bool:
        if self.transport.in_flight():
            return True
        return any(w.pending_work() for n in self.running_nodes() for w in n.workers)

    def quiesce(self, max_rounds: int = 5000) -> int:
        """Run gossip rounds without advancing time until nothing is left to do."""
        for i in range(max_rounds):
            if not self.pending_work():
                return i
            self.gossip_round(heartbeat=False)
        raise RuntimeError("cluster did not quiesce")

    def settle(self, max_ms: int = 60_000) -> None:
        """Advance time until no node is pending or departing, then quiesce."""
        waited = 0
        while waited < max_ms:
            busy = self.manager.ids(None, (NodeState.PENDING, NodeState.DEPARTING))
            if not busy and not self.pending_work():
                break
            self.step(self.gossip_period_ms)
            waited += self.gossip_period_ms
        self.quiesce()

    # -- monitoring ---------------------------------------------------------------------------
    def membership(self) -> dict[Tier, list[str]]:
        out: dict[Tier, list[str]] = {}
        for t in TIERS:
            cell = self.get_internal(ring_meta_key(t))
            out[t] = decode_membership(cell.payload).member_ids if cell is not None else []
        return out

    def publish_window(self, epoch: int, window_ms: int) -> None:
        for node in self.running_nodes():
            if node.state == "LIVE":
                node.publish_stats(epoch, window_ms)
        for c in self.clients:
            report = c.take_latency_report(epoch)
            if report is not None:
                self.put_internal(meta_key(MetaKind.LATENCY, [c.client_id, str(epoch)]), encode_latency(report))

    def snapshot(self, epoch: int) -> ClusterSnapshot:
        return collect(
            self.meta,
            epoch,
            self.membership(),
            [c.client_id for c in self.clients],
            time_s=self.clock.now_s(),
            shape=self.manager.shape(),
        )

    # -- inspection ------------------------------------------------------------------------------
    def replicas(self, key: str) -> dict[Endpoint, LwwCell]:
        out = {}
        for node in self.running_nodes():
            for w in node.workers:
                cell = w.snapshot().get(key)
                if cell is not None:
                    out[w.endpoint] = cell
        return out

    def all_replicas(self) -> dict[str, dict[Endpoint, LwwCell]]:
        out: dict[str, dict[Endpoint, LwwCell]] = {}
        for node in self.running_nodes():
            for w in node.workers:
                for key, cell in w.snapshot().items():
                    out.setdefault(key, {})[w.endpoint] = cell
        return out

    def close(self) -> None:
        self.transport.close()
        if self._own_dir:
            shutil.rmtree(self.data_dir, ignore_errors=True)

    def __enter__(self) -> "LiveCluster":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


__all__ = ["LiveCluster", "LiveMetaStore", "LatencyReport"]

"""Address resolution service and the client library.

Routing nodes keep only soft state (cached rings and replication vectors)
that can be rebuilt from metadata at any time. Clients cache addresses and
the last cell seen per key; reads are merged into that cache so a client
never observes a value older than one it has already returned.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from .kernel.messages import Broadcast, BroadcastKind, Endpoint, Message, Op, Request, Response, Status
from .kernel.node import ring_meta_key, route_internal
from .kernel.transport import Transport
from .kernel.view import MetaView
from .kernel.worker import worker_address
from .lattice import Clock, LwwCell, merge
from .metadata import MetaKind, is_meta_key, meta_key, encode_latency, LatencyReport, rv_key
from .ring import TIERS, HashRing, RingMember, Tier, decode_membership, local_ring

log = logging.getLogger(__name__)


class RoutingError(Exception):
    pass


class Unavailable(RoutingError):
    pass


@dataclass(frozen=True)
class AddressSet:
    key: str
    by_tier: Mapping[Tier, tuple[Endpoint, ...]]
    version: int = 0

    @property
    def endpoints(self) -> tuple[Endpoint, ...]:
        return tuple(e for t in TIERS for e in self.by_tier.get(t, ()))

    @property
    def tier(self) -> Tier:
        return Tier.MEM if self.by_tier.get(Tier.MEM) else Tier.EBS


def select_addresses(key: str, owners: Mapping[Tier, list[Endpoint]], version: int = 0) -> AddressSet:
    """Apply the memory-first preference rule to a per-tier owner map."""
    if owners.get(Tier.MEM):
        chosen = {Tier.MEM: tuple(owners[Tier.MEM])}
    elif owners.get(Tier.EBS):
        chosen = {Tier.EBS: tuple(owners[Tier.EBS])}
    else:
        raise RoutingError(f"no live node owns {key!r}")
    return AddressSet(key, chosen, version)


class RoutingNode:
    def __init__(
        self,
        address: str,
        transport: Transport,
        k: int,
        workers_per_node: Mapping[Tier, int],
        seeds: Callable[[], Iterable[str]],
        clock: Clock,
        refresh_every_ms: int = 5 * 30_000,
    ):
        self.address = address
        self.transport = transport
        self.k = k
        self.workers_per_node = dict(workers_per_node)
        self.seeds = seeds
        self.clock = clock
        self.refresh_every_ms = refresh_every_ms
        self.view: MetaView | None = None
        self._rv_known: set[str] = set()
        self._last_refresh = -1
        self.version = 0
        self.resolves = 0
        transport.register(address, self.handle)

    def restart(self) -> None:
        """Lose all soft state, as after a crash."""
        self.view = None
        self._rv_known.clear()
        self._last_refresh = -1

    def handle(self, msg: Message) -> Message | None:
        if isinstance(msg, Request):
            if msg.op is not Op.RESOLVE:
                return Response(Status.ERROR, error="routing nodes only resolve")
            try:
                aset = self.resolve(msg.key, refresh=msg.refresh)
            except RoutingError as exc:
                return Response(Status.ERROR, error=str(exc))
            return Response(Status.OK, addresses=aset.endpoints)
        if isinstance(msg, Broadcast) and self.view is not None:
            if msg.kind is BroadcastKind.JOIN:
                ring = self.view.global_rings[Tier(msg.tier)]
                if msg.node_id not in ring:
                    self.view.set_ring(Tier(msg.tier), ring.insert(RingMember(msg.node_id, msg.weight)))
                    self.version += 1
            elif msg.kind in (BroadcastKind.DEPART, BroadcastKind.REMOVE):
                if self.view.set_ring(Tier(msg.tier), self.view.global_rings[Tier(msg.tier)].remove(msg.node_id)):
                    self.version += 1
            elif msg.kind is BroadcastKind.RV and msg.cell is not None:
                self.view.apply_rv(msg.key, msg.cell)
                self._rv_known.add(msg.key)
        return None

    # -- metadata reads -------------------------------------------------------
    def _seed_get(self, key: str) -> LwwCell | None:
        req = Request(Op.GET, key, internal=True)
        for seed in sorted(self.seeds()):
            resp = self.transport.call(worker_address((seed, 0)), req)
            hops = 0
            while resp is not None and resp.status is Status.REDIRECT and resp.addresses and hops < 4:
                hops += 1
                resp = self.transport.call(worker_address(resp.addresses[0]), req)
            if resp is not None and resp.status is Status.OK:
                return resp.cell
            if resp is not None and resp.status is Status.KEY_MISSING:
                return None
        return None

    def refresh_rings(self) -> None:
        rings: dict[Tier, HashRing] = {}
        for tier in TIERS:
            cell = self._seed_get(ring_meta_key(tier))
            rings[tier] = decode_membership(cell.payload) if cell is not None else HashRing()
        if self.view is None:
            locals_ = {t: local_ring(self.workers_per_node[t]) for t in TIERS}
            self.view = MetaView(self.k, rings, locals_)
        else:
            for tier, ring in rings.items():
                self.view.set_ring(tier, ring)
        self._rv_known.clear()
        self._last_refresh = self.clock.now_ms()
        self.version += 1

    def _load_rv(self, key: str) -> None:
        assert self.view is not None
        if is_meta_key(key) or key in self._rv_known:
            return
        resp = route_internal(self.transport, self.view, Request(Op.GET, rv_key(key), internal=True))
        if resp is not None and resp.status is Status.OK and resp.cell is not None:
            self.view.apply_rv(key, resp.cell)
        self._rv_known.add(key)

    def resolve(self, key: str, refresh: bool = False) -> AddressSet:
        self.resolves += 1
        stale = self._last_refresh < 0 or self.clock.now_ms() - self._last_refresh >= self.refresh_every_ms
        if self.view is None or refresh or stale:
            self.refresh_rings()
        self._load_rv(key)
        assert self.view is not None
        return select_addresses(key, self.view.owners(key), self.version)


class Client:
    """Client handle. Not safe for concurrent use; one logical owner at a time."""

    def __init__(
        self,
        client_id: str,
        transport: Transport,
        routing: Iterable[str],
        seed: int = 0,
        max_attempts: int = 4,
        backoff_ms: int = 100,
        on_backoff: Callable[[int], None] | None = None,
        latency_of: Callable[[Endpoint, Tier, int], float] | None = None,
        tier_of: Callable[[str], Tier] | None = None,
    ):
        self.client_id = client_id
        self.transport = transport
        self.routing = list(routing)
        if not self.routing:
            raise ValueError("client needs at least one routing endpoint")
        self.rng = random.Random(seed)
        self.max_attempts = max_attempts
        self.backoff_ms = backoff_ms
        self.on_backoff = on_backoff
        self.tier_of = tier_of
        self.latency_of = latency_of or (lambda ep, tier, hops: (1.0 if tier is Tier.MEM else 20.0) * hops)
        self.address_cache: dict[str, AddressSet] = {}
        self.value_cache: dict[str, LwwCell] = {}
        self.resolve_calls = 0
        self.latencies: list[float] = []
        self.served_by: list[Endpoint] = []

    # -- public API ----------------------------------------------------------------
    def get(self, key: str) -> bytes | None:
        cell = self.client_op(Op.GET, key)
        if cell is None or cell.is_tombstone:
            return None
        return cell.payload

    def put(self, key: str, payload: bytes) -> LwwCell:
        cell = self.client_op(Op.PUT, key, payload)
        assert cell is not None
        return cell

    def delete(self, key: str) -> LwwCell:
        return self.put(key, b"")

    # -- machinery -------------------------------------------------------------------
    def _resolve(self, key: str, refresh: bool) -> AddressSet:
        req = Request(Op.RESOLVE, key, refresh=refresh)
        for i in range(len(self.routing)):
            addr = self.routing[(self.rng.randrange(len(self.routing)) + i) % len(self.routing)]
            resp = self.transport.call(addr, req)
            if resp is None:
                continue
            self.resolve_calls += 1
            if resp.status is Status.OK and resp.addresses:
                by_tier: dict[Tier, list[Endpoint]] = {}
                # MEM-first rule means a single tier comes back; remember which
                tier = self._tier_of(resp.addresses[0])
                by_tier[tier] = list(resp.addresses)
                aset = AddressSet(key, {t: tuple(v) for t, v in by_tier.items()})
                self.address_cache[key] = aset
                return aset
        raise Unavailable(f"no routing node could resolve {key!r}")

    def _tier_of(self, endpoint: Endpoint) -> Tier:
        return self.tier_of(endpoint[0]) if self.tier_of is not None else Tier.MEM

    def client_op(self, op: Op, key: str, payload: bytes | None = None) -> LwwCell | None:
        if is_meta_key(key):
            raise ValueError(f"key {key!r} uses the reserved metadata prefix")
        if not key:
            raise ValueError("empty key")
        req = Request(op, key, payload)
        refresh = False
        delay = self.backoff_ms
        redirects = 0
        for attempt in range(self.max_attempts):
            resp = None
            aset = self.address_cache.get(key)
            if aset is None:
                try:
                    aset = self._resolve(key, refresh)
                except Unavailable:
                    aset = None
            if aset is not None and aset.endpoints:
                endpoint = self.rng.choice(aset.endpoints)
                resp = self.transport.call(worker_address(endpoint), req)
                if resp is not None and resp.status is not Status.REDIRECT:
                    if resp.status is Status.ERROR:
                        raise RoutingError(resp.error)
                    self.latencies.append(self.latency_of(endpoint, aset.tier, attempt + 1))
                    self.served_by.append(endpoint)
                    return self._absorb(key, resp.cell)
            # invalidated: moved key, dead replica, or unresolved
            self.address_cache.pop(key, None)
            refresh = True
            if resp is not None and resp.status is Status.REDIRECT:
                redirects += 1
            # a first redirect is an answer, not a failure: re-resolve straight
            # away; repeated ones mean metadata is still settling, so wait
            waiting = resp is None or resp.status is not Status.REDIRECT or redirects > 1
            if waiting and attempt + 1 < self.max_attempts and self.on_backoff is not None:
                self.on_backoff(delay)
                delay *= 2
        raise Unavailable(f"{op.value} {key!r} failed after {self.max_attempts} attempts")

    def _absorb(self, key: str, cell: LwwCell | None) -> LwwCell | None:
        if cell is None:
            return self.value_cache.get(key)
        seen = self.value_cache.get(key)
        merged = cell if seen is None else merge(seen, cell)
        self.value_cache[key] = merged
        return merged

    # -- statistics ------------------------------------------------------------------
    def take_latency_report(self, epoch: int) -> LatencyReport | None:
        if not self.latencies:
            return None
        n = len(self.latencies)
        report = LatencyReport(self.client_id, epoch, sum(self.latencies) / n, n)
        self.latencies.clear()
        return report


def latency_report_key(client_id: str, epoch: int) -> str:
    return meta_key(MetaKind.LATENCY, [client_id, str(epoch)])


def encode_report(report: LatencyReport) -> bytes:
    return encode_latency(report)

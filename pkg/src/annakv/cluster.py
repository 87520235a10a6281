"""Cluster manager: node lifecycle, failure handling and cost accounting.

The manager is the only actor that changes membership. It talks to the
nodes through a small backend interface so the same state machine drives
both the analytic capacity simulator and the live in-process cluster.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Protocol

from .metadata import ReplicationVector
from .monitor import ClusterShape
from .ring import TIERS, Tier

if TYPE_CHECKING:
    from .policy import ActionPlan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostModel:
    """Hourly prices per node; ``overhead`` covers routing and monitoring nodes."""

    mem: float = 0.532
    ebs: float = 0.133
    overhead: float = 0.30

    def __post_init__(self):
        if self.mem <= 0 or self.ebs <= 0 or self.overhead < 0:
            raise ValueError("prices must be positive")

    def price(self, tier: Tier) -> float:
        return self.mem if tier is Tier.MEM else self.ebs


def hourly_cost(counts: Mapping[Tier, int], model: CostModel = CostModel()) -> float:
    """Cost per hour of a topology (pending nodes included by the caller)."""
    if sum(counts.values()) <= 0:
        raise ValueError("empty cluster shape")
    if any(n < 0 for n in counts.values()):
        raise ValueError("negative node count")
    return sum(counts.get(t, 0) * model.price(t) for t in TIERS) + model.overhead


class NodeState(enum.Enum):
    PENDING = "PENDING"
    LIVE = "LIVE"
    DEPARTING = "DEPARTING"
    FAILED = "FAILED"
    GONE = "GONE"


_TRANSITIONS = {
    NodeState.PENDING: {NodeState.LIVE},
    NodeState.LIVE: {NodeState.DEPARTING, NodeState.FAILED},
    NodeState.DEPARTING: {NodeState.GONE, NodeState.FAILED},
    NodeState.FAILED: set(),
    NodeState.GONE: set(),
}


@dataclass
class NodeHandle:
    node_id: str
    tier: Tier
    state: NodeState
    spawn_deadline: float = 0.0
    crashed: bool = False  # killed but not yet detected

    def move(self, new: NodeState) -> None:
        if new not in _TRANSITIONS[self.state]:
            raise ValueError(f"{self.node_id}: illegal transition {self.state.name} -> {new.name}")
        self.state = new


class Backend(Protocol):
    def spawn(self, handle: NodeHandle) -> None: ...

    def depart(self, handle: NodeHandle) -> None: ...

    def drained(self, handle: NodeHandle) -> bool: ...

    def deallocate(self, handle: NodeHandle) -> None: ...

    def kill(self, handle: NodeHandle) -> None: ...

    def suspected(self, now: float) -> Iterable[str]: ...

    def declare_failed(self, handle: NodeHandle) -> None: ...

    def apply_rv(self, key: str, rv: ReplicationVector) -> None: ...


def _plan_signature(plan: "ActionPlan") -> tuple:
    return (
        tuple(sorted((int(t), n) for t, n in plan.add_nodes.items() if n)),
        tuple(sorted(plan.remove_nodes)),
        tuple(sorted((k, str(rv)) for k, rv in plan.rv_updates)),
    )


class ClusterManager:
    def __init__(
        self,
        backend: Backend,
        k: int,
        workers: Mapping[Tier, int],
        spawn_delay_s: float = 5.0,
        cost: CostModel = CostModel(),
    ):
        self.backend = backend
        self.k = k
        self.workers = dict(workers)
        self.spawn_delay_s = spawn_delay_s
        self.cost_model = cost
        self.nodes: dict[str, NodeHandle] = {}
        self._next = {t: 0 for t in TIERS}
        self._inflight: dict[tuple, set[str]] = {}
        self.degraded = False
        self.events: list[tuple[float, str, str]] = []

    # -- bookkeeping ------------------------------------------------------------
    def floor(self, tier: Tier) -> int:
        return 1 if tier is Tier.MEM else self.k + 1

    def _new_id(self, tier: Tier) -> str:
        prefix = "m" if tier is Tier.MEM else "e"
        nid = f"{prefix}{self._next[tier]}"
        self._next[tier] += 1
        return nid

    def ids(self, tier: Tier | None = None, states: Iterable[NodeState] = (NodeState.LIVE,)) -> list[str]:
        wanted = set(states)
        return [
            h.node_id
            for h in self.nodes.values()
            if h.state in wanted and (tier is None or h.tier is tier)
        ]

    def count(self, tier: Tier, states: Iterable[NodeState] = (NodeState.LIVE,)) -> int:
        return len(self.ids(tier, states))

    def shape(self) -> ClusterShape:
        return ClusterShape(
            live={t: self.count(t) for t in TIERS},
            pending={t: self.count(t, (NodeState.PENDING,)) for t in TIERS},
            workers=dict(self.workers),
        )

    def billed_counts(self) -> dict[Tier, int]:
        billed = (NodeState.PENDING, NodeState.LIVE, NodeState.DEPARTING)
        return {t: self.count(t, billed) for t in TIERS}

    def hourly_cost(self) -> float:
        return hourly_cost(self.billed_counts(), self.cost_model)

    def _event(self, now: float, what: str, node: str) -> None:
        self.events.append((now, what, node))
        log.info("t=%.2f %s %s", now, what, node)

    # -- control API ---------------------------------------------------------------
    def bootstrap(self, tier: Tier, n: int) -> list[str]:
        """Nodes present from the start, LIVE without a spawn delay."""
        out = []
        for _ in range(n):
            h = NodeHandle(self._new_id(tier), tier, NodeState.LIVE)
            self.nodes[h.node_id] = h
            out.append(h.node_id)
        return out

    def add(self, tier: Tier, n: int, now: float) -> list[str]:
        out = []
        for _ in range(max(0, n)):
            h = NodeHandle(self._new_id(tier), tier, NodeState.PENDING, now + self.spawn_delay_s)
            self.nodes[h.node_id] = h
            out.append(h.node_id)
            self._event(now, "request", h.node_id)
        return out

    def remove(self, node_id: str, now: float) -> bool:
        h = self.nodes.get(node_id)
        if h is None or h.state is not NodeState.LIVE or h.crashed:
            return False
        if self.count(h.tier) - 1 < self.floor(h.tier):
            log.info("removal of %s dropped: %s floor", node_id, h.tier.name)
            return False
        h.move(NodeState.DEPARTING)
        self._event(now, "depart", node_id)
        self.backend.depart(h)
        return True

    def fail(self, node_id: str, now: float) -> None:
        """Crash a node. Peers notice later through missing heartbeats."""
        h = self.nodes[node_id]
        if h.state not in (NodeState.LIVE, NodeState.DEPARTING) or h.crashed:
            return
        h.crashed = True
        self._event(now, "crash", node_id)
        self.backend.kill(h)

    fail_node = fail

    # -- plans ---------------------------------------------------------------------
    def apply_plan(self, plan: "ActionPlan", now: float) -> None:
        sig = _plan_signature(plan)
        if sig in self._inflight:
            return
        spawned: list[str] = []
        for tier, n in sorted(plan.add_nodes.items()):
            spawned += self.add(tier, n, now)
        for nid in plan.remove_nodes:
            self.remove(nid, now)
        for key, rv in plan.rv_updates:
            self.backend.apply_rv(key, rv)
        if spawned:
            self._inflight[sig] = set(spawned)

    # -- time ------------------------------------------------------------------------
    def tick(self, now: float) -> None:
        for h in sorted(self.nodes.values(), key=lambda h: (h.spawn_deadline, h.node_id)):
            if h.state is NodeState.PENDING and h.spawn_deadline <= now + 1e-9:
                h.move(NodeState.LIVE)
                self._event(now, "live", h.node_id)
                self.backend.spawn(h)
        for h in list(self.nodes.values()):
            if h.state is NodeState.DEPARTING and not h.crashed and self.backend.drained(h):
                h.move(NodeState.GONE)
                self._event(now, "gone", h.node_id)
                self.backend.deallocate(h)
        for sig, ids in list(self._inflight.items()):
            if all(self.nodes[i].state is not NodeState.PENDING for i in ids):
                del self._inflight[sig]

    def detect_failures(self, now: float) -> list[str]:
        """Declare suspected nodes failed and request replacements."""
        failed = []
        for nid in sorted(set(self.backend.suspected(now))):
            h = self.nodes.get(nid)
            if h is None or h.state not in (NodeState.LIVE, NodeState.DEPARTING):
                continue
            replace = h.state is NodeState.LIVE
            h.move(NodeState.FAILED)
            self._event(now, "failed", nid)
            self.backend.declare_failed(h)
            failed.append(nid)
            if replace:
                self.add(h.tier, 1, now)
        for tier in TIERS:
            live = self.count(tier)
            if live < self.floor(tier):
                if not self.degraded:
                    log.warning("degraded: %d live %s nodes, floor %d", live, tier.name, self.floor(tier))
                self.degraded = True
                break
        else:
            self.degraded = False
        return failed

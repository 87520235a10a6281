"""Capacity-mode cluster: analytic service, real monitor/policy/manager loop.

Placement follows the same rings and replication vectors as the live
kernel, but data movement is instantaneous and request service comes from
:mod:`annakv.bench.capacity`. Statistics go through the metadata codecs
and :func:`annakv.monitor.collect`, so the policy engine sees exactly the
inputs it would see in a live deployment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..cluster import ClusterManager, CostModel, NodeHandle
from ..lattice import LwwCell, Timestamp
from ..metadata import (
    LatencyReport,
    MetaKind,
    NodeStats,
    ReplicationVector,
    default_vector,
    encode_key_stats,
    encode_latency,
    encode_node_stats,
    encode_rv,
    meta_key,
    rv_key,
)
from ..monitor import DictMetaStore, collect
from ..policy import ActionPlan, Knobs, PolicyState, SloMode, SloSpec, policy_tick
from ..ring import TIERS, HashRing, RingMember, Tier, hash64, local_ring
from .capacity import CapacityModel, service_arrays
from .report import TimelineRow
from .workload import WorkloadSpec, key_name

log = logging.getLogger(__name__)

CLIENT_ID = "clients"


@dataclass
class SimConfig:
    workload: WorkloadSpec
    slo: SloSpec
    knobs: Knobs
    duration_s: float
    mem_nodes: int = 1
    ebs_nodes: int = 3
    workers: dict = field(default_factory=lambda: {Tier.MEM: 4, Tier.EBS: 4})
    model: CapacityModel = field(default_factory=CapacityModel)
    spawn_delay_s: float = 5.0
    failure_timeout_s: float = 0.5
    mem_capacity_bytes: int = 1 << 20
    ebs_capacity_bytes: int = 1 << 22
    initial_tier: str = "default"  # "default" or "ebs": where keys start
    seed: int = 0
    cost: CostModel = field(default_factory=CostModel)
    failures: tuple[tuple[float, str], ...] = ()  # (time, node id) crash injections
    retry_penalty_ms: float = 100.0


class _RingTable:
    """A ring with, for every point, the clockwise sequence of distinct members."""

    def __init__(self, ring: HashRing, slot_of: dict[str, int]):
        self.ring = ring
        self.n_members = len(ring)
        if not ring.points:
            self.pos = np.zeros(0, dtype=np.uint64)
            self.table = np.zeros((0, 0), dtype=np.int64)
            return
        self.pos = np.array([p for p, _ in ring.points], dtype=np.uint64)
        members = [m for _, m in ring.points]
        n = len(members)
        # walking backwards, each point's list is itself followed by the next point's list
        table = np.full((n, self.n_members), -1, dtype=np.int64)
        first = [slot_of[m] for m in members]
        # seed from the wrap-around: compute the list for the last point directly
        seq: list[int] = []
        i = n - 1
        seen: set[int] = set()
        j = i
        while len(seq) < self.n_members:
            s = first[j % n]
            if s not in seen:
                seen.add(s)
                seq.append(s)
            j += 1
        table[i] = seq
        for i in range(n - 2, -1, -1):
            nxt = table[i + 1]
            s = first[i]
            row = [s] + [x for x in nxt if x != s]
            table[i] = row
        self.table = table

    def starts(self, hashes: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.pos, hashes, side="left") % len(self.pos)


class CapacityCluster:
    """Backend for :class:`ClusterManager` plus the capacity-mode run loop."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.k = cfg.slo.k
        self.wl = cfg.workload
        self.n = cfg.workload.n_keys
        self.rng = np.random.default_rng(cfg.seed)
        self.names = [key_name(i) for i in range(self.n)]
        self.hashes = np.array([hash64(s.encode()) for s in self.names], dtype=np.uint64)
        self.w_max = max(cfg.workers.values())
        self.local = {t: self._local_table(local_ring(cfg.workers[t])) for t in TIERS}

        k = self.k
        if cfg.initial_tier == "ebs":
            base = ReplicationVector.of(0, k + 1, 1, 1)
        else:
            base = default_vector(k)
        self.r = {Tier.MEM: np.full(self.n, base.r_mem, np.int64), Tier.EBS: np.full(self.n, base.r_ebs, np.int64)}
        self.t = {Tier.MEM: np.full(self.n, base.t_mem, np.int64), Tier.EBS: np.full(self.n, base.threads(Tier.EBS), np.int64)}

        self.store = DictMetaStore()
        self._meta_seq = 0
        self.slot_of: dict[str, int] = {}
        self.slot_tier: list[Tier] = []
        self.slot_up: list[bool] = []
        self.rings = {t: HashRing() for t in TIERS}
        self._tables: dict[Tier, _RingTable] = {}
        self._dirty = True
        self.crashed_at: dict[str, float] = {}
        self.now = 0.0

        self.manager = ClusterManager(self, k, cfg.workers, cfg.spawn_delay_s, cfg.cost)
        for tier, count in ((Tier.MEM, cfg.mem_nodes), (Tier.EBS, cfg.ebs_nodes)):
            for nid in self.manager.bootstrap(tier, count):
                self._join(nid, tier)
        if cfg.initial_tier == "ebs":
            for i in range(self.n):
                self._put_rv_meta(i, base)
        self.state = PolicyState()
        self.epoch = 0
        self._stats_keys: dict[int, list[str]] = {}
        self.plans: list[tuple[float, ActionPlan]] = []

    # -- metadata --------------------------------------------------------------------------
    def _cell(self, payload: bytes) -> LwwCell:
        self._meta_seq += 1
        return LwwCell(Timestamp(int(self.now * 1000), 0, self._meta_seq), payload)

    def _put(self, key: str, payload: bytes) -> None:
        self.store.put_cell(key, self._cell(payload))

    def _put_rv_meta(self, i: int, rv: ReplicationVector) -> None:
        self._put(rv_key(self.names[i]), encode_rv(rv))

    # -- placement ----------------------------------------------------------------------------
    def _local_table(self, ring: HashRing) -> np.ndarray:
        """Distinct worker order per key for a local ring (same on every node)."""
        tab = _RingTable(ring, {m: int(m) for m in ring.members})
        return tab.table[tab.starts(self.hashes)]

    def _join(self, nid: str, tier: Tier) -> None:
        if nid not in self.slot_of:
            self.slot_of[nid] = len(self.slot_tier)
            self.slot_tier.append(tier)
            self.slot_up.append(True)
        self.rings[tier] = self.rings[tier].insert(RingMember(nid))
        self._dirty = True

    def _leave(self, nid: str, tier: Tier) -> None:
        self.rings[tier] = self.rings[tier].remove(nid)
        self._dirty = True

    def _placement(self):
        if not self._dirty:
            return self._cached
        for t in TIERS:
            if t not in self._tables or self._tables[t].ring is not self.rings[t]:
                self._tables[t] = _RingTable(self.rings[t], self.slot_of)
        tables = self._tables
        starts = {t: tables[t].starts(self.hashes) if len(tables[t].pos) else None for t in TIERS}
        has_mem = tables[Tier.MEM].n_members > 0
        serve_mem = (self.r[Tier.MEM] > 0) & has_mem
        serve: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        stor_node: list[np.ndarray] = []
        for tier in TIERS:
            tab = tables[tier]
            if tab.n_members == 0:
                continue
            r = np.minimum(self.r[tier], tab.n_members)
            t = np.minimum(self.t[tier], self.cfg.workers[tier])
            code = r * 1024 + t
            for c in np.unique(code):
                rr, tt = int(c) // 1024, int(c) % 1024
                if rr == 0:
                    continue
                idx = np.nonzero(code == c)[0]
                nodes = tab.table[starts[tier][idx], :rr]  # (g, rr)
                wk = self.local[tier][idx, :tt]  # (g, tt)
                ek = np.repeat(idx, rr * tt)
                en = np.repeat(nodes, tt, axis=1).reshape(-1)
                ew = np.tile(wk, (1, rr)).reshape(-1)
                stor_node.append(en)
                if tier is Tier.MEM:
                    sel = np.ones(len(ek), dtype=bool)
                else:
                    sel = ~serve_mem[ek]
                serve.append((ek[sel], en[sel], ew[sel]))
        ep_key = np.concatenate([s[0] for s in serve])
        ep_node = np.concatenate([s[1] for s in serve])
        ep_worker = ep_node * self.w_max + np.concatenate([s[2] for s in serve])
        order = np.argsort(ep_key, kind="stable")
        ep_key, ep_node, ep_worker = ep_key[order], ep_node[order], ep_worker[order]
        first = np.ones(len(ep_key), dtype=bool)
        first[1:] = ep_key[1:] != ep_key[:-1]
        primary = np.full(self.n, -1, dtype=np.int64)
        primary[ep_key[first]] = ep_node[first]
        n_slots = len(self.slot_tier)
        replicas = np.bincount(np.concatenate(stor_node), minlength=n_slots) if stor_node else np.zeros(n_slots)
        self._cached = (ep_key, ep_node, ep_worker, primary, replicas)
        self._dirty = False
        return self._cached

    # -- Backend interface -----------------------------------------------------------------------
    def spawn(self, handle: NodeHandle) -> None:
        self._join(handle.node_id, handle.tier)

    def depart(self, handle: NodeHandle) -> None:
        self._leave(handle.node_id, handle.tier)

    def drained(self, handle: NodeHandle) -> bool:
        return True

    def deallocate(self, handle: NodeHandle) -> None:
        self.slot_up[self.slot_of[handle.node_id]] = False

    def kill(self, handle: NodeHandle) -> None:
        self.slot_up[self.slot_of[handle.node_id]] = False
        self.crashed_at[handle.node_id] = self.now

    def suspected(self, now: float):
        return [n for n, t in self.crashed_at.items() if now - t >= self.cfg.failure_timeout_s - 1e-9]

    def declare_failed(self, handle: NodeHandle) -> None:
        self.crashed_at.pop(handle.node_id, None)
        self._leave(handle.node_id, handle.tier)

    def apply_rv(self, key: str, rv: ReplicationVector) -> None:
        if rv.total_replicas < self.k + 1:
            raise ValueError(f"replication vector {rv} breaks the k={self.k} floor")
        i = int(key[1:])
        for tier in TIERS:
            self.r[tier][i] = rv.replicas(tier)
            self.t[tier][i] = rv.threads(tier)
        self._put_rv_meta(i, rv)
        self._dirty = True

    # -- one window ---------------------------------------------------------------------------------
    def _serve(self, rates: np.ndarray):
        ep_key, ep_node, ep_worker, primary, replicas = self._placement()
        n_slots = len(self.slot_tier)
        node_is_mem = np.array([t is Tier.MEM for t in self.slot_tier], dtype=bool)
        res = service_arrays(rates, ep_key, ep_node, ep_worker, node_is_mem, n_slots * self.w_max, self.cfg.model)
        down = ~np.array(self.slot_up, dtype=bool)
        if down.any():
            # requests sent to a crashed node time out and are retried elsewhere later
            ep_rate = rates[ep_key] / np.bincount(ep_key, minlength=self.n)[ep_key]
            lost = down[ep_node]
            lost_rate = float(ep_rate[lost].sum())
            res.served -= float(res.node_served[down].sum())
            res.node_served[down] = 0.0
            res.latency_sum += lost_rate * self.cfg.retry_penalty_ms
        return res, primary, replicas

    def run_window(self, t0: float, dt: float) -> TimelineRow:
        cfg = self.cfg
        self.now = t0
        for when, nid in cfg.failures:
            if t0 - 1e-9 <= when < t0 + dt - 1e-9 and nid in self.manager.nodes:
                self.manager.fail(nid, t0)
        self.manager.tick(t0)
        self.manager.detect_failures(t0)

        phase = self.wl.phase_at(t0)
        counts = self.wl.draw_counts(phase, dt, self.rng)
        res, primary, replicas = self._serve(counts / dt)
        epoch = self.epoch
        self._publish(epoch, dt, counts, res, primary, replicas)

        t1 = t0 + dt
        live = self.manager.shape().live
        lat = res.mean_latency_ms
        if cfg.slo.mode is SloMode.LATENCY:
            ok = lat <= cfg.slo.L_obj + 1e-12  # type: ignore[operator]
        else:
            ok = self.manager.hourly_cost() <= cfg.slo.B + 1e-9  # type: ignore[operator]
        row = TimelineRow(
            time_s=t1,
            throughput_ops=res.served,
            avg_latency_ms=lat,
            cost_per_hr=self.manager.hourly_cost(),
            mem_nodes=live.get(Tier.MEM, 0),
            ebs_nodes=live.get(Tier.EBS, 0),
            mem_hit_rate=res.hit_rate,
            slo_satisfied=ok,
        )

        self.now = t1
        members = {t: self.rings[t].member_ids for t in TIERS}
        snap = collect(self.store, epoch, members, [CLIENT_ID], time_s=t1, shape=self.manager.shape())
        plan, self.state = policy_tick(snap, cfg.knobs, cfg.slo, self.state)
        if not plan.is_empty():
            self.plans.append((t1, plan))
            self.manager.apply_plan(plan, t1)
        self._gc(epoch)
        self.epoch += 1
        return row

    def _publish(self, epoch: int, dt: float, counts: np.ndarray, res, primary: np.ndarray, replicas: np.ndarray) -> None:
        keys: list[str] = []
        vb = self.wl.value_bytes
        by_node: dict[int, dict[str, int]] = {}
        hit = np.nonzero(counts)[0]
        for i in hit:
            by_node.setdefault(int(primary[i]), {})[self.names[i]] = int(counts[i])
        for tier in TIERS:
            cap = self.cfg.mem_capacity_bytes if tier is Tier.MEM else self.cfg.ebs_capacity_bytes
            q = self.cfg.model.q_node(tier) * dt
            for nid in self.rings[tier].member_ids:
                s = self.slot_of[nid]
                if not self.slot_up[s]:
                    continue
                stored = int(replicas[s]) * vb if s < len(replicas) else 0
                stats = NodeStats(
                    node_id=nid,
                    tier=tier,
                    occupancy=min(1.0, float(res.node_served[s]) * dt / q) if s < len(res.node_served) else 0.0,
                    storage_fraction=min(1.0, stored / cap),
                    epoch=epoch,
                    stored_bytes=stored,
                    capacity_bytes=cap,
                    key_replicas=int(replicas[s]) if s < len(replicas) else 0,
                )
                nk = meta_key(MetaKind.NODE_STATS, [nid, str(epoch)])
                self._put(nk, encode_node_stats(stats))
                kk = meta_key(MetaKind.KEY_STATS, [nid, str(epoch)])
                self._put(kk, encode_key_stats(by_node.get(s, {})))
                keys += [nk, kk]
        total = float(counts.sum())
        if total > 0:
            report = LatencyReport(CLIENT_ID, epoch, res.mean_latency_ms, int(total))
            lk = meta_key(MetaKind.LATENCY, [CLIENT_ID, str(epoch)])
            self._put(lk, encode_latency(report))
            keys.append(lk)
        self._stats_keys[epoch] = keys

    def _gc(self, epoch: int) -> None:
        for old in [e for e in self._stats_keys if e < epoch - 2]:
            for key in self._stats_keys.pop(old):
                self.store.cells.pop(key, None)

    # -- driver ----------------------------------------------------------------------------------------
    def run(self) -> list[TimelineRow]:
        dt = self.cfg.knobs.T
        n_windows = int(round(self.cfg.duration_s / dt))
        return [self.run_window(i * dt, dt) for i in range(n_windows)]

    def mem_resident(self) -> np.ndarray:
        return self.r[Tier.MEM] > 0

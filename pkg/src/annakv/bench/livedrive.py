"""Reduced-scale live-mode driver.

Runs the same monitor -> policy -> cluster loop as capacity mode, but every
request is a real read-modify-write through clients, routing nodes and
storage workers on the in-process transport.
"""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from ..live import LiveCluster
from ..metadata import ReplicationVector
from ..policy import PolicyState, SloMode, policy_tick
from ..ring import TIERS, Tier
from ..routing import RoutingError
from .report import TimelineRow
from .sim import SimConfig
from .workload import Phase, WorkloadSpec, key_name

log = logging.getLogger(__name__)


def scale_down(
    cfg: SimConfig, n_keys: int, ops_per_window: int, max_mem: int = 4, max_ebs: int = 3
) -> tuple[SimConfig, float]:
    """Shrink a capacity-mode config to something a live cluster handles quickly.

    Returns the new config and the factor applied to offered load.
    """
    wl = cfg.workload
    dt = cfg.knobs.T
    peak = max(p.offered_ops for p in wl.phases)
    factor = ops_per_window / (peak * dt)
    n = min(wl.n_keys, n_keys)
    phases = tuple(
        Phase(p.start_s, p.theta, max(1.0, p.offered_ops * factor), p.offset * n // wl.n_keys) for p in wl.phases
    )
    small = replace(
        cfg,
        workload=WorkloadSpec(n_keys=n, key_bytes=wl.key_bytes, value_bytes=wl.value_bytes, phases=phases),
        mem_nodes=min(cfg.mem_nodes, max_mem),
        ebs_nodes=min(cfg.ebs_nodes, max(max_ebs, cfg.slo.k + 1)),
    )
    return small, factor


def _op_cost_ms(cfg: SimConfig, tier: Tier, load_scale: float) -> float:
    # a request is a GET plus a PUT; a node has ``workers`` parallel service lanes
    q = cfg.model.q_node(tier) * load_scale
    return cfg.workers[tier] * 1000.0 / (2.0 * q)


class LiveRunner:
    """Drive ``cfg`` against a live cluster.

    ``load_scale`` is the factor by which offered load was shrunk; node
    service times are stretched by the same amount so that occupancy, and
    hence the policy's view of saturation, matches the full-size run.
    """

    def __init__(self, cfg: SimConfig, load_scale: float = 1.0, n_clients: int = 8):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.cluster = LiveCluster(
            mem_nodes=cfg.mem_nodes,
            ebs_nodes=cfg.ebs_nodes,
            k=cfg.slo.k,
            workers=cfg.workers,
            seed=cfg.seed,
            spawn_delay_s=cfg.spawn_delay_s,
            n_clients=n_clients,
            capacity_bytes=cfg.mem_capacity_bytes,
            cost=cfg.cost,
            op_cost_ms={t: _op_cost_ms(cfg, t, load_scale) for t in TIERS},
        )
        if cfg.initial_tier == "ebs":
            cold = ReplicationVector.of(0, cfg.slo.k + 1, 1, 1)
            for i in range(cfg.workload.n_keys):
                self.cluster.apply_rv(key_name(i), cold)
            self.cluster.quiesce()
        # clients are logically concurrent, so one client's backoff must not
        # stall the shared clock; the wait is charged to that request instead
        self._waited_ms = 0.0
        for c in self.cluster.clients:
            c.on_backoff = self._backoff
        self.state = PolicyState()
        self.epoch = 0
        self.failed_ops = 0
        self.value = bytes(cfg.workload.value_bytes)

    def _backoff(self, ms: int) -> None:
        self._waited_ms += ms
        self.cluster.gossip_round(heartbeat=False)

    def close(self) -> None:
        self.cluster.close()

    def _request(self, client, key: str) -> bool:
        try:
            client.get(key)
            client.put(key, self.value)
        except RoutingError:
            self.failed_ops += 1
            return False
        return True

    def run_window(self, t0: float, dt: float) -> TimelineRow:
        cfg, cl = self.cfg, self.cluster
        for when, nid in cfg.failures:
            if t0 - 1e-9 <= when < t0 + dt - 1e-9 and nid in cl.manager.nodes:
                cl.manager.fail(nid, cl.clock.now_s())
        phase = cfg.workload.phase_at(t0)
        counts = cfg.workload.draw_counts(phase, dt, self.rng)
        order = np.repeat(np.arange(len(counts)), counts)
        self.rng.shuffle(order)
        marks = [(len(c.latencies), len(c.served_by)) for c in cl.clients]
        self._waited_ms = 0.0
        done = 0
        for j, i in enumerate(order):
            client = cl.clients[j % len(cl.clients)]
            done += self._request(client, key_name(int(i)))
        lat: list[float] = []
        mem = total = 0
        for c, (nl, ns) in zip(cl.clients, marks):
            lat += c.latencies[nl:]
            for ep in c.served_by[ns:]:
                total += 1
                mem += cl.tier_of(ep[0]) is Tier.MEM
        # client backoff may already have moved the clock past part of the window
        left = int(round((t0 + dt) * 1000)) - cl.clock.now_ms()
        if left > 0:
            cl.step(left)

        cl.publish_window(self.epoch, int(round(dt * 1000)))
        snap = cl.snapshot(self.epoch)
        plan, self.state = policy_tick(snap, cfg.knobs, cfg.slo, self.state)
        if not plan.is_empty():
            cl.manager.apply_plan(plan, cl.clock.now_s())
        self.epoch += 1

        avg = (sum(lat) + self._waited_ms) / len(lat) if lat else 0.0
        live = cl.manager.shape().live
        cost = cl.manager.hourly_cost()
        if cfg.slo.mode is SloMode.LATENCY:
            ok = avg <= cfg.slo.L_obj + 1e-12  # type: ignore[operator]
        else:
            ok = cost <= cfg.slo.B + 1e-9  # type: ignore[operator]
        return TimelineRow(
            time_s=t0 + dt,
            throughput_ops=done / dt,
            avg_latency_ms=avg,
            cost_per_hr=cost,
            mem_nodes=live.get(Tier.MEM, 0),
            ebs_nodes=live.get(Tier.EBS, 0),
            mem_hit_rate=mem / total if total else 1.0,
            slo_satisfied=ok,
        )

    def run(self) -> list[TimelineRow]:
        dt = self.cfg.knobs.T
        n = int(round(self.cfg.duration_s / dt))
        try:
            return [self.run_window(i * dt, dt) for i in range(n)]
        finally:
            self.close()

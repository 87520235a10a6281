"""Analytic service model used by capacity-mode runs.

Each node serves at most ``Q`` ops/s and a single worker at most half of
that, so spreading a hot key over distinct nodes scales linearly while
adding worker replicas inside one node saturates at 2x. Requests for a
key are split evenly over the replicas clients are directed to.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from ..ring import Tier


@dataclass(frozen=True)
class CapacityModel:
    q_mem: float = 10_000.0
    mem_over_ebs: float = 15.0
    worker_share: float = 0.5
    base_mem_ms: float = 1.0
    base_ebs_ms: float = 20.0
    queue_factor: float = 10.0

    def __post_init__(self):
        if self.q_mem <= 0 or self.mem_over_ebs <= 0:
            raise ValueError("service rates must be positive")
        if not 0 < self.worker_share <= 1:
            raise ValueError("worker_share must be in (0, 1]")
        if not 0 < self.base_mem_ms < self.base_ebs_ms:
            raise ValueError("need 0 < MEM base latency < EBS base latency")
        if self.queue_factor < 0:
            raise ValueError("queue_factor must be non-negative")

    def q_node(self, tier: Tier) -> float:
        return self.q_mem if tier is Tier.MEM else self.q_mem / self.mem_over_ebs

    def q_worker(self, tier: Tier) -> float:
        return self.q_node(tier) * self.worker_share

    def base(self, tier: Tier) -> float:
        return self.base_mem_ms if tier is Tier.MEM else self.base_ebs_ms

    def latency(self, tier: Tier, rho: float) -> float:
        return self.base(tier) * (1.0 + max(0.0, rho - 1.0) * self.queue_factor)


@dataclass
class ArrayResult:
    offered: float
    served: float
    mem_offered: float
    latency_sum: float  # offered-weighted latency, ms * ops/s
    node_served: np.ndarray
    key_served: np.ndarray
    key_latency: np.ndarray

    @property
    def mean_latency_ms(self) -> float:
        return self.latency_sum / self.offered if self.offered > 0 else 0.0

    @property
    def hit_rate(self) -> float:
        return self.mem_offered / self.offered if self.offered > 0 else 1.0


def service_arrays(
    rate: np.ndarray,
    ep_key: np.ndarray,
    ep_node: np.ndarray,
    ep_worker: np.ndarray,
    node_is_mem: np.ndarray,
    n_worker_slots: int,
    model: CapacityModel,
) -> ArrayResult:
    """Vectorised core of :func:`service_step`.

    ``rate`` is offered ops/s per key; every key must have at least one
    endpoint. Endpoint ``i`` serves key ``ep_key[i]`` on node ``ep_node[i]``
    and worker slot ``ep_worker[i]`` (slots are global across nodes).
    """
    n_keys = rate.shape[0]
    n_nodes = node_is_mem.shape[0]
    per_key = np.bincount(ep_key, minlength=n_keys).astype(np.float64)
    if np.any((per_key == 0) & (rate > 0)):
        raise ValueError("a key with offered load has no endpoint")
    ep_rate = rate[ep_key] / per_key[ep_key]
    ep_mem = node_is_mem[ep_node]
    q_node = np.where(node_is_mem, model.q_node(Tier.MEM), model.q_node(Tier.EBS))
    q_w_ep = np.where(ep_mem, model.q_worker(Tier.MEM), model.q_worker(Tier.EBS))

    w_load = np.bincount(ep_worker, weights=ep_rate, minlength=n_worker_slots)
    w_cap = np.zeros(n_worker_slots)
    w_cap[ep_worker] = q_w_ep
    with np.errstate(divide="ignore", invalid="ignore"):
        w_scale = np.where(w_load > w_cap, w_cap / w_load, 1.0)
    after_w = ep_rate * w_scale[ep_worker]
    n_load = np.bincount(ep_node, weights=after_w, minlength=n_nodes)
    with np.errstate(divide="ignore", invalid="ignore"):
        n_scale = np.where(n_load > q_node, q_node / n_load, 1.0)
    served_ep = after_w * n_scale[ep_node]

    n_offered = np.bincount(ep_node, weights=ep_rate, minlength=n_nodes)
    rho = np.maximum(w_load[ep_worker] / q_w_ep, n_offered[ep_node] / q_node[ep_node])
    base = np.where(ep_mem, model.base_mem_ms, model.base_ebs_ms)
    lat_ep = base * (1.0 + np.maximum(0.0, rho - 1.0) * model.queue_factor)

    key_served = np.bincount(ep_key, weights=served_ep, minlength=n_keys)
    lat_w = np.bincount(ep_key, weights=lat_ep * ep_rate, minlength=n_keys)
    with np.errstate(divide="ignore", invalid="ignore"):
        key_latency = np.where(rate > 0, lat_w / rate, 0.0)
    return ArrayResult(
        offered=float(rate.sum()),
        served=float(served_ep.sum()),
        mem_offered=float(ep_rate[ep_mem].sum()),
        latency_sum=float((lat_ep * ep_rate).sum()),
        node_served=np.bincount(ep_node, weights=served_ep, minlength=n_nodes),
        key_served=key_served,
        key_latency=key_latency,
    )


Replica = tuple[Hashable, int, Tier]  # (node id, worker index, tier)


@dataclass
class StepResult:
    served: dict[Hashable, float]  # ops completed during dt, per key
    latency_ms: dict[Hashable, float]  # mean latency seen by the key's requests
    mem_hit: dict[Hashable, float]  # fraction of the key's requests sent to MEM
    total_served: float
    node_occupancy: dict[Hashable, float]


def service_step(
    offered: Mapping[Hashable, float],
    replicas: Mapping[Hashable, Sequence[Replica]],
    model: CapacityModel,
    dt: float = 1.0,
) -> StepResult:
    """Serve ``offered`` ops/s per key for ``dt`` seconds.

    ``replicas`` lists the endpoints clients are sent to for each key
    (already filtered to the serving tier).
    """
    keys = list(offered)
    node_ids: dict[Hashable, int] = {}
    node_mem: list[bool] = []
    slots: dict[tuple[Hashable, int], int] = {}
    ep_key, ep_node, ep_worker = [], [], []
    for ki, key in enumerate(keys):
        eps = replicas.get(key, ())
        if not eps and offered[key] > 0:
            raise ValueError(f"key {key!r} has no replica")
        for node, worker, tier in eps:
            if node not in node_ids:
                node_ids[node] = len(node_ids)
                node_mem.append(tier is Tier.MEM)
            ni = node_ids[node]
            si = slots.setdefault((node, worker), len(slots))
            ep_key.append(ki)
            ep_node.append(ni)
            ep_worker.append(si)
    res = service_arrays(
        np.array([offered[k] for k in keys], dtype=np.float64),
        np.array(ep_key, dtype=np.int64),
        np.array(ep_node, dtype=np.int64),
        np.array(ep_worker, dtype=np.int64),
        np.array(node_mem, dtype=bool),
        len(slots),
        model,
    )
    mem_by_key: dict[Hashable, float] = {}
    for ki, key in enumerate(keys):
        eps = replicas.get(key, ())
        mem_by_key[key] = sum(1 for e in eps if e[2] is Tier.MEM) / len(eps) if eps else 0.0
    inv_nodes = {i: n for n, i in node_ids.items()}
    q = {True: model.q_node(Tier.MEM), False: model.q_node(Tier.EBS)}
    return StepResult(
        served={k: float(res.key_served[i]) * dt for i, k in enumerate(keys)},
        latency_ms={k: float(res.key_latency[i]) for i, k in enumerate(keys)},
        mem_hit=mem_by_key,
        total_served=res.served * dt,
        node_occupancy={
            inv_nodes[i]: float(res.node_served[i]) / q[node_mem[i]] for i in range(len(node_mem))
        },
    )


def sustainable_rate(replicas: Sequence[Replica], model: CapacityModel) -> float:
    """Throughput of a single key under unbounded offered load."""
    flood = 1e6 * model.q_mem * max(1, len(replicas))
    res = service_step({"hot": flood}, {"hot": replicas}, model, 1.0)
    return res.served["hot"]

"""Statistics collection and summary metrics.

The monitor keeps no state of its own: every snapshot is rebuilt from the
statistics that storage nodes and clients publish into the metadata keys,
so a monitor can be killed and restarted at any time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Protocol

from .metadata import (
    META_PREFIX,
    LatencyReport,
    MetaKind,
    MetadataError,
    NodeStats,
    ReplicationVector,
    decode_key_stats,
    decode_latency,
    decode_node_stats,
    decode_rv,
    meta_key,
)
from .lattice import LwwCell, merge
from .ring import TIERS, Tier

SUSPECT_EPOCHS = 2


class MetaStore(Protocol):
    """Read access to metadata keys."""

    def get(self, key: str) -> bytes | None: ...

    def scan(self, prefix: str) -> Iterable[tuple[str, bytes]]:
        """(key, payload) for every live key starting with ``prefix``."""
        ...


class MonitorError(Exception):
    pass


@dataclass(frozen=True)
class ClusterShape:
    """Node counts per tier (live and pending) and per-node worker counts."""

    live: Mapping[Tier, int]
    pending: Mapping[Tier, int] = field(default_factory=dict)
    workers: Mapping[Tier, int] = field(default_factory=lambda: {Tier.MEM: 4, Tier.EBS: 4})

    def count(self, tier: Tier, include_pending: bool = False) -> int:
        n = self.live.get(tier, 0)
        return n + self.pending.get(tier, 0) if include_pending else n


@dataclass
class ClusterSnapshot:
    epoch: int
    time_s: float
    node_stats: dict[str, NodeStats]
    key_counts: dict[str, int]
    latency: list[LatencyReport]
    membership: dict[Tier, list[str]]
    rvs: dict[str, ReplicationVector] = field(default_factory=dict)
    shape: ClusterShape | None = None
    suspects: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Summary:
    mean_freq: float
    std_freq: float
    avg_latency_ms: float
    storage_fraction: Mapping[Tier, float]
    mem_occupancy: float
    hot_threshold: float
    cold_threshold: float
    population: int


@lru_cache(maxsize=4096)
def _rv_from_bytes(data: bytes) -> ReplicationVector:
    return decode_rv(data)


def collect(
    store: MetaStore,
    epoch: int,
    membership: Mapping[Tier, Iterable[str]],
    client_ids: Iterable[str] = (),
    time_s: float = 0.0,
    shape: ClusterShape | None = None,
) -> ClusterSnapshot:
    """Assemble the snapshot for ``epoch`` from published statistics.

    ``membership`` is the live node list per tier as read from ring metadata.
    A node with no stats for this epoch and the previous one is flagged as
    a suspect.
    """
    node_stats: dict[str, NodeStats] = {}
    counts: dict[str, int] = {}
    suspects: list[str] = []
    members = {t: sorted(membership.get(t, ())) for t in TIERS}
    for tier in TIERS:
        for node in members[tier]:
            raw = store.get(meta_key(MetaKind.NODE_STATS, [node, str(epoch)]))
            if raw is None:
                missing = 1
                for back in range(1, SUSPECT_EPOCHS):
                    if epoch - back < 0:
                        break
                    if store.get(meta_key(MetaKind.NODE_STATS, [node, str(epoch - back)])) is None:
                        missing += 1
                if missing >= SUSPECT_EPOCHS:
                    suspects.append(node)
                continue
            try:
                node_stats[node] = decode_node_stats(raw)
            except MetadataError:
                continue
            keys_raw = store.get(meta_key(MetaKind.KEY_STATS, [node, str(epoch)]))
            if keys_raw:
                for key, c in decode_key_stats(keys_raw).items():
                    counts[key] = counts.get(key, 0) + c
    latency = []
    for cid in sorted(client_ids):
        raw = store.get(meta_key(MetaKind.LATENCY, [cid, str(epoch)]))
        if raw is not None:
            latency.append(decode_latency(raw))
    rv_prefix = META_PREFIX + MetaKind.RV.value + "/"
    rvs: dict[str, ReplicationVector] = {}
    cut = len(rv_prefix)
    for mkey, raw in store.scan(rv_prefix):
        if raw:
            rvs[mkey[cut:]] = _rv_from_bytes(raw)
    return ClusterSnapshot(
        epoch=epoch,
        time_s=time_s,
        node_stats=node_stats,
        key_counts=counts,
        latency=latency,
        membership={t: list(v) for t, v in members.items()},
        rvs=rvs,
        shape=shape,
        suspects=suspects,
    )


def population_counts(snap: ClusterSnapshot) -> dict[str, int]:
    """Observed keys plus keys with a replication-vector entry (as zero)."""
    pop = dict(snap.key_counts)
    for key in snap.rvs:
        pop.setdefault(key, 0)
    return pop


def summarize(snap: ClusterSnapshot, hot_sigmas: float = 3.0) -> Summary:
    if not any(snap.membership.get(t) for t in TIERS):
        raise MonitorError("snapshot has no live nodes")
    pop = population_counts(snap)
    n = len(pop)
    if n:
        mean = sum(pop.values()) / n
        var = sum((c - mean) ** 2 for c in pop.values()) / n
        std = math.sqrt(var)
    else:
        mean = std = 0.0
    reqs = sum(r.requests for r in snap.latency)
    avg_lat = sum(r.mean_latency_ms * r.requests for r in snap.latency) / reqs if reqs else 0.0
    frac: dict[Tier, float] = {}
    occ_mem: list[float] = []
    for tier in TIERS:
        stats = [s for s in snap.node_stats.values() if s.tier is tier]
        frac[tier] = sum(s.storage_fraction for s in stats) / len(stats) if stats else 0.0
        if tier is Tier.MEM:
            occ_mem = [s.occupancy for s in stats]
    return Summary(
        mean_freq=mean,
        std_freq=std,
        avg_latency_ms=avg_lat,
        storage_fraction=frac,
        mem_occupancy=sum(occ_mem) / len(occ_mem) if occ_mem else 0.0,
        hot_threshold=mean + hot_sigmas * std,
        cold_threshold=mean,
        population=n,
    )


class DictMetaStore:
    """Plain in-process metadata store holding last-writer-wins payloads."""

    def __init__(self) -> None:
        self.cells: dict[str, LwwCell] = {}

    def put_cell(self, key: str, cell: LwwCell) -> None:
        old = self.cells.get(key)
        self.cells[key] = cell if old is None else merge(old, cell)

    def get(self, key: str) -> bytes | None:
        cell = self.cells.get(key)
        if cell is None or cell.is_tombstone:
            return None
        return cell.payload

    def scan(self, prefix: str) -> list[tuple[str, bytes]]:
        return [
            (key, cell.payload)
            for key, cell in self.cells.items()
            if key.startswith(prefix) and not cell.is_tombstone
        ]

    def drop_prefix(self, prefix: str) -> None:
        for k in [k for k in self.cells if k.startswith(prefix)]:
            del self.cells[k]

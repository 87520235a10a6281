"""Replication vectors, statistics records and the reserved metadata keys.

System metadata lives in the store itself under keys starting with
:data:`META_PREFIX`; values are plain text so they stay small and
inspectable.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

from .ring import TIERS, Tier

META_PREFIX = "__anna_meta__/"
METADATA_MEM_REPLICAS = 3


class MetadataError(ValueError):
    pass


@dataclass(frozen=True)
class ReplicationVector:
    """Node replicas ``R`` and per-node worker replicas ``T``, indexed by tier."""

    R: tuple[int, int]
    T: tuple[int, int] = (1, 1)

    def __post_init__(self) -> None:
        if len(self.R) != len(TIERS) or len(self.T) != len(TIERS):
            raise MetadataError(f"vector must have {len(TIERS)} tiers: {self!r}")
        if any(r < 0 for r in self.R):
            raise MetadataError(f"negative node replica count: {self!r}")
        if any(t < 1 for t in self.T):
            raise MetadataError(f"worker replica counts must be >= 1: {self!r}")

    @classmethod
    def of(cls, r_mem: int, r_ebs: int, t_mem: int = 1, t_ebs: int = 1) -> ReplicationVector:
        if cls is ReplicationVector:
            return _interned(r_mem, r_ebs, t_mem, t_ebs)
        return cls((r_mem, r_ebs), (t_mem, t_ebs))

    def replicas(self, tier: Tier) -> int:
        return self.R[tier]

    def threads(self, tier: Tier) -> int:
        return self.T[tier]

    @property
    def r_mem(self) -> int:
        return self.R[Tier.MEM]

    @property
    def r_ebs(self) -> int:
        return self.R[Tier.EBS]

    @property
    def t_mem(self) -> int:
        return self.T[Tier.MEM]

    @property
    def total_replicas(self) -> int:
        return sum(self.R)

    def with_(self, *, r_mem=None, r_ebs=None, t_mem=None, t_ebs=None) -> ReplicationVector:
        R = (self.R[0] if r_mem is None else r_mem, self.R[1] if r_ebs is None else r_ebs)
        T = (self.T[0] if t_mem is None else t_mem, self.T[1] if t_ebs is None else t_ebs)
        return ReplicationVector.of(R[0], R[1], T[0], T[1])

    def __str__(self) -> str:
        return f"[<{self.R[0]},{self.R[1]}>,<{self.T[0]},{self.T[1]}>]"


@lru_cache(maxsize=1024)
def _interned(r_mem: int, r_ebs: int, t_mem: int, t_ebs: int) -> ReplicationVector:
    # vectors are immutable, so equal ones can be shared
    return ReplicationVector((r_mem, r_ebs), (t_mem, t_ebs))


def default_vector(k: int) -> ReplicationVector:
    """One memory replica plus ``k`` EBS replicas, single worker each."""
    if k < 0:
        raise MetadataError("k must be non-negative")
    return ReplicationVector.of(1, k, 1, 1)


def metadata_vector() -> ReplicationVector:
    return ReplicationVector((METADATA_MEM_REPLICAS, 0), (1, 1))


def validate_vector(
    rv: ReplicationVector,
    k: int,
    nodes: Mapping[Tier, int] | None = None,
    workers: Mapping[Tier, int] | None = None,
) -> None:
    if rv.total_replicas < k + 1:
        raise MetadataError(f"{rv} has fewer than k+1={k + 1} replicas")
    for tier in TIERS:
        if nodes is not None and rv.replicas(tier) > nodes.get(tier, 0):
            raise MetadataError(f"{rv} wants {rv.replicas(tier)} {tier.name} nodes, only {nodes.get(tier, 0)} live")
        if workers is not None and rv.threads(tier) > workers.get(tier, 1):
            raise MetadataError(f"{rv} wants {rv.threads(tier)} {tier.name} workers per node")


_RV_RE = re.compile(r"^M:(\d+),(\d+);E:(\d+),(\d+)$")


def encode_rv(rv: ReplicationVector) -> bytes:
    return f"M:{rv.R[0]},{rv.T[0]};E:{rv.R[1]},{rv.T[1]}".encode()


def decode_rv(data: bytes) -> ReplicationVector:
    m = _RV_RE.match(data.decode(errors="replace"))
    if m is None:
        raise MetadataError(f"malformed replication vector {data!r}")
    r_m, t_m, r_e, t_e = map(int, m.groups())
    return ReplicationVector((r_m, r_e), (t_m, t_e))


class MetaKind(enum.Enum):
    RING = "ring"
    RV = "rv"
    NODE_STATS = "stats/node"
    KEY_STATS = "stats/key"
    LATENCY = "stats/latency"


def is_meta_key(key: str) -> bool:
    return key.startswith(META_PREFIX)


def meta_key(kind: MetaKind, parts: Iterable[str]) -> str:
    parts = list(parts)
    if not parts:
        raise MetadataError("meta_key needs at least one part")
    for p in parts:
        if not p or "/" in p or META_PREFIX.rstrip("/") in p:
            raise MetadataError(f"invalid metadata key part {p!r}")
    return META_PREFIX + kind.value + "/" + "/".join(parts)


def parse_meta_key(key: str) -> tuple[MetaKind, list[str]]:
    if not is_meta_key(key):
        raise MetadataError(f"{key!r} is not a metadata key")
    rest = key[len(META_PREFIX) :]
    # longest tag first so "stats/node" beats a hypothetical "stats"
    for kind in sorted(MetaKind, key=lambda k: -len(k.value)):
        if rest.startswith(kind.value + "/"):
            return kind, rest[len(kind.value) + 1 :].split("/")
    raise MetadataError(f"unknown metadata kind in {key!r}")


def rv_key(key: str) -> str:
    # user keys may contain '/', which meta_key forbids in parts
    if is_meta_key(key):
        raise MetadataError("metadata keys have no replication vector entry")
    return META_PREFIX + MetaKind.RV.value + "/" + key


def key_of_rv_key(meta: str) -> str:
    prefix = META_PREFIX + MetaKind.RV.value + "/"
    if not meta.startswith(prefix):
        raise MetadataError(f"{meta!r} is not a replication-vector key")
    return meta[len(prefix) :]


@dataclass(frozen=True)
class KeyAccessRecord:
    key: str
    count: int


@dataclass(frozen=True)
class NodeStats:
    node_id: str
    tier: Tier
    occupancy: float
    storage_fraction: float
    epoch: int
    stored_bytes: int = 0
    capacity_bytes: int = 0
    key_replicas: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.occupancy <= 1.0 and 0.0 <= self.storage_fraction <= 1.0):
            raise MetadataError(f"fractions out of range in {self!r}")
        if self.epoch < 0:
            raise MetadataError("epoch must be non-negative")


@dataclass(frozen=True)
class LatencyReport:
    client_id: str
    epoch: int
    mean_latency_ms: float
    requests: int = 1

    def __post_init__(self) -> None:
        if self.mean_latency_ms <= 0 or self.requests < 1:
            raise MetadataError(f"invalid latency report {self!r}")


def encode_node_stats(s: NodeStats) -> bytes:
    return (
        f"node={s.node_id}\ntier={s.tier.name}\noccupancy={s.occupancy!r}\n"
        f"storage_fraction={s.storage_fraction!r}\nepoch={s.epoch}\n"
        f"stored_bytes={s.stored_bytes}\ncapacity_bytes={s.capacity_bytes}\n"
        f"key_replicas={s.key_replicas}"
    ).encode()


def decode_node_stats(data: bytes) -> NodeStats:
    try:
        f = dict(line.split("=", 1) for line in data.decode().splitlines())
        return NodeStats(
            node_id=f["node"],
            tier=Tier[f["tier"]],
            occupancy=float(f["occupancy"]),
            storage_fraction=float(f["storage_fraction"]),
            epoch=int(f["epoch"]),
            stored_bytes=int(f.get("stored_bytes", 0)),
            capacity_bytes=int(f.get("capacity_bytes", 0)),
            key_replicas=int(f.get("key_replicas", 0)),
        )
    except (KeyError, ValueError) as exc:
        raise MetadataError(f"malformed node stats: {exc}") from exc


def encode_key_stats(counts: Mapping[str, int]) -> bytes:
    for key in counts:
        if "\n" in key:
            raise MetadataError(f"key {key!r} cannot be recorded in key stats")
    return "\n".join(f"{k},{c}" for k, c in sorted(counts.items())).encode()


def decode_key_stats(data: bytes) -> dict[str, int]:
    out: dict[str, int] = {}
    for line in data.decode().splitlines():
        if not line:
            continue
        key, sep, count = line.rpartition(",")
        if not sep:
            raise MetadataError(f"malformed key stats line {line!r}")
        out[key] = out.get(key, 0) + int(count)
    return out


def encode_latency(r: LatencyReport) -> bytes:
    return f"{r.client_id},{r.epoch},{r.mean_latency_ms!r},{r.requests}".encode()


def decode_latency(data: bytes) -> LatencyReport:
    try:
        client_id, epoch, mean, n = data.decode().rsplit(",", 3)
        return LatencyReport(client_id, int(epoch), float(mean), int(n))
    except ValueError as exc:
        raise MetadataError(f"malformed latency report {data!r}") from exc

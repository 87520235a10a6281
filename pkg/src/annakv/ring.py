"""Consistent hashing with virtual points.

A global ring per tier maps keys to storage nodes; a local ring per tier
maps keys to worker indices inside a node. Rings are immutable values:
``insert``/``remove`` return new rings.
"""

from __future__ import annotations

import bisect
import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import xxhash

log = logging.getLogger(__name__)

HashFn = Callable[[bytes], int]

DEFAULT_NODE_WEIGHT = 100
DEFAULT_WORKER_WEIGHT = 16


class RingError(Exception):
    pass


class Tier(enum.IntEnum):
    """Storage tiers, fastest first."""

    MEM = 0
    EBS = 1


TIERS = (Tier.MEM, Tier.EBS)


def hash64(data: bytes) -> int:
    """xxHash64 with seed 0; ``hash64(b"") == 0xEF46DB3751D8E999``."""
    return xxhash.xxh64_intdigest(data)


@dataclass(frozen=True)
class RingMember:
    member_id: str
    weight: int = DEFAULT_NODE_WEIGHT

    def __post_init__(self) -> None:
        if not self.member_id or "\n" in self.member_id or "," in self.member_id:
            raise RingError(f"malformed member id {self.member_id!r}")
        if self.weight < 1:
            raise RingError(f"weight must be >= 1, got {self.weight}")


def point_position(member_id: str, index: int, hash_fn: HashFn = hash64) -> int:
    return hash_fn(f"{member_id}:{index}".encode())


@dataclass(frozen=True)
class HashRing:
    """Sorted ``(position, member_id)`` points plus the member table."""

    points: tuple[tuple[int, str], ...] = ()
    members: Mapping[str, int] = field(default_factory=dict)
    hash_fn: HashFn = field(default=hash64, compare=False)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, member_id: object) -> bool:
        return member_id in self.members

    @property
    def member_ids(self) -> list[str]:
        return sorted(self.members)

    def insert(self, member: RingMember) -> HashRing:
        return ring_insert(self, member)

    def remove(self, member_id: str, strict: bool = False) -> HashRing:
        return ring_remove(self, member_id, strict=strict)

    def lookup(self, key: str, n_distinct: int) -> list[str]:
        return ring_lookup(self, key, n_distinct)

    def __hash__(self) -> int:
        return hash(self.points)


def make_ring(members: Iterable[RingMember | str], hash_fn: HashFn = hash64) -> HashRing:
    ring = HashRing(hash_fn=hash_fn)
    for m in members:
        ring = ring_insert(ring, m if isinstance(m, RingMember) else RingMember(m))
    return ring


def ring_insert(ring: HashRing, member: RingMember) -> HashRing:
    existing = ring.members.get(member.member_id)
    if existing is not None:
        if existing != member.weight:
            raise RingError(
                f"member {member.member_id!r} already present with weight {existing}, "
                f"refusing re-insert with weight {member.weight}"
            )
        return ring
    new_points = [point_position(member.member_id, i, ring.hash_fn) for i in range(member.weight)]
    points = sorted(ring.points + tuple((p, member.member_id) for p in new_points))
    members = dict(ring.members)
    members[member.member_id] = member.weight
    return HashRing(tuple(points), members, ring.hash_fn)


def ring_remove(ring: HashRing, member_id: str, strict: bool = False) -> HashRing:
    """Drop every point of ``member_id``.

    An unknown member leaves the ring untouched and the very same object is
    returned, so callers can test ``result is ring``; with ``strict=True``
    it raises instead.
    """
    if member_id not in ring.members:
        if strict:
            raise RingError(f"unknown ring member {member_id!r}")
        log.debug("ring_remove: %r not present, no-op", member_id)
        return ring
    points = tuple(p for p in ring.points if p[1] != member_id)
    members = {m: w for m, w in ring.members.items() if m != member_id}
    return HashRing(points, members, ring.hash_fn)


def ring_lookup(ring: HashRing, key: str, n_distinct: int) -> list[str]:
    """Walk clockwise from ``hash(key)`` collecting distinct members."""
    if not ring.points:
        raise RingError("lookup on empty ring")
    if n_distinct < 1:
        raise ValueError("n_distinct must be positive")
    want = min(n_distinct, len(ring.members))
    h = ring.hash_fn(key.encode())
    start = bisect.bisect_left(ring.points, (h, ""))
    n = len(ring.points)
    out: list[str] = []
    seen: set[str] = set()
    for i in range(n):
        member = ring.points[(start + i) % n][1]
        if member not in seen:
            seen.add(member)
            out.append(member)
            if len(out) == want:
                break
    return out


def encode_membership(ring: HashRing) -> bytes:
    return "\n".join(f"{m},{w}" for m, w in sorted(ring.members.items())).encode()


def decode_membership(data: bytes, hash_fn: HashFn = hash64) -> HashRing:
    members = []
    for line in data.decode().splitlines():
        if not line:
            continue
        member_id, _, weight = line.rpartition(",")
        if not member_id:
            raise RingError(f"malformed membership record {line!r}")
        members.append(RingMember(member_id, int(weight)))
    return make_ring(members, hash_fn)


def local_ring(workers: int, weight: int = DEFAULT_WORKER_WEIGHT, hash_fn: HashFn = hash64) -> HashRing:
    return make_ring((RingMember(str(i), weight) for i in range(workers)), hash_fn)


Endpoint = tuple[str, int]


def responsible_workers(
    key: str,
    rv,
    global_rings: Mapping[Tier, HashRing],
    local_rings: Mapping[Tier, HashRing],
) -> dict[Tier, list[Endpoint]]:
    """Per tier, the ``(node_id, worker_index)`` pairs that own ``key``.

    ``rv`` is a :class:`annakv.metadata.ReplicationVector`.
    """
    out: dict[Tier, list[Endpoint]] = {}
    for tier in TIERS:
        r = rv.replicas(tier)
        if r == 0:
            out[tier] = []
            continue
        g = global_rings.get(tier)
        if g is None or not g.points:
            raise RingError(f"key {key!r} needs {r} {tier.name} replicas but the tier ring is empty")
        nodes = ring_lookup(g, key, r)
        workers = [int(w) for w in ring_lookup(local_rings[tier], key, rv.threads(tier))]
        out[tier] = [(node, w) for node in nodes for w in workers]
    return out

from __future__ import annotations

import logging
from typing import Mapping

from ..lattice import LwwCell, merge
from ..metadata import ReplicationVector, decode_rv, default_vector, is_meta_key, metadata_vector
from ..ring import TIERS, HashRing, RingError, Tier, responsible_workers
from .messages import Endpoint

log = logging.getLogger(__name__)


class MetaView:
    """One actor's (possibly stale) copy of rings and replication vectors."""

    def __init__(
        self,
        k: int,
        global_rings: Mapping[Tier, HashRing],
        local_rings: Mapping[Tier, HashRing],
        rv_cells: Mapping[str, LwwCell] | None = None,
    ):
        self.k = k
        self.global_rings = dict(global_rings)
        self.local_rings = dict(local_rings)
        self.rv_cells: dict[str, LwwCell] = dict(rv_cells or {})
        self._rv_cache: dict[str, ReplicationVector] = {}
        self._owner_cache: dict[str, dict[Tier, list[Endpoint]]] = {}

    def copy(self) -> MetaView:
        return MetaView(self.k, self.global_rings, self.local_rings, self.rv_cells)

    def rv(self, key: str) -> ReplicationVector:
        if is_meta_key(key):
            return metadata_vector()
        rv = self._rv_cache.get(key)
        if rv is None:
            cell = self.rv_cells.get(key)
            rv = default_vector(self.k) if cell is None or cell.is_tombstone else decode_rv(cell.payload)
            self._rv_cache[key] = rv
        return rv

    def owners(self, key: str) -> dict[Tier, list[Endpoint]]:
        got = self._owner_cache.get(key)
        if got is None:
            rv = self.rv(key)
            # a tier whose ring is empty contributes nothing rather than failing
            rings = {t: r for t, r in self.global_rings.items() if r.points}
            clipped = rv.with_(
                r_mem=rv.r_mem if Tier.MEM in rings else 0,
                r_ebs=rv.r_ebs if Tier.EBS in rings else 0,
            )
            try:
                got = responsible_workers(key, clipped, rings, self.local_rings)
            except RingError:
                got = {t: [] for t in TIERS}
            self._owner_cache[key] = got
        return got

    def owner_set(self, key: str) -> set[Endpoint]:
        return {e for eps in self.owners(key).values() for e in eps}

    def preferred(self, key: str) -> list[Endpoint]:
        """Memory-tier endpoints when there are any, else the EBS ones."""
        owners = self.owners(key)
        return list(owners[Tier.MEM]) if owners.get(Tier.MEM) else list(owners.get(Tier.EBS, []))

    def set_ring(self, tier: Tier, ring: HashRing) -> bool:
        if self.global_rings.get(tier) == ring:
            return False
        self.global_rings[tier] = ring
        self._owner_cache.clear()
        return True

    def apply_rv(self, key: str, cell: LwwCell) -> bool:
        old = self.rv_cells.get(key)
        new = cell if old is None else merge(old, cell)
        if new is old:
            return False
        self.rv_cells[key] = new
        before = self._rv_cache.pop(key, None)
        self._owner_cache.pop(key, None)
        return before is None or self.rv(key) != before

    def node_count(self, tier: Tier) -> int:
        ring = self.global_rings.get(tier)
        return len(ring) if ring is not None else 0

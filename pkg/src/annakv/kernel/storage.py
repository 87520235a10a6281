"""Per-worker storage media.

The only difference between tiers is serde: the memory tier keeps cells in
a dict, the EBS tier writes one file per key holding the canonical cell
encoding under ``<data_dir>/<node_id>/<worker_index>/<urlencoded key>``.
"""

from __future__ import annotations

import contextvars
import logging
import os
from pathlib import Path
from typing import Iterator
from urllib.parse import quote

from ..lattice import CodecError, LwwCell, decode_cell, encode_cell
from ..ring import Tier

log = logging.getLogger(__name__)

# Identity of the actor currently executing; stores refuse foreign access.
current_actor: contextvars.ContextVar[object | None] = contextvars.ContextVar("current_actor", default=None)


class SharedStateViolation(RuntimeError):
    pass


class IntegrityFault(Exception):
    pass


class TierStore:
    """Private key -> cell map for exactly one worker."""

    def __init__(self, owner: object):
        self.owner = owner
        self.foreign_accesses = 0
        self.integrity_faults = 0

    def _check(self) -> None:
        actor = current_actor.get()
        if actor is not None and actor is not self.owner:
            self.foreign_accesses += 1
            raise SharedStateViolation(f"{actor!r} touched the store of {self.owner!r}")

    def persist(self, key: str, cell: LwwCell) -> None:
        raise NotImplementedError

    def load(self, key: str) -> LwwCell | None:
        raise NotImplementedError

    def delete(self, key: str) -> None:
        raise NotImplementedError

    def keys(self) -> Iterator[str]:
        raise NotImplementedError

    def __len__(self) -> int:
        raise NotImplementedError

    def stored_bytes(self) -> int:
        raise NotImplementedError


class MemStore(TierStore):
    def __init__(self, owner: object):
        super().__init__(owner)
        self._cells: dict[str, LwwCell] = {}
        self._bytes = 0

    def persist(self, key: str, cell: LwwCell) -> None:
        self._check()
        old = self._cells.get(key)
        if old is not None:
            self._bytes -= len(old.payload)
        self._cells[key] = cell
        self._bytes += len(cell.payload)

    def load(self, key: str) -> LwwCell | None:
        self._check()
        return self._cells.get(key)

    def delete(self, key: str) -> None:
        self._check()
        old = self._cells.pop(key, None)
        if old is not None:
            self._bytes -= len(old.payload)

    def keys(self) -> Iterator[str]:
        self._check()
        return iter(list(self._cells))

    def __len__(self) -> int:
        return len(self._cells)

    def stored_bytes(self) -> int:
        return self._bytes


class EbsStore(TierStore):
    def __init__(self, owner: object, directory: str | os.PathLike):
        super().__init__(owner)
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._sizes: dict[str, int] = {}

    def _path(self, key: str) -> Path:
        return self.directory / quote(key, safe="").replace(".", "%2E")

    def persist(self, key: str, cell: LwwCell) -> None:
        self._check()
        tmp = self._path(key).with_suffix(".tmp")
        tmp.write_bytes(encode_cell(cell))
        os.replace(tmp, self._path(key))
        self._sizes[key] = len(cell.payload)

    def load(self, key: str) -> LwwCell | None:
        self._check()
        path = self._path(key)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return None
        try:
            return decode_cell(data)
        except CodecError as exc:
            self.integrity_faults += 1
            log.error("integrity fault reading %s: %s", path, exc)
            return None

    def delete(self, key: str) -> None:
        self._check()
        self._sizes.pop(key, None)
        try:
            self._path(key).unlink()
        except FileNotFoundError:
            pass

    def keys(self) -> Iterator[str]:
        self._check()
        return iter(sorted(self._sizes))

    def __len__(self) -> int:
        return len(self._sizes)

    def stored_bytes(self) -> int:
        return sum(self._sizes.values())


def make_store(owner: object, tier: Tier, data_dir: str | os.PathLike | None, node_id: str, worker_index: int) -> TierStore:
    if tier is Tier.MEM:
        return MemStore(owner)
    if data_dir is None:
        raise ValueError("EBS-tier workers need a data directory")
    return EbsStore(owner, Path(data_dir) / node_id / str(worker_index))

"""Elastic multi-tier key-value store with selective replication.

The pieces, bottom up: last-writer-wins lattices (:mod:`annakv.lattice`),
consistent hashing (:mod:`annakv.ring`), metadata codecs
(:mod:`annakv.metadata`), the storage kernel (:mod:`annakv.kernel`),
routing and clients (:mod:`annakv.routing`), the monitor
(:mod:`annakv.monitor`), the policy engine (:mod:`annakv.policy`), the
cluster manager (:mod:`annakv.cluster`) and the experiment harness
(:mod:`annakv.bench`).
"""

from .lattice import LwwCell, Timestamp, merge
from .metadata import ReplicationVector, default_vector
from .ring import Tier

__version__ = "0.1.0"

__all__ = ["LwwCell", "Timestamp", "merge", "ReplicationVector", "default_vector", "Tier", "__version__"]

"""Storage kernel: shared-nothing workers, gossip, membership protocols."""

from .messages import (
    Broadcast,
    BroadcastKind,
    Endpoint,
    FrameKind,
    GossipAck,
    GossipMessage,
    Op,
    Request,
    Response,
    Status,
    WireError,
    decode_message,
    encode_message,
)
from .node import StorageNode, ring_meta_key, route_internal
from .storage import EbsStore, MemStore, SharedStateViolation, current_actor, make_store
from .transport import FaultConfig, InMemoryTransport, SocketTransport, Transport
from .view import MetaView
from .worker import Worker, worker_address

__all__ = [
    "Broadcast",
    "BroadcastKind",
    "EbsStore",
    "Endpoint",
    "FaultConfig",
    "FrameKind",
    "GossipAck",
    "GossipMessage",
    "InMemoryTransport",
    "MemStore",
    "MetaView",
    "Op",
    "Request",
    "Response",
    "SharedStateViolation",
    "SocketTransport",
    "Status",
    "StorageNode",
    "Transport",
    "WireError",
    "Worker",
    "current_actor",
    "decode_message",
    "encode_message",
    "make_store",
    "ring_meta_key",
    "route_internal",
    "worker_address",
]

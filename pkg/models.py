"""
Value types shared by the simulator, the routing agents and scenario files.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

NodeId = int


class Protocol(str, Enum):
    AODV = 'aodv'
    AOMDV = 'aomdv'
    TRUST_AOMDV = 'trust_aomdv'

    @property
    def multipath(self):
        return self is not Protocol.AODV

    @classmethod
    def parse(cls, value):
        """Accept 'aodv', 'AOMDV', 'trust-aomdv' ..."""
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace('-', '_')
        for protocol in cls:
            if protocol.value == key:
                return protocol
        raise ValueError(f"unknown protocol '{value}' (expected one of: {', '.join(p.value for p in cls)})")


@dataclass
class GroundTruthLink:
    """Bidirectional link with a latent per-transmission success probability"""
    a: NodeId
    b: NodeId
    q: float
    t: float
    up: bool = True

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"link {self.a}-{self.b}: endpoints must differ")
        if not (0.0 <= self.q <= 1.0):
            raise ValueError(f"link {self.a}-{self.b}: q must be in [0, 1], got {self.q}")
        if self.t <= 0:
            raise ValueError(f"link {self.a}-{self.b}: t must be positive, got {self.t}")

    @property
    def endpoints(self) -> Tuple[NodeId, NodeId]:
        return (self.a, self.b)

    @property
    def key(self) -> Tuple[NodeId, NodeId]:
        return link_key(self.a, self.b)

    def other(self, node: NodeId) -> NodeId:
        return self.b if node == self.a else self.a


def link_key(a: NodeId, b: NodeId) -> Tuple[NodeId, NodeId]:
    return (a, b) if a < b else (b, a)


class EventKind(str, Enum):
    TRAFFIC_ARRIVAL = 'TRAFFIC_ARRIVAL'
    BATCH_PLAN = 'BATCH_PLAN'
    TRANSMIT_START = 'TRANSMIT_START'
    TRANSMIT_END = 'TRANSMIT_END'
    DELIVER = 'DELIVER'
    ACK = 'ACK'
    ACK_TIMEOUT = 'ACK_TIMEOUT'
    CONTROL = 'CONTROL'
    BATTERY_BROADCAST = 'BATTERY_BROADCAST'
    LINK_STATE_CHANGE = 'LINK_STATE_CHANGE'
    DISCOVERY_RETRY = 'DISCOVERY_RETRY'
    TRUST_SAMPLE = 'TRUST_SAMPLE'


@dataclass(order=True)
class Event:
    """Queue entry; ordering is (time, sequence) only"""
    time: float
    sequence: int
    kind: EventKind = field(compare=False)
    node: NodeId = field(compare=False, default=-1)
    data: Dict[str, Any] = field(compare=False, default_factory=dict)


@dataclass
class Packet:
    uid: int
    flow: int
    source: NodeId
    dest: NodeId
    created: float
    hops: int = 0
    attempts: int = 0
    first_tx: Optional[float] = None
    first_ack: Optional[float] = None
    delivered: Optional[float] = None

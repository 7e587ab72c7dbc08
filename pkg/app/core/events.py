"""Simulation events and protocol messages."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

BROADCAST_ALL = "*"
BACKEND = "backend"


class Mode(str, Enum):
    """Transmission mode of the D2D link layer."""

    UNICAST = "Unicast"
    BROADCAST = "Broadcast"


class MessageKind(str, Enum):
    """Protocol message kinds."""

    JOIN_ADVERT = "JoinAdvert"
    LEAVE_ADVERT = "LeaveAdvert"
    REGISTRY_COPY = "RegistryCopy"
    BID = "Bid"
    ELECTION_RESULT = "ElectionResult"
    CHALLENGE_REQUEST = "ChallengeRequest"
    CHALLENGE_RESPONSE = "ChallengeResponse"
    FITNESS_UPDATE = "FitnessUpdate"
    RESIGNATION = "Resignation"
    SPEC_UPDATE = "SpecUpdate"
    SENSOR_REPORT = "SensorReport"
    BACKEND_REQUEST = "BackendRequest"
    REVIEW_REQUEST = "ReviewRequest"
    REVIEW_VERDICT = "ReviewVerdict"


# A single receiver, the whole neighbourhood, or an explicit receiver list.
Address = Union[str, Tuple[str, ...]]


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: str
    to: Address
    group: str = ""
    payload: Dict[str, Any] = field(default_factory=dict)
    size_hint: int = 1
    sent_at: float = 0.0

    @property
    def is_broadcast(self) -> bool:
        return self.to == BROADCAST_ALL

    @property
    def is_multicast(self) -> bool:
        return isinstance(self.to, tuple)


@dataclass(frozen=True)
class MessageDelivery:
    message: Message
    receiver: str


@dataclass(frozen=True)
class Timer:
    name: str
    node_id: Optional[str] = None
    data: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ContextChange:
    node_id: str
    booleans: Dict[str, bool] = field(default_factory=dict)
    scalars: Dict[str, float] = field(default_factory=dict)
    strings: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class NodeJoin:
    """A node powers up and enters the interaction space."""

    node_id: str


@dataclass(frozen=True)
class NodeCrash:
    """Silent departure: no goodbye message."""

    node_id: str


@dataclass(frozen=True)
class NodeShutdown:
    """Graceful departure: the node leaves its group first."""

    node_id: str


Payload = Union[MessageDelivery, Timer, ContextChange, NodeJoin, NodeCrash, NodeShutdown]


@dataclass(order=True, frozen=True)
class SimEvent:
    fire_at: float
    seq: int
    payload: Payload = field(compare=False)

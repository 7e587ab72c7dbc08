"""Simulated D2D network and backend link with per-kind message counters."""

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Set

import numpy as np

from app.core.errors import SenderDead
from app.core.events import (
    BACKEND,
    Message,
    MessageDelivery,
    MessageKind,
    Mode,
)
from app.core.scheduler import Scheduler
from app.core.trace import EventTrace
from app.schemas.scenario import NetConfig


@dataclass
class MessageCounters:
    """Transmissions per (kind, mode); receiver copies addressed, delivered and lost per kind."""

    transmitted: Counter = field(default_factory=Counter)
    addressed: Counter = field(default_factory=Counter)
    delivered: Counter = field(default_factory=Counter)
    lost: Counter = field(default_factory=Counter)

    def transmitted_count(self, kind: MessageKind, mode: Optional[Mode] = None) -> int:
        if mode is not None:
            return self.transmitted[(kind, mode)]
        return sum(self.transmitted[(kind, m)] for m in Mode)

    def copy(self) -> "MessageCounters":
        return MessageCounters(
            transmitted=Counter(self.transmitted),
            addressed=Counter(self.addressed),
            delivered=Counter(self.delivered),
            lost=Counter(self.lost),
        )

    def delta(self, earlier: "MessageCounters") -> "MessageCounters":
        """Counts accumulated since an earlier snapshot."""
        return MessageCounters(
            transmitted=self.transmitted - earlier.transmitted,
            addressed=self.addressed - earlier.addressed,
            delivered=self.delivered - earlier.delivered,
            lost=self.lost - earlier.lost,
        )

    def by_kind(self) -> Dict[str, int]:
        """Total transmissions per kind name, sorted for stable output."""
        totals: Counter = Counter()
        for (kind, _mode), count in self.transmitted.items():
            totals[kind.value] += count
        return dict(sorted(totals.items()))

    def to_dict(self) -> Dict[str, Dict[str, int]]:
        return {
            "transmitted": dict(
                sorted((f"{k.value}/{m.value}", c) for (k, m), c in self.transmitted.items())
            ),
            "addressed": dict(sorted((k.value, c) for k, c in self.addressed.items())),
            "delivered": dict(sorted((k.value, c) for k, c in self.delivered.items())),
            "lost": dict(sorted((k.value, c) for k, c in self.lost.items())),
        }


class SimNetwork:
    """Delivers messages between alive nodes through the scheduler.

    D2D delivery inside a partition is reliable. Only BackendRequest can be
    lost, decided at send time against the sender's backend reachability.
    """

    def __init__(
        self,
        scheduler: Scheduler,
        config: NetConfig,
        rng: np.random.Generator,
        trace: Optional[EventTrace] = None,
    ):
        self.scheduler = scheduler
        self.config = config
        self.rng = rng
        self.trace = trace or EventTrace(enabled=False)
        self.counters = MessageCounters()
        self.alive: Set[str] = set()
        self.backend_inbox: List[Message] = []
        self._on_send: List[Callable[[Message, Mode], None]] = []

    @property
    def mode(self) -> Mode:
        return self.config.mode

    def add_send_listener(self, listener: Callable[[Message, Mode], None]) -> None:
        self._on_send.append(listener)

    def set_alive(self, node_id: str, alive: bool) -> None:
        if alive:
            self.alive.add(node_id)
        else:
            self.alive.discard(node_id)

    def partition_of(self, node_id: str, t: float) -> Optional[FrozenSet[str]]:
        """Node set of node_id's partition at time t, or None when unpartitioned."""
        for window in self.config.partitions:
            if window.start <= t < window.end:
                for group in window.groups:
                    if node_id in group:
                        return frozenset(group)
                listed = set().union(*window.groups)
                return frozenset(n for n in self.alive if n not in listed) | {node_id}
        return None

    def can_reach(self, a: str, b: str, t: float) -> bool:
        """True when a and b share a partition at time t."""
        part = self.partition_of(a, t)
        return part is None or b in part

    def neighbours(self, node_id: str, t: float) -> List[str]:
        """Alive nodes reachable over D2D from node_id, sorted by id."""
        return sorted(n for n in self.alive if n != node_id and self.can_reach(node_id, n, t))

    def reachability(self, node_id: str, t: float) -> float:
        value = self.config.backend_reachability.get(node_id, self.config.default_reachability)
        if isinstance(value, (int, float)):
            return float(value)
        for window in value:
            if window.start <= t and (window.end is None or t < window.end):
                return window.probability
        return self.config.default_reachability

    def send(self, msg: Message) -> None:
        """Transmit msg, counting transmissions per the configured mode.

        A neighbourhood or list-addressed message costs one transmission per
        receiver in Unicast mode and a single radio broadcast in Broadcast
        mode. The broadcast goes out even when the list names nobody but the
        sender, so a lone bidder still costs one Bid there.
        """
        now = self.scheduler.now
        if msg.sender not in self.alive:
            raise SenderDead(f"{msg.sender} is not alive and cannot send {msg.kind.value}")

        if msg.kind is MessageKind.BACKEND_REQUEST:
            self._send_backend(msg, now)
            return

        if msg.is_broadcast:
            receivers = self.neighbours(msg.sender, now)
        elif msg.is_multicast:
            receivers = [r for r in msg.to if r != msg.sender]
        else:
            receivers = [msg.to]

        if not (msg.is_broadcast or msg.is_multicast):
            self._count_transmission(msg, Mode.UNICAST)
        elif self.mode is Mode.BROADCAST:
            self._count_transmission(msg, Mode.BROADCAST)
        else:
            for _ in receivers:
                self._count_transmission(msg, Mode.UNICAST)
        if receivers or self.mode is Mode.BROADCAST:
            self.trace.message(now, msg.sender, "send", msg)
        for receiver in receivers:
            self.counters.addressed[msg.kind] += 1
            self.scheduler.schedule(
                now + self.config.d2d_latency, MessageDelivery(message=msg, receiver=receiver)
            )

    def _count_transmission(self, msg: Message, mode: Mode) -> None:
        self.counters.transmitted[(msg.kind, mode)] += 1
        for listener in self._on_send:
            listener(msg, mode)

    def _send_backend(self, msg: Message, now: float) -> None:
        self._count_transmission(msg, Mode.UNICAST)
        self.counters.addressed[msg.kind] += 1
        probability = self.reachability(msg.sender, now)
        draw = self.rng.random()
        if draw < probability:
            self.trace.message(now, msg.sender, "send", msg)
            self.scheduler.schedule(
                now + self.config.backend_latency, MessageDelivery(message=msg, receiver=BACKEND)
            )
        else:
            self.counters.lost[msg.kind] += 1
            self.trace.message(now, msg.sender, "lost", msg, f"p={probability:.3f}")

    def accept(self, delivery: MessageDelivery) -> bool:
        """Decide whether a scheduled delivery reaches its receiver now."""
        msg, receiver = delivery.message, delivery.receiver
        now = self.scheduler.now
        if receiver == BACKEND:
            self.counters.delivered[msg.kind] += 1
            self.backend_inbox.append(msg)
            self.trace.message(now, BACKEND, "deliver", msg)
            return True
        if receiver not in self.alive or not self.can_reach(msg.sender, receiver, now):
            self.counters.lost[msg.kind] += 1
            self.trace.message(now, receiver, "lost", msg)
            return False
        self.counters.delivered[msg.kind] += 1
        self.trace.message(now, receiver, "deliver", msg)
        return True

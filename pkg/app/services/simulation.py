"""Deterministic discrete-event simulation of a population of nodes."""

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

from app.core.events import (
    BACKEND,
    ContextChange,
    Message,
    MessageDelivery,
    MessageKind,
    Mode,
    NodeCrash,
    NodeJoin,
    NodeShutdown,
    SimEvent,
    Timer,
)
from app.core.metrics import MESSAGES_TRANSMITTED
from app.core.network import MessageCounters, SimNetwork
from app.core.rng import RandomStreams
from app.core.scheduler import Scheduler
from app.core.state import ElectionKey, TriggerKind
from app.core.trace import EventTrace
from app.logger import get_logger
from app.schemas.scenario import NetConfig, ProtocolConfig
from app.schemas.spec import GroupSpec
from app.services.context_service import ContextStore
from app.services.election_service import ElectionConfig
from app.services.node_agent import SoisNode
from app.services.spec_service import require_bound

logger = get_logger(__name__)

MessageHook = Callable[[SoisNode, Message, float], None]
TimerHook = Callable[[Timer, float], None]

GROUPING_ROUND = "grouping_round"
CLOSE_ELECTION = "close_election"


@dataclass
class ElectionStats:
    """Distinct elections observed across the population, keyed by trigger."""

    opened: Dict[ElectionKey, TriggerKind] = field(default_factory=dict)
    challenges: int = 0
    # Positions withdrawn by cardinality feedback; counted as Resignation, nothing is elected.
    position_drops: int = 0

    @property
    def count(self) -> int:
        return len(self.opened) + self.challenges + self.position_drops

    def by_trigger(self) -> Dict[str, int]:
        totals = Counter(kind.value for kind in self.opened.values())
        totals[TriggerKind.CHALLENGE.value] += self.challenges
        totals[TriggerKind.RESIGNATION.value] += self.position_drops
        return {kind.value: totals.get(kind.value, 0) for kind in TriggerKind}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "count": self.count,
            "by_trigger": self.by_trigger(),
            "challenges": self.challenges,
            "position_drops": self.position_drops,
        }


class Simulation:
    """Runs SoisNode instances over a simulated network in simulated time.

    Events at equal times fire in scheduling order; grouping rounds tick the
    alive nodes in ascending id order, so a run is a pure function of its
    inputs and seed.
    """

    def __init__(
        self,
        spec: GroupSpec,
        net: Optional[NetConfig] = None,
        protocol: Optional[ProtocolConfig] = None,
        seed: int = 0,
        trace: bool = True,
        grouping: bool = True,
    ):
        require_bound(spec)
        self.spec = spec
        self.net_config = net or NetConfig()
        self.protocol = protocol or ProtocolConfig()
        self.election_config = ElectionConfig(
            delta=self.protocol.delta, bid_window=self.protocol.bid_window
        )
        self.seed = seed
        self.scheduler = Scheduler()
        self.streams = RandomStreams(seed)
        self.trace = EventTrace(enabled=trace)
        self.network = SimNetwork(
            self.scheduler, self.net_config, self.streams.get("backend"), self.trace
        )
        self.network.add_send_listener(self._count_metric)
        self.contexts = ContextStore()
        self.nodes: Dict[str, SoisNode] = {}
        self.elections = ElectionStats()
        self.message_hooks: Dict[MessageKind, MessageHook] = {}
        self.timer_hooks: Dict[str, TimerHook] = {}
        self.membership_log: List[Tuple[float, str, str]] = []
        self.tick_time = -math.inf
        self.grouping = grouping
        self._started = False

        self.scheduler.register_handler(MessageDelivery, self._on_delivery)
        self.scheduler.register_handler(Timer, self._on_timer)
        self.scheduler.register_handler(ContextChange, self._on_context_change)
        self.scheduler.register_handler(NodeJoin, self._on_join)
        self.scheduler.register_handler(NodeCrash, self._on_crash)
        self.scheduler.register_handler(NodeShutdown, self._on_shutdown)

    @property
    def now(self) -> float:
        return self.scheduler.now

    @property
    def counters(self) -> MessageCounters:
        return self.network.counters

    # -- setup -----------------------------------------------------------------

    def add_node(
        self,
        node_id: str,
        booleans: Optional[Mapping[str, bool]] = None,
        scalars: Optional[Mapping[str, float]] = None,
        strings: Optional[Mapping[str, str]] = None,
        join_at: float = 0.0,
    ) -> SoisNode:
        if node_id in self.nodes:
            raise ValueError(f"node '{node_id}' already exists")
        if node_id == BACKEND:
            raise ValueError(f"'{BACKEND}' is reserved")
        self.contexts.register(node_id, booleans, scalars, strings, now=join_at)
        node = SoisNode(node_id, self)
        self.nodes[node_id] = node
        self.scheduler.schedule(join_at, NodeJoin(node_id))
        return node

    def join_at(self, t: float, node_id: str) -> None:
        self.scheduler.schedule(t, NodeJoin(node_id))

    def crash_at(self, t: float, node_id: str) -> None:
        self.scheduler.schedule(t, NodeCrash(node_id))

    def shutdown_at(self, t: float, node_id: str) -> None:
        self.scheduler.schedule(t, NodeShutdown(node_id))

    def change_context_at(
        self,
        t: float,
        node_id: str,
        booleans: Optional[Mapping[str, bool]] = None,
        scalars: Optional[Mapping[str, float]] = None,
        strings: Optional[Mapping[str, str]] = None,
    ) -> None:
        self.scheduler.schedule(
            t,
            ContextChange(
                node_id,
                booleans=dict(booleans or {}),
                scalars=dict(scalars or {}),
                strings=dict(strings or {}),
            ),
        )

    def schedule_timer(
        self,
        at: float,
        name: str,
        node_id: Optional[str] = None,
        data: Optional[Dict[str, Any]] = None,
    ) -> None:
        self.scheduler.schedule(at, Timer(name=name, node_id=node_id, data=data or {}))

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        if self.grouping:
            self.schedule_timer(max(self.now, 0.0), GROUPING_ROUND, data={"round": 0})

    def run_until(self, t_end: float) -> MessageCounters:
        """Advance simulated time to t_end; returns a snapshot of the counters."""
        self.start()
        self.scheduler.run_until(t_end)
        return self.counters.copy()

    # -- bookkeeping used by nodes ---------------------------------------------

    def record_membership(self, node_id: str, event: str, at: float) -> None:
        self.membership_log.append((at, node_id, event))
        self.trace.record(at, node_id, event, detail=self.spec.name)

    def record_election(self, key: ElectionKey, kind: TriggerKind) -> None:
        self.elections.opened.setdefault(key, kind)

    def record_challenge(self) -> None:
        self.elections.challenges += 1

    def record_position_drop(self, node_id: str, role: str, index: int) -> None:
        self.elections.position_drops += 1
        self.trace.record(self.now, node_id, "position_drop", detail=f"{role}[{index}]")
        logger.debug(f"Position {role}[{index}] withdrawn by cardinality feedback")

    # -- queries ---------------------------------------------------------------

    def alive_ids(self) -> List[str]:
        return sorted(n for n, node in self.nodes.items() if node.alive)

    def member_nodes(self) -> List[SoisNode]:
        return [self.nodes[n] for n in self.alive_ids() if self.nodes[n].is_member]

    def registries(self) -> Dict[str, Tuple]:
        return {node.node_id: node.registry.view() for node in self.member_nodes()}

    def converged(self) -> bool:
        """All alive members hold identical registry views."""
        views = list(self.registries().values())
        return all(view == views[0] for view in views[1:])

    def holder_of(self, role: str, index: int = 0) -> Optional[str]:
        """Holder of a position as seen by the lowest-id alive member."""
        for node in self.member_nodes():
            current = node.registry.holder(role, index)
            return current.node_id if current else None
        return None

    def assignments(self) -> Dict[str, Dict[int, str]]:
        """Final role assignments from the lowest-id alive member's replica."""
        members = self.member_nodes()
        if not members:
            return {}
        return {
            role: {index: a.node_id for index, a in members[0].registry.holders(role).items()}
            for role in sorted(members[0].registry.assignments)
        }

    # -- event handlers --------------------------------------------------------

    def _count_metric(self, msg: Message, mode: Mode) -> None:
        MESSAGES_TRANSMITTED.labels(kind=msg.kind.value).inc()

    def _on_delivery(self, event: SimEvent) -> None:
        delivery: MessageDelivery = event.payload
        if not self.network.accept(delivery) or delivery.receiver == BACKEND:
            return
        self.nodes[delivery.receiver].on_message(delivery.message, self.now)

    def _on_timer(self, event: SimEvent) -> None:
        timer: Timer = event.payload
        if timer.name == GROUPING_ROUND:
            self._grouping_round(timer.data["round"])
        elif timer.name == CLOSE_ELECTION:
            node = self.nodes.get(timer.node_id)
            if node is not None and node.alive:
                node.on_close_election(tuple(timer.data["key"]), self.now)
        elif timer.name in self.timer_hooks:
            self.timer_hooks[timer.name](timer, self.now)
        else:
            logger.warning(f"Unhandled timer '{timer.name}' at {self.now:.3f}")

    def _grouping_round(self, round_index: int) -> None:
        self.tick_time = self.now
        for node_id in self.alive_ids():
            self.nodes[node_id].on_tick(self.now)
        next_at = (round_index + 1) * self.protocol.grouping_period
        self.schedule_timer(next_at, GROUPING_ROUND, data={"round": round_index + 1})

    def _on_context_change(self, event: SimEvent) -> None:
        change: ContextChange = event.payload
        self.contexts.apply(
            change.node_id, change.booleans, change.scalars, change.strings, now=self.now
        )
        detail = " ".join(
            f"{term}={value}"
            for term, value in sorted(
                {**change.booleans, **change.scalars, **change.strings}.items()
            )
        )
        self.trace.record(self.now, change.node_id, "context", detail=detail)

    def _on_join(self, event: SimEvent) -> None:
        node = self.nodes[event.payload.node_id]
        if node.alive:
            return
        node.power_on()
        self.network.set_alive(node.node_id, True)
        self.trace.record(self.now, node.node_id, "power_on")

    def _on_crash(self, event: SimEvent) -> None:
        node = self.nodes[event.payload.node_id]
        if not node.alive:
            return
        if node.is_member:
            self.record_membership(node.node_id, "crash", self.now)
        else:
            self.trace.record(self.now, node.node_id, "crash")
        node.crash()
        self.network.set_alive(node.node_id, False)

    def _on_shutdown(self, event: SimEvent) -> None:
        node = self.nodes[event.payload.node_id]
        if not node.alive:
            return
        node.shutdown(self.now)
        self.network.set_alive(node.node_id, False)
        self.trace.record(self.now, node.node_id, "shutdown")

"""Protocol handler of one simulated node: grouping, elections and adaptation."""

from __future__ import annotations

from collections import Counter
from typing import TYPE_CHECKING, Any, Dict, FrozenSet, List, Optional, Set, Tuple

from app.core.errors import EmptyBidSet, NoEligibleNodes
from app.core.events import BROADCAST_ALL, Message, MessageKind
from app.core.state import (
    EPS,
    Assignment,
    ElectionKey,
    ElectionState,
    ElectionTrigger,
    GroupRegistry,
    PositionKey,
    TriggerKind,
)
from app.logger import get_logger
from app.schemas.context import NodeContext
from app.schemas.scenario import ControllerConfig
from app.services import adapt_service, election_service, membership_service
from app.services.context_service import rrc
from app.services.spec_service import current_bindings, effective_criteria

if TYPE_CHECKING:
    from app.services.simulation import Simulation

logger = get_logger(__name__)


class SoisNode:
    """A node's registry replica plus its election and adaptation state."""

    def __init__(self, node_id: str, sim: Simulation):
        self.node_id = node_id
        self.sim = sim
        self.spec = sim.spec
        self.spec_version = 0
        self.registry = GroupRegistry(group=sim.spec.name)
        self.elections: Dict[ElectionKey, ElectionState] = {}
        self.lost_peers: Set[str] = set()
        self.pending_newcomers: Set[str] = set()
        # Assignment messages naming a holder this replica does not know yet.
        self.deferred: List[Message] = []
        # Own election results: when they went out, their trigger and every node reached.
        self.announced: Dict[PositionKey, Tuple[float, TriggerKind, FrozenSet[str]]] = {}
        self.synced = False
        self.alive = False
        self.samples: Counter = Counter()

    # -- helpers ---------------------------------------------------------------

    @property
    def is_member(self) -> bool:
        return self.registry.is_member(self.node_id)

    @property
    def joined_at(self) -> Optional[float]:
        record = self.registry.members.get(self.node_id)
        return record.joined_at if record else None

    def context(self) -> NodeContext:
        return self.sim.contexts.snapshot(self.node_id, self.sim.now)

    def send(self, msg: Message) -> None:
        self.sim.network.send(msg)

    def settled(self, at: float) -> bool:
        joined_at = self.joined_at
        return joined_at is not None and joined_at <= at - self.sim.protocol.grouping_period + EPS

    def k_of(self, role: str) -> int:
        role_spec = self.spec.role(role)
        if role_spec is None:
            return 0
        return role_spec.cardinality.value or 0

    def holds(self, role: str) -> bool:
        return bool(self.registry.positions_of(self.node_id, role))

    def spec_payload(self) -> Dict[str, Any]:
        return {
            "spec": {
                "version": self.spec_version,
                "bindings": current_bindings(self.spec),
                "minimums": adapt_service.group_minimums(self.spec),
            }
        }

    def _reset(self) -> None:
        self.elections.clear()
        self.lost_peers.clear()
        self.pending_newcomers.clear()
        self.deferred.clear()
        self.announced.clear()
        self.samples.clear()
        self.synced = False

    # -- lifecycle -------------------------------------------------------------

    def power_on(self) -> None:
        self.alive = True

    def crash(self) -> None:
        """Silent failure; volatile protocol state is lost."""
        self.alive = False
        self.registry.clear()
        self._reset()

    def shutdown(self, now: float) -> None:
        """Graceful departure: advertise the leave before going down."""
        if self.is_member:
            msg = Message(
                kind=MessageKind.LEAVE_ADVERT,
                sender=self.node_id,
                to=BROADCAST_ALL,
                group=self.registry.group,
                payload={"joined_at": self.joined_at, "left_at": now},
                sent_at=now,
            )
            self.send(msg)
            self.sim.record_membership(self.node_id, "leave", now)
        self.crash()

    # -- grouping tick ---------------------------------------------------------

    def on_tick(self, now: float) -> None:
        ctx = self.context()
        if self.is_member:
            self._discover(now)
            self._evict(now)

        for msg in membership_service.grouping_tick(
            self.node_id, self.registry, self.spec, ctx, now
        ):
            self._reset()
            event = "join" if msg.kind is MessageKind.JOIN_ADVERT else "leave"
            self.sim.record_membership(self.node_id, event, now)
            self.send(msg)

        if not self.is_member:
            return
        if not self.synced and self.joined_at < now - EPS:
            self._finish_sync(now)
        if self.settled(now):
            self._allocate(ctx, now)

    def _discover(self, now: float) -> None:
        """Link-layer neighbour discovery refreshes liveness and heals partitions."""
        own = self.registry.members[self.node_id]
        own.last_seen = now
        for peer in self.sim.network.neighbours(self.node_id, now):
            if self.registry.is_member(peer):
                membership_service.refresh(self.registry, peer, now)
            elif peer in self.lost_peers:
                self.lost_peers.discard(peer)
                self.send(
                    Message(
                        kind=MessageKind.JOIN_ADVERT,
                        sender=self.node_id,
                        to=peer,
                        group=self.registry.group,
                        payload={"joined_at": own.joined_at},
                        sent_at=now,
                    )
                )

    def _evict(self, now: float) -> None:
        evicted, triggers = membership_service.evict_silent(
            self.node_id, self.registry, now, self.sim.protocol.liveness_timeout
        )
        for peer in evicted:
            self.lost_peers.add(peer)
            self.pending_newcomers.discard(peer)
            self.sim.trace.record(now, self.node_id, "evict", to=peer)
        for trigger in triggers:
            self.sim.trace.record(
                now,
                self.node_id,
                "vacancy",
                detail=f"{trigger.role}[{trigger.position_index}]",
            )

    def _finish_sync(self, now: float) -> None:
        """No copy arrived since joining: this node founded the group with its peers."""
        self.synced = True
        for newcomer in sorted(self.pending_newcomers):
            if not self.registry.is_member(newcomer):
                continue
            if self.registry.oldest(self.sim.tick_time, self.node_id) == self.node_id:
                self.send(
                    membership_service.registry_copy(
                        self.node_id, self.registry, newcomer, now, self.spec_payload()
                    )
                )
        self.pending_newcomers.clear()

    def _allocate(self, ctx: NodeContext, now: float) -> None:
        cfg = self.sim.election_config
        maxima = self.sim.protocol.term_maxima
        for role in self.spec.roles:
            effective = effective_criteria(self.spec, role.name)
            held = self.registry.positions_of(self.node_id, role.name)
            for position, (_, index) in enumerate(held):
                current = self.registry.holder(role.name, index)
                # A node keeps at most one position per role; concurrent elections can hand it two.
                if position > 0 or not rrc(ctx, effective):
                    if not current.resigning:
                        self._resign(role.name, index, current, now)
                    continue
                update = election_service.fitness_drift_tick(
                    self.node_id, role.name, index, self.registry, self.spec, ctx, cfg, now, maxima
                )
                if update is not None:
                    self.sim.trace.message(now, self.node_id, "fitness_update", update)
                    self.send(update)

            k = role.cardinality.value or 0
            open_indices = self.registry.open_positions(role.name, k)
            if open_indices:
                self._open(role.name, open_indices[0], now)
                continue
            challenge = election_service.maybe_challenge(
                self.node_id, role.name, self.registry, self.spec, ctx, cfg, maxima
            )
            if challenge is not None:
                self.sim.trace.message(now, self.node_id, "challenge", challenge)
                self.send(challenge)

    def _resign(self, role: str, index: int, current: Assignment, now: float) -> None:
        resigning = Assignment(
            current.node_id, current.fitness, current.elected_at, updated_at=now, resigning=True
        )
        self.registry.apply_assignment(role, index, resigning)
        self.sim.trace.record(now, self.node_id, "resign", detail=f"{role}[{index}]")
        self.send(
            election_service.assignment_message(
                MessageKind.RESIGNATION,
                self.node_id,
                BROADCAST_ALL,
                self.registry.group,
                role,
                index,
                resigning,
                now,
            )
        )

    # -- elections -------------------------------------------------------------

    def _has_election(self, role: str, index: int) -> bool:
        return any(key[0] == role and key[1] == index for key in self.elections)

    def _open(self, role: str, index: int, opened_at: float, bid: Optional[Message] = None) -> None:
        if self._has_election(role, index):
            return
        trigger = ElectionTrigger(
            group=self.registry.group,
            role=role,
            kind=self.registry.open_reason(role, index),
            position_index=index,
            opened_at=opened_at,
        )
        contexts = self.sim.contexts.snapshots(self.registry.members, self.sim.now)
        try:
            state, bids = election_service.open_election(
                trigger,
                self.registry,
                self.spec,
                contexts,
                self.sim.election_config,
                bidder=self.node_id,
                settle_period=self.sim.protocol.grouping_period,
                maxima=self.sim.protocol.term_maxima,
            )
        except NoEligibleNodes:
            current = self.registry.holder(role, index)
            if bid is None and current is not None and current.resigning:
                self.registry.vacate(role, index, TriggerKind.VACANCY, opened_at)
                self.sim.trace.record(opened_at, self.node_id, "vacate", detail=f"{role}[{index}]")
            elif bid is None:
                logger.debug(f"{self.node_id}: {role}[{index}] stays vacant, no eligible node")
            return
        if self.node_id not in state.eligible:
            return

        self.elections[state.key] = state
        self.sim.record_election(state.key, trigger.kind)
        self.sim.trace.record(
            self.sim.now,
            self.node_id,
            "elect_open",
            detail=f"{role}[{index}] {trigger.kind.value} eligible={','.join(state.eligible)}",
        )
        if bid is not None:
            election_service.record_bid(state, bid, self.sim.now)
        for msg in bids:
            self.send(msg)
        self.sim.schedule_timer(
            max(state.deadline, self.sim.now), "close_election", self.node_id, {"key": state.key}
        )

    def on_close_election(self, key: ElectionKey, now: float) -> None:
        state = self.elections.pop(key, None)
        if state is None:
            return
        try:
            winner, score = election_service.close_election(state)
        except EmptyBidSet:
            return
        role, index, _ = key
        bids = " ".join(f"{n}={s:.4f}" for n, s in sorted(state.bids.items()))
        self.sim.trace.record(
            now, self.node_id, "elect_close", detail=f"{role}[{index}] winner={winner} {bids}"
        )
        if not self.is_member or index not in self.registry.open_positions(role, self.k_of(role)):
            return
        if not self.registry.is_member(winner):
            return

        assignment = Assignment(winner, score, elected_at=now, updated_at=now)
        if not self.registry.apply_assignment(role, index, assignment) or winner != self.node_id:
            return
        others = tuple(
            m for m in self.registry.member_ids() if m != self.node_id and m not in state.bids
        )
        trigger = state.trigger.kind
        self.announced[(role, index)] = (now, trigger, frozenset((*others, *state.bids)))
        if others:
            self.send(self._result_message(role, index, assignment, others, trigger, now))

    def _result_message(
        self,
        role: str,
        index: int,
        assignment: Assignment,
        to,
        trigger: TriggerKind,
        now: float,
    ) -> Message:
        return election_service.assignment_message(
            MessageKind.ELECTION_RESULT,
            self.node_id,
            to,
            self.registry.group,
            role,
            index,
            assignment,
            now,
            trigger=trigger.value,
        )

    def _announce_to_latecomer(self, newcomer: str, joined_at: float, now: float) -> None:
        """Re-send own results that went out before this node learned of newcomer."""
        for key, (announced_at, trigger, reached) in sorted(self.announced.items()):
            role, index = key
            current = self.registry.holder(role, index)
            if current is None or current.node_id != self.node_id:
                continue
            if newcomer in reached or joined_at > announced_at + EPS:
                continue
            self.announced[key] = (announced_at, trigger, reached | {newcomer})
            self.send(self._result_message(role, index, current, newcomer, trigger, now))

    def _on_bid(self, msg: Message, now: float) -> None:
        payload = msg.payload
        key = (payload["role"], payload["index"], payload["opened_at"])
        state = self.elections.get(key)
        if state is not None:
            election_service.record_bid(state, msg, now)
            return
        role, index, opened_at = key
        # Late participant: a bid for a position this node also sees open.
        if not self.is_member or not self.settled(opened_at):
            return
        if index not in self.registry.open_positions(role, self.k_of(role)):
            return
        if now > opened_at + self.sim.election_config.bid_window:
            return
        self._open(role, index, opened_at, bid=msg)

    # -- messages --------------------------------------------------------------

    def on_message(self, msg: Message, now: float) -> None:
        membership_service.refresh(self.registry, msg.sender, msg.sent_at)
        kind = msg.kind

        if kind is MessageKind.JOIN_ADVERT:
            self._on_join_advert(msg, now)
        elif kind is MessageKind.LEAVE_ADVERT:
            triggers = membership_service.on_leave_advert(self.node_id, self.registry, msg, now)
            self.pending_newcomers.discard(msg.sender)
            for trigger in triggers:
                self.sim.trace.record(
                    now,
                    self.node_id,
                    "vacancy",
                    detail=f"{trigger.role}[{trigger.position_index}] {trigger.kind.value}",
                )
        elif kind is MessageKind.REGISTRY_COPY:
            if not self.is_member:
                return
            membership_service.on_registry_copy(self.node_id, self.registry, msg)
            self.apply_spec_update(msg.payload.get("spec", {}), now)
            self.synced = True
            self.pending_newcomers.clear()
            self._replay_deferred(now)
        elif kind is MessageKind.BID:
            self._on_bid(msg, now)
        elif kind in (
            MessageKind.ELECTION_RESULT,
            MessageKind.FITNESS_UPDATE,
            MessageKind.RESIGNATION,
            MessageKind.CHALLENGE_RESPONSE,
        ):
            self._apply_remote_assignment(msg)
        elif kind is MessageKind.CHALLENGE_REQUEST:
            self._on_challenge(msg, now)
        elif kind is MessageKind.SPEC_UPDATE:
            if self.is_member:
                self.apply_spec_update(msg.payload, now)
        elif kind in self.sim.message_hooks:
            self.sim.message_hooks[kind](self, msg, now)

    def _on_join_advert(self, msg: Message, now: float) -> None:
        copy = membership_service.on_join_advert(
            self.node_id,
            self.registry,
            msg,
            now,
            live_after=self.sim.tick_time,
            extra=self.spec_payload(),
        )
        self.lost_peers.discard(msg.sender)
        record = self.registry.members.get(msg.sender)
        if record is not None and record.joined_at == msg.payload["joined_at"]:
            self._replay_deferred(now)
            self._announce_to_latecomer(msg.sender, record.joined_at, now)
        if copy is None:
            return
        if self.synced:
            self.send(copy)
        else:
            self.pending_newcomers.add(msg.sender)

    def _apply_remote_assignment(self, msg: Message) -> None:
        if not self.is_member:
            return
        payload = msg.payload
        if payload.get("assignment") is None:
            return
        role, index = payload["role"], payload["index"]
        if index >= self.k_of(role):
            return
        assignment = Assignment.from_payload(payload["assignment"])
        if not self.registry.is_member(assignment.node_id):
            # Holder unknown until the registry copy or its JoinAdvert arrives.
            self.deferred.append(msg)
            return
        if assignment.updated_at + EPS < self.registry.members[assignment.node_id].joined_at:
            return
        self.registry.apply_assignment(role, index, assignment)

    def _replay_deferred(self, now: float) -> None:
        pending, self.deferred = self.deferred, []
        horizon = now - self.sim.protocol.liveness_timeout
        for msg in pending:
            if msg.sent_at >= horizon - EPS:
                self._apply_remote_assignment(msg)

    def _on_challenge(self, msg: Message, now: float) -> None:
        if not self.is_member:
            return
        outcome, replies = election_service.on_challenge(
            self.node_id,
            self.registry,
            self.spec,
            msg,
            self.context(),
            now,
            self.sim.protocol.term_maxima,
        )
        if outcome is not election_service.ChallengeOutcome.STALE:
            self.sim.record_challenge()
        self.sim.trace.record(
            now,
            self.node_id,
            "challenge_outcome",
            sender=msg.sender,
            detail=f"{msg.payload['role']}[{msg.payload['index']}] {outcome.value}",
        )
        for reply in replies:
            self.send(reply)

    # -- adaptation ------------------------------------------------------------

    def apply_spec_update(self, payload: Dict[str, Any], now: float) -> bool:
        """Adopt a newer spec version; position changes are applied to the registry."""
        version = payload.get("version", 0)
        if version <= self.spec_version:
            return False
        self.spec = adapt_service.rebuild_spec(
            self.spec, payload.get("bindings", {}), payload.get("minimums", {})
        )
        self.spec_version = version
        drop = payload.get("drop")
        if drop is not None:
            role, index = drop
            adapt_service.shrink_positions(self.registry, role, index)
            for key in [key for key in self.elections if key[0] == role]:
                del self.elections[key]
        grow = payload.get("grow")
        if grow is not None:
            role, index = grow
            adapt_service.grow_positions(self.registry, role, index + 1, now)
        self.sim.trace.record(
            now, self.node_id, "spec_update", detail=f"v{version} {payload.get('bindings')}"
        )
        return True

    def adapt_cardinality(
        self, controllers: Dict[str, ControllerConfig], window: float, now: float
    ) -> None:
        """Aggregator feedback: re-bind sensing-role cardinalities from samples received."""
        for role, cfg in sorted(controllers.items()):
            k = self.k_of(role)
            ctrl = adapt_service.CardinalityController(
                role=role,
                target_samples_per_window=cfg.target_samples_per_window,
                window=window,
                k_min=cfg.k_min,
                k_max=cfg.k_max,
                current_k=min(max(k, cfg.k_min), cfg.k_max),
            )
            new_k = adapt_service.cardinality_feedback(ctrl, self.samples.get(role, 0))
            if new_k is None or new_k == k:
                continue
            payload: Dict[str, Any] = {
                "version": self.spec_version + 1,
                "bindings": current_bindings(adapt_service.rebind_role(self.spec, role, new_k)),
                "minimums": adapt_service.group_minimums(self.spec),
                "drop": None,
                "grow": None,
            }
            if new_k < k:
                index = adapt_service.position_to_drop(self.registry, role, k)
                payload["drop"] = (role, index)
                self.sim.record_position_drop(self.node_id, role, index)
            else:
                payload["grow"] = (role, new_k - 1)
            self.apply_spec_update(payload, now)
            self.send(
                Message(
                    kind=MessageKind.SPEC_UPDATE,
                    sender=self.node_id,
                    to=BROADCAST_ALL,
                    group=self.registry.group,
                    payload=payload,
                    sent_at=now,
                )
            )
            logger.debug(f"{self.node_id} re-binds '{role}' from k={k} to k={new_k}")

    def adjust_minimum(self, term: str, new_minimum: float, now: float) -> None:
        """Aggregator-issued change of a group-level minimum."""
        adjusted = adapt_service.adjust_group_criteria(
            self.spec, adapt_service.CriteriaAdjustment(term, new_minimum)
        )
        payload = {
            "version": self.spec_version + 1,
            "bindings": current_bindings(self.spec),
            "minimums": adapt_service.group_minimums(adjusted),
            "drop": None,
            "grow": None,
        }
        self.apply_spec_update(payload, now)
        self.send(
            Message(
                kind=MessageKind.SPEC_UPDATE,
                sender=self.node_id,
                to=BROADCAST_ALL,
                group=self.registry.group,
                payload=payload,
                sent_at=now,
            )
        )

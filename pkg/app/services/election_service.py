"""Decentralized role allocation: vacancy, resignation and challenge elections."""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple

from app.config import settings
from app.core.errors import EmptyBidSet, NoEligibleNodes
from app.core.events import BROADCAST_ALL, Message, MessageKind
from app.core.state import (
    EPS,
    Assignment,
    ElectionState,
    ElectionTrigger,
    GroupRegistry,
    TriggerKind,
)
from app.logger import get_logger
from app.schemas.context import NodeContext
from app.schemas.spec import GroupSpec
from app.services.context_service import fitness, rrc
from app.services.spec_service import effective_criteria

logger = get_logger(__name__)


@dataclass(frozen=True)
class ElectionConfig:
    delta: float = settings.DELTA
    bid_window: float = settings.BID_WINDOW

    def __post_init__(self) -> None:
        if self.delta <= 1.0:
            raise ValueError(f"delta must be > 1, got {self.delta}")
        if self.bid_window <= 0:
            raise ValueError("bid_window must be positive")


class ChallengeOutcome(str, Enum):
    CHALLENGER_WINS = "ChallengerWins"
    INCUMBENT_RETAINS = "IncumbentRetains"
    STALE = "StaleChallenge"


def eligible_nodes(
    role: str,
    registry: GroupRegistry,
    spec: GroupSpec,
    contexts: Mapping[str, NodeContext],
    at: float,
    settle_period: float = 0.0,
) -> List[str]:
    """Settled members satisfying the role's RRC and holding none of its positions."""
    effective = effective_criteria(spec, role)
    holders = {a.node_id for a in registry.assignments.get(role, {}).values()}
    eligible = []
    for node, record in sorted(registry.members.items()):
        if record.joined_at > at - settle_period + EPS or node in holders:
            continue
        ctx = contexts.get(node)
        if ctx is not None and rrc(ctx, effective):
            eligible.append(node)
    return eligible


def bid_message(
    trigger: ElectionTrigger, bidder: str, score: float, to: Tuple[str, ...]
) -> Message:
    return Message(
        kind=MessageKind.BID,
        sender=bidder,
        to=to,
        group=trigger.group,
        payload={
            "role": trigger.role,
            "index": trigger.position_index,
            "opened_at": trigger.opened_at,
            "trigger": trigger.kind.value,
            "fitness": score,
        },
        sent_at=trigger.opened_at,
    )


def open_election(
    trigger: ElectionTrigger,
    registry: GroupRegistry,
    spec: GroupSpec,
    contexts: Mapping[str, NodeContext],
    cfg: ElectionConfig,
    bidder: Optional[str] = None,
    settle_period: float = 0.0,
    maxima: Optional[Mapping[str, float]] = None,
) -> Tuple[ElectionState, List[Message]]:
    """Compute the eligible set and the Bid messages it emits.

    With ``bidder`` set, only that node's bid is produced (the view of one
    participant); otherwise every eligible node bids.
    """
    if trigger.kind is TriggerKind.CHALLENGE:
        raise ValueError("challenges are resolved by the incumbent, not by an open election")

    eligible = eligible_nodes(
        trigger.role, registry, spec, contexts, trigger.opened_at, settle_period
    )
    if not eligible:
        raise NoEligibleNodes(
            f"no eligible node for {trigger.role}[{trigger.position_index}] "
            f"in group '{trigger.group}'"
        )

    state = ElectionState(
        trigger=trigger,
        deadline=trigger.opened_at + cfg.bid_window,
        eligible=tuple(eligible),
    )
    effective = effective_criteria(spec, trigger.role)
    bidders = eligible if bidder is None else [b for b in eligible if b == bidder]
    messages = []
    for node in bidders:
        score = fitness(contexts[node], effective, maxima).value
        state.bids[node] = score
        messages.append(bid_message(trigger, node, score, tuple(e for e in eligible if e != node)))
    return state, messages


def record_bid(state: ElectionState, msg: Message, now: float) -> bool:
    """Record a Bid for this election; bids after the deadline are ignored."""
    payload = msg.payload
    key = (payload["role"], payload["index"], payload["opened_at"])
    if key != state.key or now > state.deadline + EPS:
        return False
    state.bids[msg.sender] = payload["fitness"]
    return True


def close_election(state: ElectionState) -> Tuple[str, float]:
    """Highest bid wins; ties go to the smallest node id."""
    if not state.bids:
        raise EmptyBidSet(
            f"election for {state.trigger.role}[{state.trigger.position_index}] had no bids"
        )
    winner, score = min(state.bids.items(), key=lambda item: (-item[1], item[0]))
    state.elected = (winner, score)
    return winner, score


def assignment_message(
    kind: MessageKind,
    sender: str,
    to,
    group: str,
    role: str,
    index: int,
    assignment: Optional[Assignment],
    now: float,
    **extra,
) -> Message:
    return Message(
        kind=kind,
        sender=sender,
        to=to,
        group=group,
        payload={
            "role": role,
            "index": index,
            "assignment": assignment.to_payload() if assignment else None,
            **extra,
        },
        sent_at=now,
    )


def maybe_challenge(
    node_id: str,
    role: str,
    registry: GroupRegistry,
    spec: GroupSpec,
    ctx: NodeContext,
    cfg: ElectionConfig,
    maxima: Optional[Mapping[str, float]] = None,
) -> Optional[Message]:
    """ChallengeRequest to the weakest incumbent iff FS_a >= delta * FS_e."""
    positions = registry.assignments.get(role, {})
    if any(a.node_id == node_id for a in positions.values()):
        return None
    effective = effective_criteria(spec, role)
    if not rrc(ctx, effective):
        return None
    candidates = sorted((a.fitness, index) for index, a in positions.items() if not a.resigning)
    if not candidates:
        return None

    fs_e, index = candidates[0]
    fs_a = fitness(ctx, effective, maxima).value
    if fs_a <= 0 or fs_a < cfg.delta * fs_e:
        return None

    incumbent = positions[index].node_id
    logger.debug(
        f"{node_id} challenges {incumbent} for {role}[{index}]: {fs_a:.4f} >= "
        f"{cfg.delta} * {fs_e:.4f}"
    )
    return Message(
        kind=MessageKind.CHALLENGE_REQUEST,
        sender=node_id,
        to=incumbent,
        group=registry.group,
        payload={"role": role, "index": index, "fitness": fs_a, "fs_e": fs_e},
        sent_at=ctx.now,
    )


def on_challenge(
    node_id: str,
    registry: GroupRegistry,
    spec: GroupSpec,
    msg: Message,
    ctx: NodeContext,
    now: float,
    maxima: Optional[Mapping[str, float]] = None,
) -> Tuple[ChallengeOutcome, List[Message]]:
    """Incumbent side of a challenge: confirm or deny, then advertise the result."""
    role, index = msg.payload["role"], msg.payload["index"]
    challenger, challenger_fs = msg.sender, msg.payload["fitness"]
    current = registry.holder(role, index)

    if current is None or current.node_id != node_id or current.resigning:
        response = assignment_message(
            MessageKind.CHALLENGE_RESPONSE,
            node_id,
            challenger,
            registry.group,
            role,
            index,
            current,
            now,
            outcome=ChallengeOutcome.STALE.value,
        )
        return ChallengeOutcome.STALE, [response]

    fs_a = fitness(ctx, effective_criteria(spec, role), maxima).value
    if challenger_fs > fs_a and registry.is_member(challenger):
        outcome = ChallengeOutcome.CHALLENGER_WINS
        updated = Assignment(challenger, challenger_fs, elected_at=now, updated_at=now)
    else:
        outcome = ChallengeOutcome.INCUMBENT_RETAINS
        updated = Assignment(node_id, fs_a, elected_at=current.elected_at, updated_at=now)
    registry.apply_assignment(role, index, updated)
    logger.debug(f"Challenge by {challenger} on {role}[{index}] held by {node_id}: {outcome.value}")

    response = assignment_message(
        MessageKind.CHALLENGE_RESPONSE,
        node_id,
        challenger,
        registry.group,
        role,
        index,
        updated,
        now,
        outcome=outcome.value,
    )
    result = assignment_message(
        MessageKind.ELECTION_RESULT,
        node_id,
        BROADCAST_ALL,
        registry.group,
        role,
        index,
        updated,
        now,
        trigger=TriggerKind.CHALLENGE.value,
    )
    return outcome, [response, result]


def fitness_drift_tick(
    node_id: str,
    role: str,
    index: int,
    registry: GroupRegistry,
    spec: GroupSpec,
    ctx: NodeContext,
    cfg: ElectionConfig,
    now: float,
    maxima: Optional[Mapping[str, float]] = None,
) -> Optional[Message]:
    """FitnessUpdate when FS_a leaves the band ((2 - delta) * FS_e, delta * FS_e)."""
    current = registry.holder(role, index)
    if current is None or current.node_id != node_id:
        return None
    fs_a = fitness(ctx, effective_criteria(spec, role), maxima).value
    fs_e = current.fitness
    if fs_a == fs_e:
        return None
    if fs_a < cfg.delta * fs_e and fs_a > (2 - cfg.delta) * fs_e:
        return None

    updated = Assignment(
        node_id, fs_a, elected_at=current.elected_at, updated_at=now, resigning=current.resigning
    )
    registry.apply_assignment(role, index, updated)
    return assignment_message(
        MessageKind.FITNESS_UPDATE,
        node_id,
        BROADCAST_ALL,
        registry.group,
        role,
        index,
        updated,
        now,
    )


def allocate_k_positions(
    role: str,
    k: int,
    registry: GroupRegistry,
    spec: GroupSpec,
    contexts: Mapping[str, NodeContext],
    now: float = 0.0,
    cfg: Optional[ElectionConfig] = None,
    maxima: Optional[Mapping[str, float]] = None,
) -> Dict[int, Optional[Assignment]]:
    """Fill positions 0..k-1 by successive elections; leftovers stay vacant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cfg = cfg or ElectionConfig()
    result: Dict[int, Optional[Assignment]] = {}
    for index in range(k):
        current = registry.holder(role, index)
        if current is not None and not current.resigning:
            result[index] = current
            continue
        trigger = ElectionTrigger(
            group=registry.group,
            role=role,
            kind=registry.open_reason(role, index),
            position_index=index,
            opened_at=now,
        )
        try:
            state, _ = open_election(trigger, registry, spec, contexts, cfg, maxima=maxima)
        except NoEligibleNodes:
            result[index] = None
            continue
        winner, score = close_election(state)
        assignment = Assignment(winner, score, elected_at=now, updated_at=now)
        registry.assignments.setdefault(role, {})[index] = assignment
        registry.vacated.pop((role, index), None)
        result[index] = assignment
    return result

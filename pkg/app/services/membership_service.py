"""Self-grouping protocol: join/leave on RRC satisfaction and registry replication."""

import math
from typing import Any, Dict, List, Optional, Tuple

from app.core.events import BROADCAST_ALL, Message, MessageKind
from app.core.state import EPS, ElectionTrigger, GroupRegistry, MemberRecord, TriggerKind
from app.logger import get_logger
from app.schemas.context import NodeContext
from app.schemas.spec import GroupSpec
from app.services.context_service import group_membership

logger = get_logger(__name__)


def grouping_tick(
    node_id: str,
    registry: GroupRegistry,
    spec: GroupSpec,
    ctx: NodeContext,
    now: float,
) -> List[Message]:
    """Join or leave the group depending on the node's current RRC satisfaction."""
    eligible = group_membership(ctx, spec)
    is_member = registry.is_member(node_id)

    if is_member and not eligible:
        joined_at = registry.members[node_id].joined_at
        registry.clear()
        logger.debug(f"{node_id} leaves group '{spec.name}' at {now:.3f}")
        return [
            Message(
                kind=MessageKind.LEAVE_ADVERT,
                sender=node_id,
                to=BROADCAST_ALL,
                group=spec.name,
                payload={"joined_at": joined_at, "left_at": now},
                sent_at=now,
            )
        ]

    if eligible and not is_member:
        registry.clear()
        registry.members[node_id] = MemberRecord(joined_at=now, last_seen=now)
        logger.debug(f"{node_id} joins group '{spec.name}' at {now:.3f}")
        return [
            Message(
                kind=MessageKind.JOIN_ADVERT,
                sender=node_id,
                to=BROADCAST_ALL,
                group=spec.name,
                payload={"joined_at": now},
                sent_at=now,
            )
        ]

    return []


def registry_copy(
    node_id: str,
    registry: GroupRegistry,
    newcomer: str,
    now: float,
    extra: Optional[Dict[str, Any]] = None,
) -> Message:
    """RegistryCopy addressed to a newcomer, carrying the full replica."""
    payload = {"registry": registry.to_payload(), **(extra or {})}
    return Message(
        kind=MessageKind.REGISTRY_COPY,
        sender=node_id,
        to=newcomer,
        group=registry.group,
        payload=payload,
        size_hint=max(1, len(registry.members)),
        sent_at=now,
    )


def on_join_advert(
    node_id: str,
    registry: GroupRegistry,
    msg: Message,
    now: float,
    live_after: float = -math.inf,
    extra: Optional[Dict[str, Any]] = None,
) -> Optional[Message]:
    """Insert the newcomer; the oldest live member answers with a RegistryCopy."""
    if not registry.is_member(node_id):
        return None

    newcomer = msg.sender
    joined_at = msg.payload["joined_at"]
    if registry.departed.get(newcomer, -math.inf) >= joined_at:
        return None

    record = registry.members.get(newcomer)
    if record is not None:
        if record.joined_at == joined_at:
            record.last_seen = max(record.last_seen, msg.sent_at)
            return None
        if record.joined_at > joined_at:
            return None
        # Rejoin whose leave we never saw.
        registry.remove_member(newcomer, now, TriggerKind.RESIGNATION)

    registry.members[newcomer] = MemberRecord(joined_at=joined_at, last_seen=msg.sent_at)
    registry.departed.pop(newcomer, None)

    if registry.oldest(live_after=live_after, self_id=node_id) == node_id:
        return registry_copy(node_id, registry, newcomer, now, extra)
    return None


def on_leave_advert(
    node_id: str,
    registry: GroupRegistry,
    msg: Message,
    now: float,
) -> List[ElectionTrigger]:
    """Remove the leaver; each position it held becomes a Resignation trigger."""
    if not registry.is_member(node_id):
        return []

    leaver = msg.sender
    left_at = msg.payload["left_at"]
    registry.departed[leaver] = max(registry.departed.get(leaver, -math.inf), left_at)

    record = registry.members.get(leaver)
    if record is None or record.joined_at > left_at:
        return []

    held = registry.remove_member(leaver, now, TriggerKind.RESIGNATION)
    return [
        ElectionTrigger(
            group=registry.group,
            role=role,
            kind=TriggerKind.RESIGNATION,
            position_index=index,
            opened_at=now,
        )
        for role, index in held
    ]


def on_registry_copy(node_id: str, registry: GroupRegistry, msg: Message) -> None:
    """Adopt the copy, keeping whatever this node learned after joining."""
    if not registry.is_member(node_id):
        return
    registry.merge(GroupRegistry.from_payload(msg.payload["registry"]))


def refresh(registry: GroupRegistry, peer: str, seen_at: float) -> None:
    record = registry.members.get(peer)
    if record is not None:
        record.last_seen = max(record.last_seen, seen_at)


def evict_silent(
    node_id: str,
    registry: GroupRegistry,
    now: float,
    timeout: float,
) -> Tuple[List[str], List[ElectionTrigger]]:
    """Evict members not seen for longer than timeout; their positions become vacancies."""
    evicted = [
        peer
        for peer, rec in sorted(registry.members.items())
        if peer != node_id and now - rec.last_seen > timeout + EPS
    ]
    triggers: List[ElectionTrigger] = []
    for peer in evicted:
        for role, index in registry.remove_member(peer, now, TriggerKind.VACANCY):
            triggers.append(
                ElectionTrigger(
                    group=registry.group,
                    role=role,
                    kind=TriggerKind.VACANCY,
                    position_index=index,
                    opened_at=now,
                )
            )
    return evicted, triggers

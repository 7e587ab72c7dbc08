"""Per-node protocol state: group registry replica and election bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

EPS = 1e-9

PositionKey = Tuple[str, int]
ElectionKey = Tuple[str, int, float]


class TriggerKind(str, Enum):
    VACANCY = "Vacancy"
    RESIGNATION = "Resignation"
    CHALLENGE = "Challenge"


@dataclass
class MemberRecord:
    joined_at: float
    last_seen: float


@dataclass
class Assignment:
    """Holder of one role position and its fitness score at election (FS_e)."""

    node_id: str
    fitness: float
    elected_at: float
    updated_at: float
    resigning: bool = False

    @property
    def rank(self) -> Tuple[float, str]:
        return -self.fitness, self.node_id

    def to_payload(self) -> Dict[str, Any]:
        return {
            "node_id": self.node_id,
            "fitness": self.fitness,
            "elected_at": self.elected_at,
            "updated_at": self.updated_at,
            "resigning": self.resigning,
        }

    @classmethod
    def from_payload(cls, data: Dict[str, Any]) -> Assignment:
        return cls(**data)


@dataclass(frozen=True)
class ElectionTrigger:
    group: str
    role: str
    kind: TriggerKind
    position_index: int
    opened_at: float
    challenger: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.challenger is not None) != (self.kind is TriggerKind.CHALLENGE):
            raise ValueError("challenger is set exactly for Challenge triggers")
        if self.position_index < 0:
            raise ValueError("position_index must be non-negative")


@dataclass
class ElectionState:
    trigger: ElectionTrigger
    deadline: float
    eligible: Tuple[str, ...]
    bids: Dict[str, float] = field(default_factory=dict)
    elected: Optional[Tuple[str, float]] = None

    @property
    def key(self) -> ElectionKey:
        return (self.trigger.role, self.trigger.position_index, self.trigger.opened_at)


@dataclass
class GroupRegistry:
    """One node's replica of the group's members and role assignments."""

    group: str
    members: Dict[str, MemberRecord] = field(default_factory=dict)
    # Leave tombstones: node -> time it advertised its departure.
    departed: Dict[str, float] = field(default_factory=dict)
    assignments: Dict[str, Dict[int, Assignment]] = field(default_factory=dict)
    vacated: Dict[PositionKey, Tuple[TriggerKind, float]] = field(default_factory=dict)

    def member_ids(self) -> List[str]:
        return sorted(self.members)

    def is_member(self, node_id: str) -> bool:
        return node_id in self.members

    def clear(self) -> None:
        self.members.clear()
        self.departed.clear()
        self.assignments.clear()
        self.vacated.clear()

    def oldest(self, live_after: float = -math.inf, self_id: Optional[str] = None) -> Optional[str]:
        """Oldest member by (joined_at, node_id) among members seen since live_after."""
        live = [
            (rec.joined_at, node)
            for node, rec in self.members.items()
            if node == self_id or rec.last_seen >= live_after - EPS
        ]
        return min(live)[1] if live else None

    def holder(self, role: str, index: int) -> Optional[Assignment]:
        return self.assignments.get(role, {}).get(index)

    def holders(self, role: str) -> Dict[int, Assignment]:
        return dict(sorted(self.assignments.get(role, {}).items()))

    def positions_of(self, node_id: str, role: Optional[str] = None) -> List[PositionKey]:
        return sorted(
            (r, i)
            for r, positions in self.assignments.items()
            if role is None or r == role
            for i, a in positions.items()
            if a.node_id == node_id
        )

    def open_positions(self, role: str, k: int) -> List[int]:
        """Indices in [0, k) that are vacant or held by a resigning node."""
        positions = self.assignments.get(role, {})
        return [i for i in range(k) if i not in positions or positions[i].resigning]

    def open_reason(self, role: str, index: int) -> TriggerKind:
        current = self.holder(role, index)
        if current is not None and current.resigning:
            return TriggerKind.RESIGNATION
        reason = self.vacated.get((role, index))
        return reason[0] if reason else TriggerKind.VACANCY

    def vacate(self, role: str, index: int, kind: TriggerKind, now: float) -> None:
        self.assignments.get(role, {}).pop(index, None)
        self.vacated[(role, index)] = (kind, now)

    def remove_member(self, node_id: str, now: float, kind: TriggerKind) -> List[PositionKey]:
        """Drop a member and vacate every position it held."""
        self.members.pop(node_id, None)
        held = self.positions_of(node_id)
        for role, index in held:
            self.vacate(role, index, kind, now)
        return held

    def apply_assignment(self, role: str, index: int, assignment: Assignment) -> bool:
        """Record an assignment unless a newer record for the position exists."""
        if assignment.node_id not in self.members:
            return False
        vacated = self.vacated.get((role, index))
        if vacated is not None and vacated[1] > assignment.updated_at + EPS:
            return False
        current = self.holder(role, index)
        if current is not None:
            if current.updated_at > assignment.updated_at + EPS:
                return False
            # Concurrent elections of one position settle on the fitter, then smaller, id.
            concurrent = abs(current.updated_at - assignment.updated_at) <= EPS
            rival = current.node_id != assignment.node_id
            if concurrent and rival and current.rank < assignment.rank:
                return False
        self.assignments.setdefault(role, {})[index] = Assignment(**assignment.to_payload())
        self.vacated.pop((role, index), None)
        return True

    def merge(self, other: GroupRegistry) -> None:
        """Union-merge another replica; newer joins, leaves and assignments win."""
        for node, left_at in other.departed.items():
            self.departed[node] = max(self.departed.get(node, -math.inf), left_at)
        for node, rec in other.members.items():
            if self.departed.get(node, -math.inf) >= rec.joined_at:
                continue
            mine = self.members.get(node)
            if mine is None or rec.joined_at > mine.joined_at:
                self.members[node] = MemberRecord(rec.joined_at, rec.last_seen)
            elif rec.joined_at == mine.joined_at:
                mine.last_seen = max(mine.last_seen, rec.last_seen)
        for node in list(self.members):
            if self.departed.get(node, -math.inf) >= self.members[node].joined_at:
                self.remove_member(node, self.departed[node], TriggerKind.RESIGNATION)
        for key, (kind, at) in other.vacated.items():
            if key not in self.vacated or self.vacated[key][1] < at:
                current = self.holder(*key)
                if current is None or current.updated_at < at:
                    self.vacate(key[0], key[1], kind, at)
        for role, positions in other.assignments.items():
            for index, assignment in positions.items():
                self.apply_assignment(role, index, assignment)
        for role in list(self.assignments):
            for index, assignment in list(self.assignments[role].items()):
                if assignment.node_id not in self.members:
                    self.vacate(role, index, TriggerKind.VACANCY, assignment.updated_at)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "group": self.group,
            "members": {n: (r.joined_at, r.last_seen) for n, r in sorted(self.members.items())},
            "departed": dict(sorted(self.departed.items())),
            "assignments": {
                role: {i: a.to_payload() for i, a in sorted(positions.items())}
                for role, positions in sorted(self.assignments.items())
            },
            "vacated": {key: (kind.value, at) for key, (kind, at) in sorted(self.vacated.items())},
        }

    @classmethod
    def from_payload(cls, data: Dict[str, Any]) -> GroupRegistry:
        return cls(
            group=data["group"],
            members={n: MemberRecord(j, s) for n, (j, s) in data["members"].items()},
            departed=dict(data["departed"]),
            assignments={
                role: {int(i): Assignment.from_payload(a) for i, a in positions.items()}
                for role, positions in data["assignments"].items()
            },
            vacated={
                tuple(key): (TriggerKind(kind), at) for key, (kind, at) in data["vacated"].items()
            },
        )

    def view(self) -> Tuple[Tuple[str, ...], Tuple[Tuple[str, int, str, float], ...]]:
        """Comparable summary: member ids and (role, index, holder, FS_e) per held position."""
        held = tuple(
            (role, index, a.node_id, round(a.fitness, 12))
            for role, positions in sorted(self.assignments.items())
            for index, a in sorted(positions.items())
        )
        return tuple(self.member_ids()), held

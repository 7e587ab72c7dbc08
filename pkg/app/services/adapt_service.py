"""Self-adaptation: role cardinality feedback and group criteria adjustment."""

from dataclasses import dataclass
from typing import Dict, Optional

from app.core.errors import UnknownRole, UnknownTerm, WrongCriterionType
from app.core.state import GroupRegistry, TriggerKind
from app.logger import get_logger
from app.schemas.spec import GroupSpec, ValueType
from app.services.spec_service import bind_cardinality, current_bindings

logger = get_logger(__name__)


@dataclass
class CardinalityController:
    """Hysteresis controller for the number of positions of one role."""

    role: str
    target_samples_per_window: int
    window: float
    k_min: int
    k_max: int
    current_k: int

    def __post_init__(self) -> None:
        if self.target_samples_per_window < 1:
            raise ValueError("target_samples_per_window must be >= 1")
        if not 1 <= self.k_min <= self.current_k <= self.k_max:
            raise ValueError(
                f"controller for '{self.role}' needs 1 <= k_min <= current_k <= k_max, got "
                f"{self.k_min}/{self.current_k}/{self.k_max}"
            )


@dataclass(frozen=True)
class CriteriaAdjustment:
    term: str
    new_minimum: float


def cardinality_feedback(ctrl: CardinalityController, samples_received: int) -> Optional[int]:
    """New k when samples fall outside [target, 2 * target); None inside the band."""
    if samples_received < ctrl.target_samples_per_window:
        new_k = min(ctrl.current_k + 1, ctrl.k_max)
    elif samples_received >= 2 * ctrl.target_samples_per_window:
        new_k = max(ctrl.current_k - 1, ctrl.k_min)
    else:
        return None
    if new_k == ctrl.current_k:
        return None
    logger.debug(
        f"Cardinality of '{ctrl.role}': {samples_received} samples "
        f"(target {ctrl.target_samples_per_window}) -> k {ctrl.current_k} to {new_k}"
    )
    ctrl.current_k = new_k
    return new_k


def adjust_group_criteria(spec: GroupSpec, adj: CriteriaAdjustment) -> GroupSpec:
    """Replace the minimum of a group-level float criterion."""
    for position, criterion in enumerate(spec.group_criteria):
        if criterion.term != adj.term:
            continue
        if criterion.value_type is not ValueType.FLOAT or criterion.minimum is None:
            raise WrongCriterionType(
                f"criterion '{adj.term}' is {criterion.value_type.value}, only float minimums "
                f"can be adjusted"
            )
        criteria = list(spec.group_criteria)
        criteria[position] = criterion.model_copy(update={"minimum": float(adj.new_minimum)})
        return spec.model_copy(update={"group_criteria": criteria})
    raise UnknownTerm(f"group '{spec.name}' has no group-level criterion on '{adj.term}'")


def group_minimums(spec: GroupSpec) -> Dict[str, float]:
    return {c.term: c.minimum for c in spec.group_criteria if c.minimum is not None}


def rebuild_spec(
    spec: GroupSpec, bindings: Dict[str, int], minimums: Dict[str, float]
) -> GroupSpec:
    """Apply a full set of bindings and group minimums to spec."""
    for term, minimum in sorted(minimums.items()):
        if group_minimums(spec).get(term) != minimum:
            spec = adjust_group_criteria(spec, CriteriaAdjustment(term, minimum))
    return bind_cardinality(spec, {**current_bindings(spec), **bindings})


def rebind_role(spec: GroupSpec, role: str, k: int) -> GroupSpec:
    role_spec = spec.role(role)
    if role_spec is None:
        raise UnknownRole(f"role '{role}' is not declared in group '{spec.name}'")
    if not role_spec.cardinality.is_parameter:
        raise ValueError(f"role '{role}' has a fixed cardinality")
    return bind_cardinality(spec, {**current_bindings(spec), role_spec.cardinality.parameter: k})


def position_to_drop(registry: GroupRegistry, role: str, k: int) -> int:
    """Index removed on a k decrease: the lowest-FS_e incumbent, else the last position."""
    held = sorted(
        (a.fitness, index) for index, a in registry.holders(role).items() if index < k
    )
    return held[0][1] if held else k - 1


def shrink_positions(registry: GroupRegistry, role: str, drop_index: int) -> Optional[str]:
    """Remove one position and renumber the ones above it; returns the dropped holder."""
    positions = registry.assignments.get(role, {})
    dropped = positions.pop(drop_index, None)
    registry.assignments[role] = {
        (index - 1 if index > drop_index else index): a for index, a in sorted(positions.items())
    }
    shifted = {}
    for (r, index), reason in registry.vacated.items():
        if r != role:
            shifted[(r, index)] = reason
        elif index != drop_index:
            shifted[(r, index - 1 if index > drop_index else index)] = reason
    registry.vacated = shifted
    return dropped.node_id if dropped else None


def grow_positions(registry: GroupRegistry, role: str, new_k: int, now: float) -> int:
    """Open the new last position as a vacancy."""
    index = new_k - 1
    registry.vacate(role, index, TriggerKind.VACANCY, now)
    return index

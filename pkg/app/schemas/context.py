"""Node context schemas."""

from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

PERCENT_TERMS = frozenset({"BATTERY_LEVEL", "WIFI_SIGNAL", "GPS_SIGNAL"})


class NodeContext(BaseModel):
    """Snapshot of a node's static capabilities and dynamic states."""

    model_config = ConfigDict(frozen=True)

    node_id: str = Field(..., min_length=1)
    booleans: Dict[str, bool] = Field(default_factory=dict)
    scalars: Dict[str, float] = Field(default_factory=dict)
    strings: Dict[str, str] = Field(default_factory=dict)
    boolean_since: Dict[str, float] = Field(default_factory=dict)
    now: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def check_ranges(self) -> NodeContext:
        """Percent scalars lie in [0, 100]; true booleans became true in the past."""
        for term, value in self.scalars.items():
            if term in PERCENT_TERMS and not 0.0 <= value <= 100.0:
                raise ValueError(f"{term} must be a percentage in [0, 100], got {value}")
        for term, since in self.boolean_since.items():
            if self.booleans.get(term) and since > self.now:
                raise ValueError(f"boolean_since[{term}]={since} is after now={self.now}")
        return self


class FitnessScore(BaseModel):
    """Fitness of a node for a role at a point in simulated time."""

    model_config = ConfigDict(frozen=True)

    value: float = Field(..., ge=0)
    measured_at: float = 0.0


class RoleVerdict(BaseModel):
    """Per-role evaluation of a context."""

    role: str
    rrc: bool
    fitness: Optional[float] = None


class ContextReport(BaseModel):
    """Result of evaluating a context against a group-role specification."""

    node_id: str
    group: str
    roles: List[RoleVerdict]
    group_membership: bool


class ContextEvalRequest(BaseModel):
    """Specification text plus the context snapshot to evaluate against it."""

    document: str = Field(..., min_length=1)
    context: NodeContext

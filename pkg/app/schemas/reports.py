"""Scenario report schemas."""

from __future__ import annotations

import json
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

CSV_COLUMNS = (
    "scenario",
    "mode",
    "seed",
    "node_count",
    "m1",
    "m2",
    "windows",
    "aggregator_uptime",
    "messages_by_kind",
    "elections_by_trigger",
    "runtime",
)


class ElectionSummary(BaseModel):
    """Distinct elections run during a scenario."""

    count: int = 0
    by_trigger: Dict[str, int] = Field(default_factory=dict)
    challenges: int = 0
    position_drops: int = 0


class ReviewSummary(BaseModel):
    """Peer-review statistics of the game scenario."""

    rounds: int
    updates: int
    injected_cheats: int
    detected_cheats: int
    detection_accuracy: float
    times_as_reviewer: Dict[str, int]
    load_spread: int

    @model_validator(mode="after")
    def check_detection(self) -> ReviewSummary:
        if self.detected_cheats > self.injected_cheats:
            raise ValueError("detected_cheats cannot exceed injected_cheats")
        return self

    @property
    def detection_rate(self) -> Optional[float]:
        if not self.injected_cheats:
            return None
        return self.detected_cheats / self.injected_cheats


class MembershipEvent(BaseModel):
    time: float
    node: str
    event: str


class MetricsReport(BaseModel):
    """Outcome of one scenario run for one (config, seed, mode)."""

    scenario: str
    mode: str
    seed: int
    node_count: int
    m1_requests: int = Field(0, ge=0)
    m2_failed: int = Field(0, ge=0)
    windows: int = 0
    aggregator_uptime: float = Field(0.0, ge=0, le=1)
    simulated_runtime: float = 0.0
    message_counters: Dict[str, Dict[str, int]] = Field(default_factory=dict)
    messages_by_kind: Dict[str, int] = Field(default_factory=dict)
    elections: ElectionSummary = Field(default_factory=ElectionSummary)
    review: Optional[ReviewSummary] = None
    membership: List[MembershipEvent] = Field(default_factory=list)
    registries_converged: bool = True
    assignments: Dict[str, Dict[int, str]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_m2(self) -> MetricsReport:
        if self.m2_failed > self.m1_requests:
            raise ValueError("m2_failed cannot exceed m1_requests")
        return self

    @property
    def m2_rate(self) -> float:
        return self.m2_failed / self.m1_requests if self.m1_requests else 0.0

    def csv_row(self) -> Dict[str, Any]:
        """Flat row with the nested tallies JSON-encoded, keys sorted."""
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "seed": self.seed,
            "node_count": self.node_count,
            "m1": self.m1_requests,
            "m2": self.m2_failed,
            "windows": self.windows,
            "aggregator_uptime": self.aggregator_uptime,
            "messages_by_kind": json.dumps(self.messages_by_kind, sort_keys=True),
            "elections_by_trigger": json.dumps(self.elections.by_trigger, sort_keys=True),
            "runtime": self.simulated_runtime,
        }

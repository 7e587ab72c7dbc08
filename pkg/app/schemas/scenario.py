"""Scenario configuration schemas."""

from __future__ import annotations

from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings
from app.core.events import Mode


class InternetType(str, Enum):
    CELLULAR = "Cellular"
    WIFI = "WiFi"
    NONE = "None"


class RunMode(str, Enum):
    CLIENT_SERVER = "ClientServer"
    SOIS = "SOIS"


class ReachabilityWindow(BaseModel):
    """Backend reachability probability over [start, end)."""

    model_config = ConfigDict(extra="forbid")

    start: float = Field(0.0, ge=0)
    end: Optional[float] = None
    probability: float = Field(..., ge=0, le=1)


class PartitionWindow(BaseModel):
    """Disjoint node sets that cannot reach each other during [start, end)."""

    model_config = ConfigDict(extra="forbid")

    start: float = Field(..., ge=0)
    end: float
    groups: List[List[str]] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_disjoint(self) -> PartitionWindow:
        if self.end <= self.start:
            raise ValueError("partition end must be after start")
        seen = set()
        for group in self.groups:
            overlap = seen.intersection(group)
            if overlap:
                raise ValueError(f"partitions overlap on {sorted(overlap)}")
            seen.update(group)
        return self


class NetConfig(BaseModel):
    """Simulated network parameters."""

    model_config = ConfigDict(extra="forbid")

    mode: Mode = Mode.UNICAST
    d2d_latency: float = Field(default_factory=lambda: settings.D2D_LATENCY, gt=0)
    backend_latency: float = Field(default_factory=lambda: settings.BACKEND_LATENCY, gt=0)
    backend_reachability: Dict[str, Union[float, List[ReachabilityWindow]]] = Field(
        default_factory=dict
    )
    default_reachability: float = Field(1.0, ge=0, le=1)
    partitions: List[PartitionWindow] = Field(default_factory=list)

    @field_validator("backend_reachability")
    @classmethod
    def check_probabilities(cls, v):
        for node, value in v.items():
            if isinstance(value, float) and not 0.0 <= value <= 1.0:
                raise ValueError(f"reachability of {node} must be in [0, 1]")
        return v


class ProtocolConfig(BaseModel):
    """Timing and threshold parameters of the self-organization protocols."""

    model_config = ConfigDict(extra="forbid")

    grouping_period: float = Field(default_factory=lambda: settings.GROUPING_PERIOD, gt=0)
    liveness_ticks: int = Field(default_factory=lambda: settings.LIVENESS_TICKS, ge=1)
    bid_window: float = Field(default_factory=lambda: settings.BID_WINDOW, gt=0)
    delta: float = Field(default_factory=lambda: settings.DELTA, gt=1)
    term_maxima: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_window(self) -> ProtocolConfig:
        if self.bid_window >= self.grouping_period:
            raise ValueError("bid_window must be shorter than grouping_period")
        return self

    @property
    def liveness_timeout(self) -> float:
        return self.liveness_ticks * self.grouping_period


class ControllerConfig(BaseModel):
    """Cardinality feedback settings for one sensing role."""

    model_config = ConfigDict(extra="forbid")

    target_samples_per_window: int = Field(..., ge=1)
    k_min: int = Field(1, ge=1)
    k_max: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_bounds(self) -> ControllerConfig:
        if self.k_min > self.k_max:
            raise ValueError("k_min must not exceed k_max")
        return self


class CriteriaAdjustmentConfig(BaseModel):
    """Timed change of a group-level minimum, issued by the aggregator."""

    model_config = ConfigDict(extra="forbid")

    at: float = Field(..., ge=0)
    term: str
    new_minimum: float


class AdaptationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    roles: Dict[str, ControllerConfig] = Field(default_factory=dict)
    criteria_adjustments: List[CriteriaAdjustmentConfig] = Field(default_factory=list)


class ChurnEvent(BaseModel):
    model_config = ConfigDict(extra="forbid")

    at: float = Field(..., ge=0)
    node: str
    kind: Literal["join", "crash", "shutdown"]


class ContextChangeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    at: float = Field(..., ge=0)
    node: str
    booleans: Dict[str, bool] = Field(default_factory=dict)
    scalars: Dict[str, float] = Field(default_factory=dict)
    strings: Dict[str, str] = Field(default_factory=dict)


class ReviewConfig(BaseModel):
    """Peer-review game settings."""

    model_config = ConfigDict(extra="forbid")

    rounds: int = Field(100, ge=0)
    cheat_rate: float = Field(0.1, ge=0, le=1)
    accuracy: float = Field(0.9, ge=0, le=1)
    round_period: float = Field(1.0, gt=0)
    allocate_roles: bool = True


class RiderTrace(BaseModel):
    """Context trace of one passenger device for bus-ride detection."""

    model_config = ConfigDict(extra="forbid")

    wifi_signal: float = Field(..., ge=0, le=100)
    bssid: str = ""
    moving_from: Optional[float] = Field(None, ge=0)
    moving_until: Optional[float] = None
    battery: float = Field(80.0, ge=0, le=100)
    accelerometer: bool = True


class BusRideConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    riders: List[RiderTrace] = Field(default_factory=list)


class ScenarioConfig(BaseModel):
    """A full scenario run description, loaded from a JSON config file."""

    model_config = ConfigDict(extra="forbid")

    scenario: Literal["bus-monitoring", "bus-ride", "review"] = "bus-monitoring"
    spec: Optional[str] = None
    mode: RunMode = RunMode.SOIS
    seed: int = 0
    node_count: int = Field(4, ge=2, le=10)
    battery_levels: Optional[List[float]] = None
    internet_type: Optional[List[InternetType]] = None
    gps_signal: Optional[List[float]] = None
    accelerometer: Optional[List[bool]] = None
    gps: Optional[List[bool]] = None
    warmup: float = Field(5.0, ge=0)
    duration: float = Field(10.0, gt=0)
    sensing_period: float = Field(1.0, gt=0)
    net: NetConfig = Field(default_factory=NetConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    k_bindings: Dict[str, int] = Field(default_factory=lambda: {"k1": 2, "k2": 2})
    battery_drift: float = Field(0.0, ge=0)
    churn: List[ChurnEvent] = Field(default_factory=list)
    context_changes: List[ContextChangeConfig] = Field(default_factory=list)
    adaptation: Optional[AdaptationConfig] = None
    review: ReviewConfig = Field(default_factory=ReviewConfig)
    bus_ride: BusRideConfig = Field(default_factory=BusRideConfig)

    @field_validator("battery_levels")
    @classmethod
    def check_batteries(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and any(not 10.0 <= b <= 90.0 for b in v):
            raise ValueError("battery levels must lie in [10, 90] percent")
        return v

    @field_validator("gps_signal")
    @classmethod
    def check_gps(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and any(not 0.0 <= s <= 100.0 for s in v):
            raise ValueError("gps signal must lie in [0, 100] percent")
        return v

    @field_validator("k_bindings")
    @classmethod
    def check_bindings(cls, v: Dict[str, int]) -> Dict[str, int]:
        for name, k in v.items():
            if k < 1:
                raise ValueError(f"binding {name} must be >= 1")
        return v

    @model_validator(mode="after")
    def check_lengths(self) -> ScenarioConfig:
        for name in ("battery_levels", "internet_type", "gps_signal", "accelerometer", "gps"):
            values = getattr(self, name)
            if values is not None and len(values) != self.node_count:
                raise ValueError(
                    f"{name} has {len(values)} entries, node_count is {self.node_count}"
                )
        return self

    @property
    def windows(self) -> int:
        return int(round(self.duration / self.sensing_period))

    @property
    def node_ids(self) -> List[str]:
        return [node_id(i) for i in range(self.node_count)]


def node_id(index: int) -> str:
    return f"n{index:02d}"


class ScenarioRunRequest(BaseModel):
    """Scenario config tree, with optional seed and dotted overrides."""

    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    overrides: List[str] = Field(default_factory=list)

"""Scenario harnesses producing MetricsReport."""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from app.core.metrics import SCENARIO_RUNS
from app.core.trace import EventTrace
from app.logger import get_logger
from app.scenarios.bus_monitoring import run_bus_monitoring
from app.scenarios.bus_ride import run_bus_ride_detection
from app.scenarios.review_game import run_review_scenario
from app.schemas.reports import MetricsReport
from app.schemas.scenario import ScenarioConfig
from app.schemas.spec import GroupSpec
from app.services.spec_service import SPECS_DIR, bundled_spec, load_spec

logger = get_logger(__name__)

DEFAULT_SPECS = {
    "bus-monitoring": "bus-monitoring",
    "bus-ride": "bus-ride",
    "review": "game-session",
}

RUNNERS = {
    "bus-monitoring": run_bus_monitoring,
    "bus-ride": run_bus_ride_detection,
    "review": run_review_scenario,
}


@dataclass
class ScenarioRun:
    report: MetricsReport
    trace: EventTrace


def resolve_spec(cfg: ScenarioConfig) -> GroupSpec:
    """The config's spec file, a bundled spec by name, or the scenario's default."""
    if cfg.spec is None:
        return bundled_spec(DEFAULT_SPECS[cfg.scenario])
    if not Path(cfg.spec).exists() and (SPECS_DIR / f"{cfg.spec}.xml").exists():
        return bundled_spec(cfg.spec)
    return load_spec(cfg.spec)


def run_scenario(
    cfg: ScenarioConfig, spec: Optional[GroupSpec] = None, trace: bool = True
) -> ScenarioRun:
    spec = spec or resolve_spec(cfg)
    logger.info(f"Running {cfg.scenario} ({cfg.mode.value}) seed={cfg.seed}")
    report, sim = RUNNERS[cfg.scenario](cfg, spec, trace)
    SCENARIO_RUNS.labels(scenario=cfg.scenario, mode=cfg.mode.value).inc()
    return ScenarioRun(report=report, trace=sim.trace)


__all__ = ["ScenarioRun", "resolve_spec", "run_scenario"]

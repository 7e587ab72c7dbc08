"""Experiment grid: one scenario per (axis value, seed, mode), collected with pandas."""

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import pandas as pd

from app.config import settings
from app.logger import get_logger
from app.scenarios import run_scenario
from app.schemas.reports import CSV_COLUMNS
from app.schemas.scenario import InternetType, RunMode, ScenarioConfig

logger = get_logger(__name__)

AXES = ("node_count", "battery", "internet_type", "gps", "delta")
SWEEP_COLUMNS = ("axis", "value", *CSV_COLUMNS)


def configure(
    template: ScenarioConfig, axis: str, value: Any, seed: int, mode: RunMode
) -> ScenarioConfig:
    """Template with one axis set to value, for one seed and mode."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis '{axis}', expected one of {', '.join(AXES)}")
    tree = template.model_dump(mode="json")
    tree.update(seed=seed, mode=mode.value)
    n = tree["node_count"]
    if axis == "node_count":
        n = int(value)
        tree["node_count"] = n
        for name in ("battery_levels", "internet_type", "gps_signal", "accelerometer", "gps"):
            if tree[name] is not None and len(tree[name]) != n:
                tree[name] = None
    elif axis == "battery":
        tree["battery_levels"] = [float(value)] * n
    elif axis == "internet_type":
        tree["internet_type"] = [InternetType(value).value] * n
    elif axis == "gps":
        tree["gps_signal"] = [float(value)] * n
    elif axis == "delta":
        tree["protocol"]["delta"] = float(value)
    return ScenarioConfig.model_validate(tree)


def _run_cell(cfg: ScenarioConfig) -> Dict[str, Any]:
    return run_scenario(cfg, trace=False).report.csv_row()


def sweep(
    template: ScenarioConfig,
    axis: str,
    values: Sequence[Any],
    seeds: Iterable[int] = range(10),
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """Run both modes per value per seed; rows ordered by (value, seed, mode)."""
    cells: List[tuple] = [
        (value, configure(template, axis, value, seed, mode))
        for value in values
        for seed in seeds
        for mode in (RunMode.CLIENT_SERVER, RunMode.SOIS)
    ]
    if not cells:
        return pd.DataFrame(columns=list(SWEEP_COLUMNS))

    workers = workers or settings.SWEEP_WORKERS
    configs = [cfg for _, cfg in cells]
    logger.info(
        f"Sweeping {axis} over {len(values)} value(s): {len(cells)} runs, {workers} worker(s)"
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, configs))
    else:
        rows = [_run_cell(cfg) for cfg in configs]

    frame = pd.DataFrame(
        [{"axis": axis, "value": value, **row} for (value, _), row in zip(cells, rows)]
    )
    return frame[list(SWEEP_COLUMNS)]


def aggregate_sweep(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation of m1, m2 and uptime per (value, mode)."""
    if frame.empty:
        return pd.DataFrame(
            columns=["value", "mode", "m1_mean", "m1_std", "m2_mean", "m2_std", "uptime_mean"]
        )
    grouped = frame.groupby(["value", "mode"], sort=True)
    summary = grouped.agg(
        m1_mean=("m1", "mean"),
        m1_std=("m1", "std"),
        m2_mean=("m2", "mean"),
        m2_std=("m2", "std"),
        uptime_mean=("aggregator_uptime", "mean"),
    )
    return summary.reset_index()


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path

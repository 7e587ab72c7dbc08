"""Scenario router."""

import copy

from fastapi import APIRouter, HTTPException, status

from app.core.errors import ConfigError, SoisError
from app.logger import get_logger
from app.scenarios import run_scenario
from app.scenarios.loader import apply_overrides, validate_config
from app.schemas.reports import MetricsReport
from app.schemas.scenario import ScenarioRunRequest

router = APIRouter()
logger = get_logger(__name__)


@router.post("/run", response_model=MetricsReport)
def run(request: ScenarioRunRequest):
    """Run one scenario synchronously and return its metrics."""
    try:
        tree = apply_overrides(copy.deepcopy(request.config), request.overrides)
        if request.seed is not None:
            tree["seed"] = request.seed
        cfg = validate_config(tree)
    except ConfigError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail={"path": e.path, "message": e.message},
        )

    try:
        return run_scenario(cfg, trace=False).report
    except SoisError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except FileNotFoundError as e:
        logger.warning(f"Scenario spec not found: {e}")
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(e))

"""Peer review of game-state updates: reviewer assignment and cheat detection."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable

import numpy as np

from app.core.errors import TooFewMembers
from app.core.rng import round_rng
from app.logger import get_logger

logger = get_logger(__name__)


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass
class ReviewRound:
    round: int
    assignment: Dict[str, str]
    rng_seed: int


@dataclass
class ReviewStats:
    detection_accuracy: float
    times_as_reviewer: Dict[str, int] = field(default_factory=dict)
    injected_cheats: int = 0
    detected_cheats: int = 0
    updates: int = 0

    @property
    def load_spread(self) -> int:
        loads = list(self.times_as_reviewer.values())
        return max(loads) - min(loads) if loads else 0


def assign_reviewers(members: Iterable[str], round_index: int, seed: int) -> ReviewRound:
    """Uniform random derangement of members, identical on every node for (seed, round)."""
    ordered = sorted(set(members))
    if len(ordered) < 2:
        raise TooFewMembers(f"peer review needs at least 2 members, got {len(ordered)}")

    rng = round_rng(seed, round_index)
    identity = np.arange(len(ordered))
    # Rejection sampling: about e draws on average, each one uniform.
    while True:
        perm = rng.permutation(len(ordered))
        if not np.any(perm == identity):
            break
    assignment = {ordered[i]: ordered[int(perm[i])] for i in range(len(ordered))}
    return ReviewRound(round=round_index, assignment=assignment, rng_seed=seed)


def record_round(stats: ReviewStats, review_round: ReviewRound) -> None:
    for reviewer in review_round.assignment.values():
        stats.times_as_reviewer[reviewer] = stats.times_as_reviewer.get(reviewer, 0) + 1


def review_update(
    reviewer: str,
    valid: bool,
    stats: ReviewStats,
    rng: np.random.Generator,
) -> Verdict:
    """Valid updates are accepted; invalid ones are caught with the configured accuracy."""
    stats.updates += 1
    if valid:
        return Verdict.ACCEPT
    stats.injected_cheats += 1
    if rng.random() < stats.detection_accuracy:
        stats.detected_cheats += 1
        logger.debug(f"{reviewer} rejected an invalid update")
        return Verdict.REJECT
    return Verdict.ACCEPT

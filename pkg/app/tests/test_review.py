"""Tests for reviewer assignment and the peer-review game."""

import numpy as np
import pytest

from app.core.errors import TooFewMembers
from app.scenarios.review_game import run_review_scenario
from app.schemas.scenario import ScenarioConfig
from app.services.review_service import (
    ReviewStats,
    Verdict,
    assign_reviewers,
    record_round,
    review_update,
)
from app.services.spec_service import bundled_spec

MEMBERS = ["n00", "n01", "n02", "n03", "n04"]


def test_assignment_is_a_derangement():
    """Test that nobody reviews themselves and every member reviews exactly one other."""
    for round_index in range(200):
        assignment = assign_reviewers(MEMBERS, round_index, seed=3).assignment
        assert sorted(assignment) == MEMBERS
        assert sorted(assignment.values()) == MEMBERS
        assert all(author != reviewer for author, reviewer in assignment.items())


def test_assignment_is_deterministic():
    """Test that every node computes the same assignment from the same registry."""
    first = assign_reviewers(MEMBERS, 7, seed=1)
    second = assign_reviewers(list(reversed(MEMBERS)), 7, seed=1)
    assert first.assignment == second.assignment
    assert first.round == 7


def test_assignment_varies_between_rounds():
    """Test that rounds do not repeat one fixed assignment."""
    seen = {
        tuple(sorted(assign_reviewers(MEMBERS, r, seed=0).assignment.items())) for r in range(50)
    }
    assert len(seen) > 1


def test_two_members_swap():
    """Test the only derangement of two members."""
    assert assign_reviewers(["b", "a"], 0, seed=0).assignment == {"a": "b", "b": "a"}


def test_too_few_members():
    """Test assignment with fewer than two members."""
    with pytest.raises(TooFewMembers):
        assign_reviewers(["n00"], 0, seed=0)
    with pytest.raises(TooFewMembers):
        assign_reviewers(["n00", "n00"], 0, seed=0)


def test_reviewer_load_is_uniform():
    """Test that each member reviews once per round."""
    stats = ReviewStats(detection_accuracy=1.0)
    for r in range(100):
        record_round(stats, assign_reviewers(MEMBERS, r, seed=2))
    assert stats.times_as_reviewer == {member: 100 for member in MEMBERS}
    assert stats.load_spread == 0


def test_review_update():
    """Test verdicts for valid and invalid updates."""
    rng = np.random.default_rng(0)
    perfect = ReviewStats(detection_accuracy=1.0)
    assert review_update("n01", True, perfect, rng) is Verdict.ACCEPT
    assert review_update("n01", False, perfect, rng) is Verdict.REJECT
    assert (perfect.updates, perfect.injected_cheats, perfect.detected_cheats) == (2, 1, 1)

    blind = ReviewStats(detection_accuracy=0.0)
    assert review_update("n01", False, blind, rng) is Verdict.ACCEPT
    assert blind.detected_cheats == 0


def test_detection_rate_tracks_accuracy():
    """Test the empirical detection rate over many cheats."""
    rng = np.random.default_rng(42)
    stats = ReviewStats(detection_accuracy=0.9)
    for _ in range(5000):
        review_update("n01", False, stats, rng)
    assert stats.detected_cheats / stats.injected_cheats == pytest.approx(0.9, abs=0.02)


def review_config(**overrides) -> ScenarioConfig:
    tree = {
        "scenario": "review",
        "node_count": 5,
        "warmup": 5.0,
        "review": {"rounds": 100, "cheat_rate": 0.1, "accuracy": 1.0},
    }
    tree.update(overrides)
    return ScenarioConfig.model_validate(tree)


def test_review_game_is_fair_and_accurate():
    """Test a full game: balanced reviewer load and every cheat caught."""
    report, _ = run_review_scenario(review_config(), bundled_spec("game-session"), trace=False)
    review = report.review
    assert review.rounds == 100
    assert review.updates == 500
    assert review.times_as_reviewer == {f"n{i:02d}": 100 for i in range(5)}
    assert review.load_spread == 0
    assert review.injected_cheats > 0
    assert review.detected_cheats == review.injected_cheats
    assert report.messages_by_kind["ReviewRequest"] == 500
    assert report.messages_by_kind["ReviewVerdict"] == review.detected_cheats
    assert report.registries_converged


def test_review_game_needs_two_nodes():
    """Test the scenario's minimum population."""
    cfg = review_config().model_copy(update={"node_count": 1})
    with pytest.raises(TooFewMembers):
        run_review_scenario(cfg, bundled_spec("game-session"), trace=False)


@pytest.mark.parametrize("node_count", range(2, 11))
def test_every_round_is_a_derangement(node_count):
    """Test the requests actually sent in each round for every group size."""
    cfg = review_config(node_count=node_count)
    report, sim = run_review_scenario(cfg, bundled_spec("game-session"))
    members = {f"n{i:02d}" for i in range(node_count)}

    rounds = {}
    for time, _, _, kind, sender, to, _ in sim.trace.events("send"):
        if kind == "ReviewRequest":
            rounds.setdefault(time, []).append((sender, to))
    assert len(rounds) == 100
    for pairs in rounds.values():
        assert {sender for sender, _ in pairs} == members
        assert sorted(to for _, to in pairs) == sorted(members)
        assert all(sender != to for sender, to in pairs)

    review = report.review
    assert review.load_spread <= 1
    assert review.detected_cheats == review.injected_cheats


def test_detection_rate_over_many_games():
    """Test the detection rate of every group size together against the configured accuracy."""
    injected = detected = 0
    for node_count in range(2, 11):
        cfg = review_config(
            node_count=node_count,
            review={"rounds": 300, "cheat_rate": 1.0, "accuracy": 0.9},
        )
        report, _ = run_review_scenario(cfg, bundled_spec("game-session"), trace=False)
        injected += report.review.injected_cheats
        detected += report.review.detected_cheats
    assert injected >= 10000
    assert detected / injected == pytest.approx(0.9, abs=0.01)

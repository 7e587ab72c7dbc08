"""Tests for context evaluation."""

import numpy as np
import pytest
from pydantic import ValidationError

from app.schemas.context import NodeContext
from app.schemas.spec import Criterion, ValueType
from app.services.context_service import (
    ContextStore,
    eval_criterion,
    evaluate_context,
    fitness,
    group_membership,
    match_pattern,
    rrc,
)
from app.services.spec_service import bundled_spec, effective_criteria, parse_spec

GPS = Criterion(term="GPS", value_type=ValueType.BOOLEAN, required_value=True)
BATTERY = Criterion(term="BATTERY_LEVEL", value_type=ValueType.FLOAT, minimum=30.0)
BSSID = Criterion(term="BSSID", value_type=ValueType.STRING, pattern="COMPANY_NAME")
MOVING = Criterion(
    term="MOOVING", value_type=ValueType.BOOLEAN, required_value=True, after_seconds=300
)


def make_ctx(**kwargs) -> NodeContext:
    return NodeContext(node_id="n00", **kwargs)


def test_boolean_criterion():
    """Test boolean criteria, including a missing fact."""
    assert eval_criterion(make_ctx(booleans={"GPS": True}), GPS)
    assert not eval_criterion(make_ctx(booleans={"GPS": False}), GPS)
    assert not eval_criterion(make_ctx(), GPS)


def test_float_criterion_is_inclusive():
    """Test that a float minimum accepts the boundary value."""
    assert eval_criterion(make_ctx(scalars={"BATTERY_LEVEL": 30.0}), BATTERY)
    assert not eval_criterion(make_ctx(scalars={"BATTERY_LEVEL": 29.9}), BATTERY)
    assert not eval_criterion(make_ctx(), BATTERY)


def test_string_pattern_default_substring():
    """Test case-insensitive substring matching of string facts."""
    assert eval_criterion(make_ctx(strings={"BSSID": "company_name-bus-42"}), BSSID)
    assert not eval_criterion(make_ctx(strings={"BSSID": "corner-cafe"}), BSSID)
    assert not eval_criterion(make_ctx(), BSSID)


def test_pattern_matchers():
    """Test the glob and regex matchers."""
    assert match_pattern("bus-*", "BUS-42", matcher="glob")
    assert not match_pattern("bus-*", "city-bus-42", matcher="glob")
    assert match_pattern(r"^bus-\d+$", "bus-42", matcher="regex")
    assert not match_pattern("[", "bus-42", matcher="regex")
    with pytest.raises(ValueError):
        match_pattern("bus", "bus", matcher="exact")


def test_temporal_criterion():
    """Test that 'after' needs the fact to hold for the full duration."""
    since = {"MOOVING": 100.0}
    assert not eval_criterion(
        make_ctx(booleans={"MOOVING": True}, boolean_since=since, now=399.0), MOVING
    )
    assert eval_criterion(
        make_ctx(booleans={"MOOVING": True}, boolean_since=since, now=400.0), MOVING
    )
    assert not eval_criterion(make_ctx(booleans={"MOOVING": True}, now=400.0), MOVING)
    assert not eval_criterion(make_ctx(booleans={"MOOVING": False}, now=400.0), MOVING)


def test_rrc_is_a_conjunction():
    """Test that every effective criterion must hold."""
    ctx = make_ctx(booleans={"GPS": True}, scalars={"BATTERY_LEVEL": 40.0})
    assert rrc(ctx, [GPS, BATTERY])
    assert not rrc(ctx, [GPS, BATTERY, BSSID])
    assert rrc(ctx, [])


def test_fitness_is_product_of_normalized_terms():
    """Test fitness over two comparative terms."""
    spec = parse_spec(
        '<group name="g"><criteria type="float" term="BATTERY_LEVEL" minimum="10"/>'
        '<role name="r" cardinality="1">'
        '<criteria type="float" term="WIFI_SIGNAL" minimum="10"/></role></group>'
    )
    effective = effective_criteria(spec, "r")
    ctx = make_ctx(scalars={"BATTERY_LEVEL": 50.0, "WIFI_SIGNAL": 80.0}, now=3.0)
    score = fitness(ctx, effective)
    assert score.value == pytest.approx(0.4)
    assert score.measured_at == 3.0
    assert fitness(ctx, effective, {"WIFI_SIGNAL": 160.0}).value == pytest.approx(0.25)


def test_fitness_without_comparative_terms():
    """Test that a role with only boolean criteria gives every node fitness 1."""
    assert fitness(make_ctx(booleans={"GPS": True}), [GPS]).value == 1.0


def test_group_membership(bus_spec):
    """Test that a node belongs to the group when at least one role accepts it."""
    accel_only = make_ctx(booleans={"ACCELEROMETER": True}, scalars={"BATTERY_LEVEL": 20.0})
    assert group_membership(accel_only, bus_spec)

    low_battery = make_ctx(
        booleans={"ACCELEROMETER": True, "GPS": True, "INTERNET": True},
        scalars={"BATTERY_LEVEL": 10.0},
    )
    assert not group_membership(low_battery, bus_spec)


def test_evaluate_context(bus_spec):
    """Test the per-role report."""
    ctx = make_ctx(
        booleans={"GPS": True, "ACCELEROMETER": False, "INTERNET": True},
        scalars={"BATTERY_LEVEL": 25.0},
    )
    report = evaluate_context(bus_spec, ctx)
    verdicts = {v.role: v for v in report.roles}
    assert report.group == "bus-monitoring"
    assert report.group_membership
    assert not verdicts["geolocator"].rrc
    assert verdicts["geolocator"].fitness is None
    assert verdicts["aggregator"].rrc
    assert verdicts["aggregator"].fitness == pytest.approx(0.25)


def test_music_streaming_streamer():
    """Test the music-streaming role against a capable phone."""
    spec = bundled_spec("music-streaming")
    ctx = make_ctx(
        booleans={"INTERNET": True, "BLUETOOTH": True}, scalars={"BATTERY_LEVEL": 64.0}
    )
    report = evaluate_context(spec, ctx)
    assert report.roles[0].rrc
    assert report.roles[0].fitness == pytest.approx(0.64)


def test_context_validation():
    """Test percentage ranges and boolean_since consistency."""
    with pytest.raises(ValidationError):
        make_ctx(scalars={"BATTERY_LEVEL": 120.0})
    with pytest.raises(ValidationError):
        make_ctx(booleans={"MOOVING": True}, boolean_since={"MOOVING": 10.0}, now=5.0)


def test_context_store_tracks_boolean_since():
    """Test that only false-to-true flips restart the since clock."""
    store = ContextStore()
    store.register("n00", booleans={"MOOVING": False}, scalars={"BATTERY_LEVEL": 50.0})
    store.apply("n00", booleans={"MOOVING": True}, now=200.0)
    store.apply("n00", booleans={"MOOVING": True}, now=250.0)
    snap = store.snapshot("n00", 500.0)
    assert snap.boolean_since == {"MOOVING": 200.0}
    assert snap.now == 500.0
    assert eval_criterion(snap, MOVING)

    store.apply("n00", booleans={"MOOVING": False}, now=510.0)
    assert store.snapshot("n00", 520.0).boolean_since == {}
    assert store.scalar("n00", "BATTERY_LEVEL") == 50.0
    assert "n00" in store
    assert "n01" not in store


EXTRA_CRITERIA = [
    Criterion(term="WIFI", value_type=ValueType.BOOLEAN, required_value=True),
    Criterion(term="WIFI", value_type=ValueType.BOOLEAN, required_value=False),
    Criterion(term="SIGNAL", value_type=ValueType.FLOAT, minimum=40.0),
    Criterion(term="NETWORK", value_type=ValueType.STRING, pattern="corp"),
]


def random_ctx(rng) -> NodeContext:
    booleans = {
        term: bool(rng.random() < 0.5)
        for term in ("GPS", "ACCELEROMETER", "INTERNET", "WIFI")
        if rng.random() < 0.8
    }
    scalars = {"BATTERY_LEVEL": float(rng.uniform(0, 100)), "SIGNAL": float(rng.uniform(0, 100))}
    strings = {"NETWORK": str(rng.choice(["corp-5g", "home", "CORP"]))}
    return make_ctx(booleans=booleans, scalars=scalars, strings=strings)


def test_adding_a_criterion_never_admits_more(bus_spec):
    """Test that rrc and group membership only shrink when a criterion is added."""
    rng = np.random.default_rng(8)
    for _ in range(2000):
        ctx = random_ctx(rng)
        extra = EXTRA_CRITERIA[rng.integers(len(EXTRA_CRITERIA))]
        role = bus_spec.roles[rng.integers(len(bus_spec.roles))].name
        effective = effective_criteria(bus_spec, role)
        if rrc(ctx, [*effective, extra]):
            assert rrc(ctx, effective)

        criteria = [*bus_spec.group_criteria, extra]
        stricter = bus_spec.model_copy(update={"group_criteria": criteria})
        if group_membership(ctx, stricter):
            assert group_membership(ctx, bus_spec)


def test_fitness_argmax_is_scale_invariant():
    """Test that scaling every comparative value by one factor keeps the fittest node."""
    spec = parse_spec(
        '<group name="g"><criteria type="float" term="BATTERY_LEVEL" minimum="0"/>'
        '<role name="r" cardinality="1">'
        '<criteria type="float" term="SIGNAL" minimum="0"/></role></group>'
    )
    effective = effective_criteria(spec, "r")
    rng = np.random.default_rng(12)
    for _ in range(500):
        factor = float(rng.uniform(0.2, 5.0))
        # Scaled values stay below the term maximum so no score is capped.
        values = rng.uniform(0, 100 / max(factor, 1.0), size=(int(rng.integers(2, 10)), 2))

        def best(scale):
            scores = [
                fitness(
                    make_ctx(scalars={"BATTERY_LEVEL": b * scale, "SIGNAL": s * scale}),
                    effective,
                ).value
                for b, s in values
            ]
            return int(np.argmax(scores))

        assert best(1.0) == best(factor)

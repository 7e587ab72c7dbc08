"""Tests for decentralized role allocation."""

import numpy as np
import pytest

from app.core.errors import EmptyBidSet, NoEligibleNodes
from app.core.events import BROADCAST_ALL, Message, MessageKind, Mode
from app.core.state import (
    Assignment,
    ElectionState,
    ElectionTrigger,
    GroupRegistry,
    MemberRecord,
    TriggerKind,
)
from app.schemas.context import NodeContext
from app.services import election_service
from app.services.election_service import ChallengeOutcome, ElectionConfig
from app.services.spec_service import bind_cardinality, parse_spec

K_GROUP = """
<group name="crew">
  <criteria type="float" term="BATTERY_LEVEL" minimum="15"/>
  <role name="worker" cardinality="k"/>
</group>
"""

RELAY_GROUP = """
<group name="relays">
  <criteria type="boolean" term="BLUETOOTH" value="TRUE"/>
  <role name="relay" cardinality="1">
    <criteria type="boolean" term="INTERNET" value="TRUE"/>
  </role>
  <role name="spare" cardinality="1"/>
</group>
"""

CFG = ElectionConfig(delta=1.2, bid_window=0.5)


def crew_spec(k: int):
    return bind_cardinality(parse_spec(K_GROUP), {"k": k})


def battery_ctx(node: str, level: float, now: float = 5.0) -> NodeContext:
    return NodeContext(node_id=node, scalars={"BATTERY_LEVEL": level}, now=now)


def crew(levels, joined_at: float = 0.0):
    registry = GroupRegistry(group="crew")
    contexts = {}
    for i, level in enumerate(levels):
        node = f"n{i:02d}"
        registry.members[node] = MemberRecord(joined_at=joined_at, last_seen=joined_at)
        contexts[node] = battery_ctx(node, float(level))
    return registry, contexts


def vacancy(index: int = 0, at: float = 5.0) -> ElectionTrigger:
    return ElectionTrigger(
        group="crew", role="worker", kind=TriggerKind.VACANCY, position_index=index, opened_at=at
    )


def test_trigger_validation():
    """Test that only challenge triggers name a challenger."""
    with pytest.raises(ValueError):
        ElectionTrigger("crew", "worker", TriggerKind.CHALLENGE, 0, 1.0)
    with pytest.raises(ValueError):
        ElectionTrigger("crew", "worker", TriggerKind.VACANCY, 0, 1.0, challenger="n01")
    with pytest.raises(ValueError):
        ElectionConfig(delta=1.0)


def test_eligible_nodes():
    """Test exclusion of unsettled members, holders and RRC failures."""
    spec = crew_spec(2)
    registry, contexts = crew([50, 10, 60, 70])
    registry.members["n03"].joined_at = 4.5
    registry.apply_assignment("worker", 0, Assignment("n02", 0.6, 1.0, 1.0))

    eligible = election_service.eligible_nodes(
        "worker", registry, spec, contexts, at=5.0, settle_period=1.0
    )
    assert eligible == ["n00"]


def test_open_election_bids():
    """Test that every eligible node bids to every other eligible node."""
    spec = crew_spec(1)
    registry, contexts = crew([50, 80, 30])
    state, bids = election_service.open_election(vacancy(), registry, spec, contexts, CFG)

    assert state.eligible == ("n00", "n01", "n02")
    assert state.deadline == 5.5
    assert [m.sender for m in bids] == ["n00", "n01", "n02"]
    assert bids[0].to == ("n01", "n02")
    assert bids[0].payload["fitness"] == pytest.approx(0.5)
    assert state.bids == pytest.approx({"n00": 0.5, "n01": 0.8, "n02": 0.3})

    _, own = election_service.open_election(vacancy(), registry, spec, contexts, CFG, bidder="n02")
    assert [m.sender for m in own] == ["n02"]


def test_open_election_errors():
    """Test elections with no eligible node and challenge triggers."""
    spec = crew_spec(1)
    registry, contexts = crew([5, 10])
    with pytest.raises(NoEligibleNodes):
        election_service.open_election(vacancy(), registry, spec, contexts, CFG)

    challenge = ElectionTrigger("crew", "worker", TriggerKind.CHALLENGE, 0, 5.0, challenger="n01")
    with pytest.raises(ValueError):
        election_service.open_election(challenge, registry, spec, contexts, CFG)


def test_close_election_ties_go_to_smallest_id():
    """Test highest bid wins and ties break on node id."""
    state = ElectionState(trigger=vacancy(), deadline=5.5, eligible=("n00", "n01", "n02"))
    state.bids = {"n02": 0.7, "n01": 0.7, "n00": 0.4}
    assert election_service.close_election(state) == ("n01", 0.7)
    assert state.elected == ("n01", 0.7)

    with pytest.raises(EmptyBidSet):
        election_service.close_election(ElectionState(vacancy(), 5.5, ("n00",)))


def test_late_bids_are_ignored():
    """Test that bids after the deadline or for another election are dropped."""
    state = ElectionState(trigger=vacancy(), deadline=5.5, eligible=("n00", "n01"))
    bid = election_service.bid_message(vacancy(), "n01", 0.9, ("n00",))
    assert election_service.record_bid(state, bid, 5.01)
    assert not election_service.record_bid(state, bid, 5.6)

    other = election_service.bid_message(vacancy(index=1), "n01", 0.9, ("n00",))
    assert not election_service.record_bid(state, other, 5.01)


def test_maybe_challenge_threshold():
    """Test that a challenge needs FS_a >= delta * FS_e."""
    spec = crew_spec(1)
    registry, _ = crew([50, 50])
    registry.apply_assignment("worker", 0, Assignment("n00", 0.5, 1.0, 1.0))

    weak = election_service.maybe_challenge(
        "n01", "worker", registry, spec, battery_ctx("n01", 59), CFG
    )
    assert weak is None
    strong = election_service.maybe_challenge(
        "n01", "worker", registry, spec, battery_ctx("n01", 61), CFG
    )
    assert strong.kind is MessageKind.CHALLENGE_REQUEST
    assert strong.to == "n00"
    assert strong.payload["fitness"] == pytest.approx(0.61)

    # Holders never challenge their own role.
    assert (
        election_service.maybe_challenge(
            "n00", "worker", registry, spec, battery_ctx("n00", 99), CFG
        )
        is None
    )


def test_thresholds_fire_at_the_boundary():
    """Test that FS_a equal to delta * FS_e or (2 - delta) * FS_e counts as crossing."""
    spec = crew_spec(1)

    def held():
        registry, _ = crew([50, 50])
        registry.apply_assignment("worker", 0, Assignment("n00", 0.5, 1.0, 1.0))
        return registry

    challenge = election_service.maybe_challenge(
        "n01", "worker", held(), spec, battery_ctx("n01", 60), CFG
    )
    assert challenge.payload["fitness"] == pytest.approx(0.6)

    for level in (40, 60):
        update = election_service.fitness_drift_tick(
            "n00", "worker", 0, held(), spec, battery_ctx("n00", level, 2.0), CFG, 2.0
        )
        assert update.kind is MessageKind.FITNESS_UPDATE


def test_challenge_targets_weakest_incumbent():
    """Test that the challenger picks the position with the lowest FS_e."""
    spec = crew_spec(2)
    registry, _ = crew([50, 40, 90])
    registry.apply_assignment("worker", 0, Assignment("n00", 0.5, 1.0, 1.0))
    registry.apply_assignment("worker", 1, Assignment("n01", 0.4, 2.0, 2.0))
    msg = election_service.maybe_challenge(
        "n02", "worker", registry, spec, battery_ctx("n02", 90), CFG
    )
    assert msg.to == "n01"
    assert msg.payload["index"] == 1


def challenge_request(fitness: float, sender: str = "n01") -> Message:
    return Message(
        kind=MessageKind.CHALLENGE_REQUEST,
        sender=sender,
        to="n00",
        payload={"role": "worker", "index": 0, "fitness": fitness, "fs_e": 0.5},
        sent_at=4.0,
    )


def test_on_challenge_outcomes():
    """Test incumbent decisions: challenger wins, incumbent retains, stale."""
    spec = crew_spec(1)
    registry, _ = crew([50, 90])
    registry.apply_assignment("worker", 0, Assignment("n00", 0.5, 1.0, 1.0))

    outcome, [response, result] = election_service.on_challenge(
        "n00", registry, spec, challenge_request(0.62), battery_ctx("n00", 70), 4.01
    )
    assert outcome is ChallengeOutcome.INCUMBENT_RETAINS
    assert response.to == "n01"
    assert result.to == BROADCAST_ALL
    assert registry.holder("worker", 0).fitness == pytest.approx(0.7)

    outcome, [response, result] = election_service.on_challenge(
        "n00", registry, spec, challenge_request(0.9), battery_ctx("n00", 70), 5.01
    )
    assert outcome is ChallengeOutcome.CHALLENGER_WINS
    assert registry.holder("worker", 0).node_id == "n01"
    assert result.payload["assignment"]["node_id"] == "n01"
    assert response.payload["outcome"] == "ChallengerWins"

    outcome, replies = election_service.on_challenge(
        "n00", registry, spec, challenge_request(0.95), battery_ctx("n00", 70), 6.01
    )
    assert outcome is ChallengeOutcome.STALE
    assert [m.kind for m in replies] == [MessageKind.CHALLENGE_RESPONSE]


def test_fitness_drift_band():
    """Test FitnessUpdate only when FS_a leaves ((2 - delta) FS_e, delta FS_e)."""
    spec = crew_spec(1)
    registry, _ = crew([50])
    registry.apply_assignment("worker", 0, Assignment("n00", 0.5, 1.0, 1.0))

    def drift(level: float, now: float):
        return election_service.fitness_drift_tick(
            "n00", "worker", 0, registry, spec, battery_ctx("n00", level, now), CFG, now
        )

    assert drift(55, 2.0) is None
    assert drift(41, 3.0) is None
    update = drift(39, 4.0)
    assert update.kind is MessageKind.FITNESS_UPDATE
    assert registry.holder("worker", 0).fitness == pytest.approx(0.39)
    assert drift(46, 5.0) is None
    assert drift(48, 6.0).payload["assignment"]["fitness"] == pytest.approx(0.48)


def test_allocate_k_positions_matches_brute_force():
    """Test successive elections against a sort over random populations."""
    rng = np.random.default_rng(11)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        k = int(rng.integers(1, 6))
        levels = rng.integers(0, 101, n)
        registry, contexts = crew(levels)
        result = election_service.allocate_k_positions(
            "worker", k, registry, crew_spec(k), contexts, now=5.0
        )

        ranked = sorted(
            (-int(level), f"n{i:02d}") for i, level in enumerate(levels) if level >= 15
        )
        expected = [node for _, node in ranked[:k]]
        expected += [None] * (k - len(expected))
        assert [a.node_id if a else None for _, a in sorted(result.items())] == expected


def test_allocate_keeps_current_holders():
    """Test that filled positions are left alone."""
    registry, contexts = crew([50, 90, 70])
    registry.apply_assignment("worker", 0, Assignment("n00", 0.5, 1.0, 1.0))
    result = election_service.allocate_k_positions(
        "worker", 2, registry, crew_spec(2), contexts, now=5.0
    )
    assert result[0].node_id == "n00"
    assert result[1].node_id == "n01"


@pytest.mark.parametrize("mode", list(Mode))
@pytest.mark.parametrize("n", range(2, 11))
def test_founding_election_cost(make_sim, bluetooth_spec, n, mode):
    """Test that e eligible nodes exchange e(e-1) unicast bids or e broadcasts."""
    bids = n * (n - 1) if mode is Mode.UNICAST else n
    sim = make_sim(bluetooth_spec, n, mode=mode.value)
    before = sim.run_until(0.5)
    cost = sim.run_until(1.6).delta(before)
    assert cost.transmitted_count(MessageKind.BID) == bids
    assert cost.transmitted_count(MessageKind.ELECTION_RESULT) == 0
    assert sim.holder_of("relay") == "n00"
    assert sim.elections.count == 1


@pytest.mark.parametrize("mode", list(Mode))
@pytest.mark.parametrize("n", range(2, 11))
def test_vacancy_election_cost(make_sim, bluetooth_spec, n, mode):
    """Test the election the e = n-1 survivors open when the holder is evicted."""
    e = n - 1
    bids = e * (e - 1) if mode is Mode.UNICAST else e
    sim = make_sim(bluetooth_spec, n, mode=mode.value)
    sim.crash_at(2.25, "n00")
    before = sim.run_until(5.5)
    cost = sim.run_until(6.6).delta(before)
    assert cost.transmitted_count(MessageKind.BID) == bids
    assert sum(cost.transmitted.values()) == bids
    assert sim.holder_of("relay") == "n01"


@pytest.mark.parametrize("mode", list(Mode))
@pytest.mark.parametrize("n", range(2, 11))
def test_challenge_cost(make_sim, battery_spec, n, mode):
    """Test that a challenge costs a request, a response and one result advertisement."""
    challenger = f"n{n - 1:02d}"
    results = n - 1 if mode is Mode.UNICAST else 1
    sim = make_sim(battery_spec, n, mode=mode.value)
    sim.change_context_at(3.5, challenger, scalars={"BATTERY_LEVEL": 90.0})
    before = sim.run_until(3.5)
    assert sim.holder_of("leader") == "n00"

    cost = sim.run_until(4.5).delta(before)
    assert cost.transmitted_count(MessageKind.CHALLENGE_REQUEST) == 1
    assert cost.transmitted_count(MessageKind.CHALLENGE_RESPONSE) == 1
    assert cost.transmitted_count(MessageKind.ELECTION_RESULT) == results
    assert sum(cost.transmitted.values()) == 2 + results
    assert sim.holder_of("leader") == challenger
    assert sim.converged()
    assert sim.elections.by_trigger()["Challenge"] == 1


def test_fitness_update_reaches_every_member(make_sim, battery_spec):
    """Test that a holder's large fitness change is advertised once."""
    sim = make_sim(battery_spec, 4)
    sim.change_context_at(3.5, "n00", scalars={"BATTERY_LEVEL": 80.0})
    before = sim.run_until(3.5)
    cost = sim.run_until(4.5).delta(before)
    assert cost.transmitted_count(MessageKind.FITNESS_UPDATE) == 3
    assert sim.converged()
    _, held = sim.registries()["n02"]
    assert held == (("leader", 0, "n00", 0.8),)


def test_resignation_when_role_criteria_fail(make_sim):
    """Test that a holder losing the role's criteria resigns and is replaced."""
    spec = parse_spec(RELAY_GROUP)
    sim = make_sim(spec, 0)
    for i in range(4):
        sim.add_node(f"n{i:02d}", booleans={"BLUETOOTH": True, "INTERNET": True})
    sim.change_context_at(3.5, "n00", booleans={"INTERNET": False})
    sim.run_until(3.9)
    assert sim.holder_of("relay") == "n00"

    sim.run_until(6.0)
    assert sim.holder_of("relay") == "n01"
    assert sim.holder_of("spare") == "n00"
    assert sim.elections.by_trigger()["Resignation"] == 1
    assert sim.counters.transmitted_count(MessageKind.RESIGNATION) == 3
    assert sim.converged()


def test_simulated_allocation_is_top_k(make_sim):
    """Test that a static population ends with the k fittest holders."""
    rng = np.random.default_rng(5)
    for trial in range(20):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(1, n + 1))
        levels = rng.choice(np.arange(15, 101), size=n, replace=False)
        sim = make_sim(crew_spec(k), 0, delta=1.001, seed=trial)
        for i, level in enumerate(levels):
            sim.add_node(f"n{i:02d}", scalars={"BATTERY_LEVEL": float(level)})
        sim.run_until(k + 3.0)

        ranked = sorted((-int(level), f"n{i:02d}") for i, level in enumerate(levels))
        assert sim.converged()
        assert set(sim.assignments()["worker"].values()) == {node for _, node in ranked[:k]}


def test_larger_delta_means_fewer_challenges(make_sim, battery_spec):
    """Test that raising the hysteresis factor never adds challenges over a fixed workload."""
    totals = []
    for delta in (1.05, 1.2, 1.5):
        challenges = 0
        for trial in range(25):
            rng = np.random.default_rng(trial)
            sim = make_sim(battery_spec, 5, delta=delta, seed=trial)
            for tick in range(3, 16):
                node = f"n{int(rng.integers(0, 5)):02d}"
                level = float(rng.integers(20, 101))
                sim.change_context_at(tick + 0.5, node, scalars={"BATTERY_LEVEL": level})
            sim.run_until(20.0)
            assert sim.converged()
            challenges += sim.elections.challenges
        totals.append(challenges)
    assert totals[0] >= totals[1] >= totals[2]
    assert totals[0] > 0


@pytest.mark.parametrize("mode", list(Mode))
def test_simulated_allocation_with_ties(make_sim, mode):
    """Test top-k allocation when several nodes share a fitness; ties go to the smaller id."""
    rng = np.random.default_rng(17)
    for trial in range(100):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(1, n + 1))
        levels = rng.integers(15, 21, size=n)
        sim = make_sim(crew_spec(k), 0, mode=mode.value, delta=1.001, seed=trial)
        for i, level in enumerate(levels):
            sim.add_node(f"n{i:02d}", scalars={"BATTERY_LEVEL": float(level)})
        sim.run_until(k + 3.0)

        ranked = sorted((-int(level), f"n{i:02d}") for i, level in enumerate(levels))
        assert sim.converged()
        assert set(sim.assignments()["worker"].values()) == {node for _, node in ranked[:k]}

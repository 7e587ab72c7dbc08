"""Multiplayer game session with peer review of game-state updates."""

from typing import Dict, Tuple

from app.core.errors import TooFewMembers
from app.core.events import Message, MessageKind
from app.logger import get_logger
from app.scenarios.bus_monitoring import schedule_churn
from app.schemas.reports import ElectionSummary, MembershipEvent, MetricsReport, ReviewSummary
from app.schemas.scenario import ScenarioConfig
from app.schemas.spec import GroupSpec
from app.services import review_service
from app.services.node_agent import SoisNode
from app.services.simulation import Simulation
from app.services.spec_service import bind_cardinality

logger = get_logger(__name__)


class ReviewGame:
    """Per-round reviewer assignment computed by every member from its own registry."""

    def __init__(self, sim: Simulation, cfg: ScenarioConfig):
        self.sim = sim
        self.cfg = cfg
        self.stats = review_service.ReviewStats(detection_accuracy=cfg.review.accuracy)
        self.cheats = sim.streams.get("cheats")
        self.detection = sim.streams.get("detection")
        self.rounds_run = 0

    def _assignment(self, node: SoisNode, round_index: int) -> Dict[str, str]:
        return review_service.assign_reviewers(
            node.registry.member_ids(), round_index, self.cfg.seed
        ).assignment

    def play_round(self, timer, now: float) -> None:
        round_index = timer.data["round"]
        members = self.sim.member_nodes()
        if len(members) < 2:
            logger.warning(f"Review round {round_index} skipped: {len(members)} member(s)")
            return
        self.rounds_run += 1
        for node in members:
            self.stats.times_as_reviewer.setdefault(node.node_id, 0)
        for node in members:
            try:
                assignment = self._assignment(node, round_index)
            except TooFewMembers:
                continue
            valid = bool(self.cheats.random() >= self.cfg.review.cheat_rate)
            node.send(
                Message(
                    kind=MessageKind.REVIEW_REQUEST,
                    sender=node.node_id,
                    to=assignment[node.node_id],
                    group=node.registry.group,
                    payload={"round": round_index, "valid": valid},
                    sent_at=now,
                )
            )

    def on_request(self, node: SoisNode, msg: Message, now: float) -> None:
        if not node.is_member:
            return
        round_index = msg.payload["round"]
        assignment = self._assignment(node, round_index)
        if assignment.get(msg.sender) != node.node_id:
            logger.debug(f"{node.node_id} is not the reviewer of {msg.sender} in {round_index}")
            return
        self.stats.times_as_reviewer[node.node_id] = (
            self.stats.times_as_reviewer.get(node.node_id, 0) + 1
        )
        verdict = review_service.review_update(
            node.node_id, msg.payload["valid"], self.stats, self.detection
        )
        if verdict is review_service.Verdict.REJECT:
            node.send(
                Message(
                    kind=MessageKind.REVIEW_VERDICT,
                    sender=node.node_id,
                    to=msg.sender,
                    group=node.registry.group,
                    payload={"round": round_index, "verdict": verdict.value},
                    sent_at=now,
                )
            )

    def summary(self) -> ReviewSummary:
        return ReviewSummary(
            rounds=self.rounds_run,
            updates=self.stats.updates,
            injected_cheats=self.stats.injected_cheats,
            detected_cheats=self.stats.detected_cheats,
            detection_accuracy=self.stats.detection_accuracy,
            times_as_reviewer=dict(sorted(self.stats.times_as_reviewer.items())),
            load_spread=self.stats.load_spread,
        )


def run_review_scenario(
    cfg: ScenarioConfig, spec: GroupSpec, trace: bool = True
) -> Tuple[MetricsReport, Simulation]:
    """Members converge on the game-session group, then play review rounds."""
    if cfg.node_count < 2:
        raise TooFewMembers("the review scenario needs at least 2 nodes")
    players = cfg.node_count if cfg.review.allocate_roles else 1
    bound = bind_cardinality(spec, {name: players for name in spec.parameters})
    sim = Simulation(bound, cfg.net, cfg.protocol, seed=cfg.seed, trace=trace)
    batteries = cfg.battery_levels or [80.0] * cfg.node_count
    for node, battery in zip(cfg.node_ids, batteries):
        sim.add_node(node, {"BLUETOOTH": True}, {"BATTERY_LEVEL": battery})
    schedule_churn(sim, cfg)

    game = ReviewGame(sim, cfg)
    sim.timer_hooks["review_round"] = game.play_round
    sim.message_hooks[MessageKind.REVIEW_REQUEST] = game.on_request
    for r in range(cfg.review.rounds):
        sim.schedule_timer(
            cfg.warmup + r * cfg.review.round_period, "review_round", data={"round": r}
        )

    t_end = cfg.warmup + cfg.review.rounds * cfg.review.round_period + cfg.sensing_period
    sim.run_until(t_end)
    review = game.summary()
    logger.info(
        f"Review run seed={cfg.seed} n={cfg.node_count}: {review.detected_cheats}/"
        f"{review.injected_cheats} cheats detected, load spread {review.load_spread}"
    )
    report = MetricsReport(
        scenario=cfg.scenario,
        mode=cfg.mode.value,
        seed=cfg.seed,
        node_count=len(sim.nodes),
        simulated_runtime=t_end,
        message_counters=sim.counters.to_dict(),
        messages_by_kind=sim.counters.by_kind(),
        elections=ElectionSummary(**sim.elections.to_dict()),
        review=review,
        membership=[MembershipEvent(time=t, node=n, event=e) for t, n, e in sim.membership_log],
        registries_converged=sim.converged(),
        assignments=sim.assignments(),
    )
    return report, sim

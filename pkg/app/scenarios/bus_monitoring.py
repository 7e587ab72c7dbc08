"""Public transport monitoring: client-server baseline against a self-organized group."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.config import settings
from app.core.errors import ConfigSpecMismatch, MissingBinding, NonPositiveBinding
from app.core.events import BACKEND, Message, MessageKind
from app.core.rng import RandomStreams
from app.logger import get_logger
from app.schemas.reports import ElectionSummary, MembershipEvent, MetricsReport
from app.schemas.scenario import InternetType, NetConfig, RunMode, ScenarioConfig
from app.schemas.spec import GroupSpec
from app.services.node_agent import SoisNode
from app.services.simulation import Simulation
from app.services.spec_service import bind_cardinality, find_role_with_term

logger = get_logger(__name__)

SENSORS = ("ACCELEROMETER", "GPS")


@dataclass(frozen=True)
class NodeProfile:
    """Static device profile of one passenger node."""

    node_id: str
    battery: float
    internet: InternetType
    gps_signal: float
    accelerometer: bool
    gps: bool

    @property
    def gps_active(self) -> bool:
        return self.gps and self.gps_signal >= settings.GPS_SIGNAL_CUTOFF

    @property
    def active_sensors(self) -> List[str]:
        flags = {"ACCELEROMETER": self.accelerometer, "GPS": self.gps_active}
        return [sensor for sensor in SENSORS if flags[sensor]]

    def booleans(self) -> Dict[str, bool]:
        return {
            "ACCELEROMETER": self.accelerometer,
            "GPS": self.gps_active,
            "INTERNET": self.internet is not InternetType.NONE,
            "BLUETOOTH": True,
        }

    def scalars(self) -> Dict[str, float]:
        return {"BATTERY_LEVEL": self.battery, "GPS_SIGNAL": self.gps_signal}

    def strings(self) -> Dict[str, str]:
        return {"INTERNET_TYPE": self.internet.value}


def build_profiles(cfg: ScenarioConfig) -> List[NodeProfile]:
    """Per-node profiles; lists missing from the config are drawn from the seed."""
    rng = RandomStreams(cfg.seed).get("profiles")
    n = cfg.node_count
    # Every draw happens even when a list is given, so one list never shifts another.
    batteries = rng.uniform(10.0, 90.0, n).round(1)
    internet = rng.choice(
        [t.value for t in InternetType], size=n, p=[0.45, 0.45, 0.10]
    )
    gps_signal = rng.uniform(0.0, 100.0, n).round(1)

    return [
        NodeProfile(
            node_id=node_id,
            battery=float(cfg.battery_levels[i] if cfg.battery_levels else batteries[i]),
            internet=InternetType(cfg.internet_type[i] if cfg.internet_type else internet[i]),
            gps_signal=float(cfg.gps_signal[i] if cfg.gps_signal else gps_signal[i]),
            accelerometer=cfg.accelerometer[i] if cfg.accelerometer else True,
            gps=cfg.gps[i] if cfg.gps else True,
        )
        for i, node_id in enumerate(cfg.node_ids)
    ]


def type_reachability(internet: InternetType) -> float:
    if internet is InternetType.CELLULAR:
        return settings.CELLULAR_REACHABILITY
    if internet is InternetType.WIFI:
        return settings.WIFI_REACHABILITY
    return 0.0


def effective_net(cfg: ScenarioConfig, profiles: List[NodeProfile]) -> NetConfig:
    """Backend reachability per node from its internet type, explicit entries win."""
    reachability = {p.node_id: type_reachability(p.internet) for p in profiles}
    reachability.update(cfg.net.backend_reachability)
    return cfg.net.model_copy(update={"backend_reachability": reachability})


def window_times(cfg: ScenarioConfig) -> List[float]:
    return [cfg.warmup + w * cfg.sensing_period for w in range(1, cfg.windows + 1)]


def end_time(cfg: ScenarioConfig) -> float:
    return cfg.warmup + cfg.duration + cfg.sensing_period


def schedule_churn(sim: Simulation, cfg: ScenarioConfig) -> None:
    schedule = {"join": sim.join_at, "crash": sim.crash_at, "shutdown": sim.shutdown_at}
    for event in cfg.churn:
        if event.node not in sim.nodes:
            raise ConfigSpecMismatch(f"churn event refers to unknown node '{event.node}'")
        schedule[event.kind](event.at, event.node)


def _populate(sim: Simulation, cfg: ScenarioConfig, profiles: List[NodeProfile]) -> None:
    """Nodes, churn, context changes and battery drift shared by both modes."""
    known = {p.node_id for p in profiles}
    for profile in profiles:
        sim.add_node(profile.node_id, profile.booleans(), profile.scalars(), profile.strings())
    schedule_churn(sim, cfg)

    for change in cfg.context_changes:
        if change.node not in known:
            raise ConfigSpecMismatch(f"context change refers to unknown node '{change.node}'")
        sim.change_context_at(
            change.at, change.node, change.booleans, change.scalars, change.strings
        )

    if cfg.battery_drift > 0:
        rng = sim.streams.get("battery_drift")
        levels = np.array([p.battery for p in profiles])
        for t in window_times(cfg):
            levels = np.clip(levels + rng.normal(0.0, cfg.battery_drift, len(levels)), 0, 100)
            for profile, level in zip(profiles, levels):
                sim.change_context_at(t, profile.node_id, scalars={"BATTERY_LEVEL": float(level)})


def _report(
    cfg: ScenarioConfig,
    sim: Simulation,
    t_end: float,
    uptime: float,
) -> MetricsReport:
    counters = sim.counters
    return MetricsReport(
        scenario=cfg.scenario,
        mode=cfg.mode.value,
        seed=cfg.seed,
        node_count=len(sim.nodes),
        m1_requests=counters.transmitted_count(MessageKind.BACKEND_REQUEST),
        m2_failed=counters.lost[MessageKind.BACKEND_REQUEST],
        windows=cfg.windows,
        aggregator_uptime=uptime,
        simulated_runtime=t_end,
        message_counters=counters.to_dict(),
        messages_by_kind=counters.by_kind(),
        elections=ElectionSummary(**sim.elections.to_dict()),
        membership=[MembershipEvent(time=t, node=n, event=e) for t, n, e in sim.membership_log],
        registries_converged=sim.converged(),
        assignments=sim.assignments(),
    )


def run_client_server(
    cfg: ScenarioConfig, spec: GroupSpec, trace: bool = True
) -> Tuple[MetricsReport, Simulation]:
    """Every node uploads each active sensor reading over its own connection."""
    if cfg.mode is not RunMode.CLIENT_SERVER:
        raise ValueError("run_client_server needs mode ClientServer")
    profiles = build_profiles(cfg)
    sim = Simulation(
        _bind(spec, cfg),
        effective_net(cfg, profiles),
        cfg.protocol,
        seed=cfg.seed,
        trace=trace,
        grouping=False,
    )
    _populate(sim, cfg, profiles)
    by_id = {p.node_id: p for p in profiles}

    def sense(timer, now: float) -> None:
        for node_id in sim.alive_ids():
            for sensor in by_id[node_id].active_sensors:
                sim.network.send(
                    Message(
                        kind=MessageKind.BACKEND_REQUEST,
                        sender=node_id,
                        to=BACKEND,
                        payload={"window": timer.data["window"], "sensor": sensor},
                        sent_at=now,
                    )
                )

    sim.timer_hooks["sense"] = sense
    for w, t in enumerate(window_times(cfg), start=1):
        sim.schedule_timer(t, "sense", data={"window": w})

    t_end = end_time(cfg)
    sim.run_until(t_end)
    return _report(cfg, sim, t_end, uptime=0.0), sim


def _bind(spec: GroupSpec, cfg: ScenarioConfig) -> GroupSpec:
    try:
        return bind_cardinality(spec, cfg.k_bindings)
    except (MissingBinding, NonPositiveBinding) as e:
        raise ConfigSpecMismatch(f"k_bindings do not fit spec '{spec.name}': {e}") from e


def sensing_roles(spec: GroupSpec) -> Tuple[str, Dict[str, str]]:
    """The aggregator role and the role sensing each sensor, found by their criteria terms."""
    aggregator = find_role_with_term(spec, "INTERNET")
    if aggregator is None:
        raise ConfigSpecMismatch(f"spec '{spec.name}' has no role requiring INTERNET")
    roles = {}
    for sensor in SENSORS:
        role = find_role_with_term(spec, sensor)
        if role is not None and role != aggregator:
            roles[role] = sensor
    if not roles:
        raise ConfigSpecMismatch(f"spec '{spec.name}' has no sensing role")
    return aggregator, roles


class Aggregation:
    """Sensor reports flowing to the aggregator and the batches it uploads."""

    def __init__(
        self, sim: Simulation, cfg: ScenarioConfig, aggregator: str, roles: Dict[str, str]
    ):
        self.sim = sim
        self.cfg = cfg
        self.aggregator = aggregator
        self.roles = roles
        self.flushed_windows: set = set()
        self.controllers = cfg.adaptation.roles if cfg.adaptation else {}

    def holds_aggregator(self, node: SoisNode) -> bool:
        current = node.registry.holder(self.aggregator, 0)
        return node.is_member and current is not None and current.node_id == node.node_id

    def aggregator_nodes(self) -> List[SoisNode]:
        return [node for node in self.sim.member_nodes() if self.holds_aggregator(node)]

    def sense(self, timer, now: float) -> None:
        window = timer.data["window"]
        for node in self.sim.member_nodes():
            target = node.registry.holder(self.aggregator, 0)
            for role, sensor in sorted(self.roles.items()):
                if not node.holds(role):
                    continue
                if self.holds_aggregator(node):
                    node.samples[role] += 1
                elif target is not None:
                    node.send(
                        Message(
                            kind=MessageKind.SENSOR_REPORT,
                            sender=node.node_id,
                            to=target.node_id,
                            group=node.registry.group,
                            payload={"window": window, "role": role, "sensor": sensor},
                            sent_at=now,
                        )
                    )

    def on_report(self, node: SoisNode, msg: Message, now: float) -> None:
        if self.holds_aggregator(node):
            node.samples[msg.payload["role"]] += 1

    def flush(self, timer, now: float) -> None:
        window = timer.data["window"]
        for node in self.aggregator_nodes():
            samples = sum(node.samples.values())
            node.send(
                Message(
                    kind=MessageKind.BACKEND_REQUEST,
                    sender=node.node_id,
                    to=BACKEND,
                    group=node.registry.group,
                    payload={"window": window, "samples": samples},
                    size_hint=max(1, samples),
                    sent_at=now,
                )
            )
            self.flushed_windows.add(window)
            if self.controllers:
                node.adapt_cardinality(self.controllers, self.cfg.sensing_period, now)
            node.samples.clear()
        if window not in self.flushed_windows:
            logger.warning(f"No aggregator holds '{self.aggregator}' in window {window}")

    def adjust(self, timer, now: float) -> None:
        holders = self.aggregator_nodes()
        if not holders:
            logger.warning(f"Criteria adjustment at {now:.3f} dropped, no aggregator")
            return
        holders[0].adjust_minimum(timer.data["term"], timer.data["new_minimum"], now)


def run_sois(
    cfg: ScenarioConfig, spec: GroupSpec, trace: bool = True
) -> Tuple[MetricsReport, Simulation]:
    """Self-organized run: sensing holders report to the aggregator, which uploads once."""
    if cfg.mode is not RunMode.SOIS:
        raise ValueError("run_sois needs mode SOIS")
    bound = _bind(spec, cfg)
    aggregator, roles = sensing_roles(bound)
    profiles = build_profiles(cfg)
    sim = Simulation(bound, effective_net(cfg, profiles), cfg.protocol, seed=cfg.seed, trace=trace)
    _populate(sim, cfg, profiles)

    aggregation = Aggregation(sim, cfg, aggregator, roles)
    sim.message_hooks[MessageKind.SENSOR_REPORT] = aggregation.on_report
    sim.timer_hooks["sense"] = aggregation.sense
    sim.timer_hooks["flush"] = aggregation.flush
    sim.timer_hooks["adjust_criteria"] = aggregation.adjust
    for w, t in enumerate(window_times(cfg), start=1):
        sim.schedule_timer(t, "sense", data={"window": w})
        sim.schedule_timer(t + settings.AGGREGATION_DELAY, "flush", data={"window": w})
    for adj in cfg.adaptation.criteria_adjustments if cfg.adaptation else []:
        sim.schedule_timer(
            adj.at, "adjust_criteria", data={"term": adj.term, "new_minimum": adj.new_minimum}
        )

    t_end = end_time(cfg)
    sim.run_until(t_end)
    uptime = len(aggregation.flushed_windows) / cfg.windows if cfg.windows else 0.0
    logger.info(
        f"SOIS run seed={cfg.seed} n={cfg.node_count}: "
        f"{sim.counters.transmitted_count(MessageKind.BACKEND_REQUEST)} backend requests, "
        f"aggregator uptime {uptime:.2f}"
    )
    return _report(cfg, sim, t_end, uptime), sim


def run_bus_monitoring(
    cfg: ScenarioConfig, spec: GroupSpec, trace: bool = True
) -> Tuple[MetricsReport, Simulation]:
    if cfg.mode is RunMode.CLIENT_SERVER:
        return run_client_server(cfg, spec, trace)
    return run_sois(cfg, spec, trace)


def closed_form_client_server(cfg: ScenarioConfig) -> Optional[int]:
    """Expected M1 of a churn-free client-server run."""
    if cfg.churn:
        return None
    return sum(len(p.active_sensors) for p in build_profiles(cfg)) * cfg.windows

"""Bus-ride detection from passenger context traces."""

from typing import List, Optional, Tuple

from app.logger import get_logger
from app.schemas.reports import ElectionSummary, MembershipEvent, MetricsReport
from app.schemas.scenario import RiderTrace, ScenarioConfig, node_id
from app.schemas.spec import GroupSpec
from app.services.simulation import Simulation
from app.services.spec_service import bind_cardinality, current_bindings

logger = get_logger(__name__)

MOTION_TERM = "MOOVING"


def _rider_context(rider: RiderTrace) -> Tuple[dict, dict, dict]:
    booleans = {
        "ACCELEROMETER": rider.accelerometer,
        "GPS": False,
        "INTERNET": False,
        "BLUETOOTH": True,
        MOTION_TERM: False,
    }
    scalars = {"BATTERY_LEVEL": rider.battery, "WIFI_SIGNAL": rider.wifi_signal}
    strings = {"BSSID": rider.bssid}
    return booleans, scalars, strings


def run_bus_ride_detection(
    cfg: ScenarioConfig, spec: GroupSpec, trace: bool = True
) -> Tuple[MetricsReport, Simulation]:
    """Nodes join the group once all ride criteria hold; the membership trace is the result."""
    bindings = {name: cfg.k_bindings.get(name, 1) for name in spec.parameters}
    bound = bind_cardinality(spec, {**current_bindings(spec), **bindings})
    sim = Simulation(bound, cfg.net, cfg.protocol, seed=cfg.seed, trace=trace)

    for i, rider in enumerate(cfg.bus_ride.riders):
        rider_id = node_id(i)
        booleans, scalars, strings = _rider_context(rider)
        sim.add_node(rider_id, booleans, scalars, strings)
        if rider.moving_from is not None:
            sim.change_context_at(rider.moving_from, rider_id, booleans={MOTION_TERM: True})
        if rider.moving_until is not None:
            sim.change_context_at(rider.moving_until, rider_id, booleans={MOTION_TERM: False})

    t_end = cfg.warmup + cfg.duration
    sim.run_until(t_end)
    report = MetricsReport(
        scenario=cfg.scenario,
        mode=cfg.mode.value,
        seed=cfg.seed,
        node_count=len(sim.nodes),
        simulated_runtime=t_end,
        message_counters=sim.counters.to_dict(),
        messages_by_kind=sim.counters.by_kind(),
        elections=ElectionSummary(**sim.elections.to_dict()),
        membership=[MembershipEvent(time=t, node=n, event=e) for t, n, e in sim.membership_log],
        registries_converged=sim.converged(),
        assignments=sim.assignments(),
    )
    return report, sim


def join_times(report: MetricsReport, node: str) -> List[float]:
    return [e.time for e in report.membership if e.node == node and e.event == "join"]


def first_join(report: MetricsReport, node: str) -> Optional[float]:
    times = join_times(report, node)
    return times[0] if times else None

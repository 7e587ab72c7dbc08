"""Prometheus counters exported on /metrics."""

from prometheus_client import Counter

SPEC_VALIDATIONS = Counter(
    "soisim_spec_validations_total",
    "Group specification documents validated",
    ["outcome"],
)

SCENARIO_RUNS = Counter(
    "soisim_scenario_runs_total",
    "Completed scenario runs",
    ["scenario", "mode"],
)

MESSAGES_TRANSMITTED = Counter(
    "soisim_messages_transmitted_total",
    "Simulated message transmissions",
    ["kind"],
)

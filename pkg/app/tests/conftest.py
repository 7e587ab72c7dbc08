"""Pytest configuration and fixtures."""

from typing import Callable, Dict, Optional

import pytest
from fastapi.testclient import TestClient

from app.main import app
from app.schemas.scenario import NetConfig, ProtocolConfig
from app.schemas.spec import GroupSpec
from app.services.simulation import Simulation
from app.services.spec_service import bind_cardinality, bundled_spec, parse_spec

BLUETOOTH_GROUP = """
<group name="pairing">
  <criteria type="boolean" term="BLUETOOTH" value="TRUE"/>
  <role name="relay" cardinality="1"/>
</group>
"""

BATTERY_GROUP = """
<group name="battery">
  <criteria type="float" term="BATTERY_LEVEL" minimum="15"/>
  <role name="leader" cardinality="1"/>
</group>
"""


@pytest.fixture(scope="function")
def client():
    """Create test client."""
    with TestClient(app) as test_client:
        yield test_client


@pytest.fixture
def bus_spec() -> GroupSpec:
    """Bundled bus-monitoring spec, unbound."""
    return bundled_spec("bus-monitoring")


@pytest.fixture
def bound_bus_spec(bus_spec) -> GroupSpec:
    return bind_cardinality(bus_spec, {"k1": 2, "k2": 2})


@pytest.fixture
def bluetooth_spec() -> GroupSpec:
    """One group criterion (BLUETOOTH) and one single-position role, every fitness 1.0."""
    return parse_spec(BLUETOOTH_GROUP)


@pytest.fixture
def battery_spec() -> GroupSpec:
    """Single-position role whose fitness is the battery level."""
    return parse_spec(BATTERY_GROUP)


@pytest.fixture
def make_sim() -> Callable[..., Simulation]:
    """Factory for simulations of n identical nodes n00.. joining at t=0."""

    def factory(
        spec: GroupSpec,
        n: int,
        mode: str = "Unicast",
        scalars: Optional[Dict[str, float]] = None,
        seed: int = 0,
        delta: float = 1.2,
        trace: bool = True,
    ) -> Simulation:
        sim = Simulation(
            spec,
            NetConfig(mode=mode),
            ProtocolConfig(delta=delta),
            seed=seed,
            trace=trace,
        )
        for i in range(n):
            sim.add_node(
                f"n{i:02d}",
                booleans={"BLUETOOTH": True},
                scalars=dict(scalars or {"BATTERY_LEVEL": 50.0}),
            )
        return sim

    return factory

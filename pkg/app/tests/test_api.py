"""Tests for the HTTP endpoints."""

import json
from pathlib import Path

from app.services.spec_service import SPECS_DIR

CONFIGS = Path(__file__).resolve().parents[2] / "configs"
BUS_SPEC = (SPECS_DIR / "bus-monitoring.xml").read_text(encoding="utf-8")


def test_health(client):
    """Test the health check."""
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_validate_spec(client):
    """Test validating the bundled bus-monitoring spec."""
    response = client.post("/api/v1/specs/validate", json={"document": BUS_SPEC})
    assert response.status_code == 200
    data = response.json()
    assert data["group"] == "bus-monitoring"
    assert data["parameters"] == ["k1", "k2"]
    assert [r["name"] for r in data["roles"]] == ["geolocator", "accelerometer", "aggregator"]


def test_validate_invalid_spec(client):
    """Test that a parse error comes back with its location."""
    response = client.post(
        "/api/v1/specs/validate",
        json={"document": '<group name="g">\n  <role name="r" cardinality="0"/>\n</group>'},
    )
    assert response.status_code == 422
    detail = response.json()["detail"]
    assert "non-positive" in detail["message"]
    assert detail["line"] == 2


def test_validate_empty_document(client):
    """Test request validation of the document field."""
    response = client.post("/api/v1/specs/validate", json={"document": ""})
    assert response.status_code == 422


def test_eval_context(client):
    """Test evaluating a context against a spec."""
    response = client.post(
        "/api/v1/contexts/eval",
        json={
            "document": BUS_SPEC,
            "context": {
                "node_id": "n00",
                "booleans": {"GPS": True, "ACCELEROMETER": False, "INTERNET": True},
                "scalars": {"BATTERY_LEVEL": 25.0},
            },
        },
    )
    assert response.status_code == 200
    data = response.json()
    assert data["group_membership"] is True
    verdicts = {v["role"]: v for v in data["roles"]}
    assert verdicts["geolocator"]["rrc"] is False
    assert verdicts["aggregator"]["fitness"] == 0.25


def test_eval_context_invalid(client):
    """Test a bad spec and an out-of-range context."""
    response = client.post(
        "/api/v1/contexts/eval",
        json={"document": "<group>", "context": {"node_id": "n00"}},
    )
    assert response.status_code == 422

    response = client.post(
        "/api/v1/contexts/eval",
        json={"document": BUS_SPEC, "context": {"node_id": "n00", "scalars": {"GPS_SIGNAL": 150}}},
    )
    assert response.status_code == 422


def test_run_scenario(client):
    """Test running the bundled SOIS config."""
    config = json.loads((CONFIGS / "bus-monitoring.json").read_text(encoding="utf-8"))
    response = client.post("/api/v1/scenarios/run", json={"config": config})
    assert response.status_code == 200
    data = response.json()
    assert data["mode"] == "SOIS"
    assert data["m1_requests"] == 10
    assert data["registries_converged"] is True


def test_run_scenario_with_overrides(client):
    """Test seed and dotted overrides on a run request."""
    config = json.loads((CONFIGS / "bus-monitoring.json").read_text(encoding="utf-8"))
    response = client.post(
        "/api/v1/scenarios/run",
        json={"config": config, "seed": 4, "overrides": ["mode=ClientServer"]},
    )
    assert response.status_code == 200
    data = response.json()
    assert data["seed"] == 4
    assert data["m1_requests"] == 80


def test_run_scenario_invalid_config(client):
    """Test that config errors name the offending path."""
    response = client.post("/api/v1/scenarios/run", json={"config": {"node_count": 20}})
    assert response.status_code == 422
    assert response.json()["detail"]["path"] == "node_count"


def test_run_scenario_missing_spec(client):
    """Test a config naming a spec file that does not exist."""
    response = client.post(
        "/api/v1/scenarios/run", json={"config": {"spec": "does-not-exist.xml"}}
    )
    assert response.status_code == 404


def test_metrics(client):
    """Test that the Prometheus endpoint exports the soisim counters."""
    client.post("/api/v1/specs/validate", json={"document": BUS_SPEC})
    response = client.get("/metrics/")
    assert response.status_code == 200
    assert "soisim_spec_validations_total" in response.text

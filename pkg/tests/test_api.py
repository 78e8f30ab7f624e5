import pytest
from fastapi.testclient import TestClient

from gelfand.api import app

COARSE = {"domain": {"h": 0.03125}}


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert set(body["commands"]) == {"greens", "reduced", "degree", "verify", "solve"}


def test_degree_endpoint(client):
    r = client.post("/degree", json=COARSE)
    assert r.status_code == 200
    body = r.json()
    assert body["exit_code"] == 0 and body["degree_formula"] == body["degree_winding"] == -2


def test_reduced_endpoint_reports_admissibility(client):
    body = client.post("/reduced", json=COARSE).json()
    assert body["status"] == "ok" and body["admissibility"]["admissible"]


def test_schema_violation_is_422(client):
    assert client.post("/degree", json={"N": 9}).status_code == 422


def test_semantic_config_error_is_422(client):
    # valid schema, but a solve needs two stable seeds
    r = client.post("/solve", json={**COARSE, "seeds": [[0.0, 0.5]]})
    assert r.status_code == 422
    assert r.json()["status"] == "config_error"

import json
import pathlib
from concurrent.futures import ThreadPoolExecutor

import jsonschema
import pytest
from fastapi.testclient import TestClient

from rccs.service import PROTOCOL_VERSION, ServiceConfig, create_app

SCHEMAS = pathlib.Path(__file__).parent.parent / "schemas"


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app(ServiceConfig())) as c:
        yield c


def _req(k=0, x=(0.0, 0.0, 0.0), setpoint=0.0, h_d=0.03, pending=(),
         version=PROTOCOL_VERSION):
    return {"version": version, "k": k, "x": list(x), "setpoint": setpoint,
            "h_d": h_d, "pending_inputs": list(pending)}


def test_healthz_reports_ready_and_config_hash(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["config_hash"] == ServiceConfig().hash()
    assert "version" in body and body["protocol"] == PROTOCOL_VERSION


def test_healthz_503_during_startup(client):
    app = client.app
    app.state.ready = False
    try:
        assert client.get("/healthz").status_code == 503
    finally:
        app.state.ready = True


def test_solve_rest_optimality(client):
    r = client.post("/solve", json=_req(x=(0.5, 0.0, 0.0), setpoint=0.5))
    assert r.status_code == 200
    body = r.json()
    assert max(abs(u) for u in body["u_seq"]) < 1e-6
    assert not body["degraded"]
    assert body["status"] == "optimal"


def test_solve_horizon_lengths(client):
    r = client.post("/solve", json=_req(h_d=0.05))
    assert len(r.json()["u_seq"]) == 18          # ceil(0.9 / 0.05)
    r = client.post("/solve", json=_req(h_d=0.03))
    assert len(r.json()["u_seq"]) == 30


def test_solve_response_matches_published_schema(client):
    schema = json.loads((SCHEMAS / "solve_response.schema.json").read_text())
    r = client.post("/solve", json=_req(x=(0.2, 0.1, 0.0), setpoint=-0.5))
    jsonschema.validate(r.json(), schema)
    assert r.json()["tau_c"] >= 0.0


def test_request_schema_accepts_wire_format():
    schema = json.loads((SCHEMAS / "solve_request.schema.json").read_text())
    jsonschema.validate(_req(), schema)


def test_malformed_body_is_400_with_field_names(client):
    bad = _req()
    del bad["x"]
    r = client.post("/solve", json=bad)
    assert r.status_code == 400
    assert "x" in r.json()["fields"]
    r = client.post("/solve", json=_req(x=(0.0, 0.0)))   # wrong length
    assert r.status_code == 400
    assert any("x" in f for f in r.json()["fields"])
    r = client.post("/solve", json=_req(version="99"))
    assert r.status_code == 400
    assert "version" in r.json()["fields"]


def test_out_of_range_period_is_422(client):
    r = client.post("/solve", json=_req(h_d=0.9))
    assert r.status_code == 422
    assert "h_d" in r.json()["fields"]


def test_non_finite_values_rejected(client):
    body = json.dumps(_req()).replace('"setpoint": 0.0', '"setpoint": NaN')
    r = client.post("/solve", content=body,
                    headers={"content-type": "application/json"})
    assert r.status_code == 400


def test_stateless_under_permutation(client):
    reqs = [_req(k=i, x=(0.1 * i, -0.05 * i, 0.01 * i),
                 setpoint=(-0.5) ** i) for i in range(6)]

    def bodies(order):
        out = {}
        for idx in order:
            body = client.post("/solve", json=reqs[idx]).json()
            body.pop("tau_c")          # wall-clock timing may differ
            out[idx] = body
        return out

    fwd = bodies(range(6))
    rev = bodies(reversed(range(6)))
    assert fwd == rev


def test_concurrent_solves_match_serial(client):
    reqs = [_req(k=i, x=(0.05 * i, 0.0, -0.01 * i), setpoint=0.5)
            for i in range(8)]
    serial = []
    for q in reqs:
        b = client.post("/solve", json=q).json()
        b.pop("tau_c")
        serial.append(b)
    with ThreadPoolExecutor(max_workers=8) as ex:
        conc = list(ex.map(lambda q: client.post("/solve", json=q).json(),
                           reqs))
    for b in conc:
        b.pop("tau_c")
    assert conc == serial


def test_config_hash_distinguishes_deployments():
    assert ServiceConfig().hash() != ServiceConfig(k_u=2.0).hash()

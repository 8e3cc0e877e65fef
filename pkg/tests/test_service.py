import pytest
from fastapi.testclient import TestClient

from ghsim.auth import SessionManager, UserStore
from ghsim.runner import SimHost
from ghsim.scenario import default_scenario
from ghsim.service import create_app


@pytest.fixture()
def env():
    sc = default_scenario()
    sc.sim.duration = 36000.0
    host = SimHost(sc)
    clock = [0.0]
    sessions = SessionManager(UserStore.from_credentials({"operator": "secret"}),
                              now=lambda: clock[0])
    app = create_app(host, sessions)
    client = TestClient(app)
    try:
        yield client, host, clock
    finally:
        host.close()


def login(client, password="secret"):
    return client.post("/api/login", json={"username": "operator", "password": password})


def auth_headers(client):
    token = login(client).json()["token"]
    return {"Authorization": f"Bearer {token}"}


def test_login_success_returns_token(env):
    client, _, _ = env
    resp = login(client)
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["token"]) == 32 and body["role"] == "operator"


def test_login_wrong_password_rejected(env):
    client, _, _ = env
    assert login(client, "nope").status_code == 401


def test_sixth_rapid_failure_throttled(env):
    client, _, _ = env
    for _ in range(5):
        assert login(client, "bad").status_code == 401
    assert login(client, "bad").status_code == 429
    assert login(client, "secret").status_code == 429  # window applies to the user


def test_throttle_window_expires(env):
    client, _, clock = env
    for _ in range(5):
        login(client, "bad")
    clock[0] += 61.0
    assert login(client, "secret").status_code == 200


def test_expired_token_rejected(env):
    client, _, clock = env
    headers = auth_headers(client)
    assert client.get("/api/status", headers=headers).status_code == 200
    clock[0] += 25 * 3600.0
    assert client.get("/api/status", headers=headers).status_code == 401


def test_all_routes_reject_unauthenticated(env):
    client, _, _ = env
    cases = [
        ("GET", "/api/status", None),
        ("GET", "/api/events", None),
        ("POST", "/api/command", {"target": "plc", "action": "run", "args": {}}),
        ("GET", "/api/params", None),
        ("PUT", "/api/params", {"dry_limit": 65}),
        ("GET", "/api/export", None),
        ("POST", "/api/sim", {"action": "pause"}),
    ]
    for method, url, body in cases:
        resp = client.request(method, url, json=body)
        assert resp.status_code == 401, f"{method} {url} -> {resp.status_code}"


def test_status_reports_initial_world(env):
    client, _, _ = env
    status = client.get("/api/status", headers=auth_headers(client)).json()
    assert status["plc"]["mode"] == "Stop"
    assert len(status["snapshot"]["zones"]) == 6
    assert len(status["tanks"]) == 2


def test_run_command_reflected_in_status(env):
    client, _, _ = env
    headers = auth_headers(client)
    resp = client.post("/api/command", headers=headers,
                       json={"target": "plc", "action": "run", "args": {}})
    assert resp.json() == {"accepted": True, "reason": None}
    status = client.get("/api/status", headers=headers).json()
    assert status["plc"]["mode"] == "Run"


def test_actuator_command_rejection_propagates_reason(env):
    client, _, _ = env
    headers = auth_headers(client)
    client.post("/api/command", headers=headers,
                json={"target": "plc", "action": "run", "args": {}})
    resp = client.post("/api/command", headers=headers,
                       json={"target": "actuator", "action": "set",
                             "args": {"actuator": "pump", "state": True}})
    assert resp.json() == {"accepted": False, "reason": "ModeIsAuto"}


def test_malformed_command_target_is_schema_error(env):
    client, _, _ = env
    headers = auth_headers(client)
    resp = client.post("/api/command", headers=headers,
                       json={"target": "reactor", "action": "scram", "args": {}})
    assert resp.status_code == 422  # never enqueued


def test_events_endpoint_limits(env):
    client, host, _ = env
    headers = auth_headers(client)
    for action in ("run", "manual", "auto", "stop", "run", "manual", "auto"):
        client.post("/api/command", headers=headers,
                    json={"target": "plc", "action": action, "args": {}})
    assert len(host.world.events.events) >= 11
    feed = client.get("/api/events", headers=headers).json()["events"]
    assert len(feed) == 10
    times = [e["timestamp"] for e in feed]
    assert times == sorted(times, reverse=True)
    assert client.get("/api/events?limit=0", headers=headers).json()["events"] == []
    assert len(client.get("/api/events?limit=3", headers=headers).json()["events"]) == 3


def test_params_roundtrip_and_validation(env):
    client, _, _ = env
    headers = auth_headers(client)
    before = client.get("/api/params", headers=headers).json()
    assert before["irrigation_duration"] == 300.0

    resp = client.put("/api/params", headers=headers, json={"irrigation_duration": 600})
    assert resp.status_code == 200
    assert resp.json()["irrigation_duration"] == 600.0
    after = client.get("/api/params", headers=headers).json()
    assert after["irrigation_duration"] == 600.0

    bad = client.put("/api/params", headers=headers, json={"wet_limit": 70.0})
    assert bad.status_code == 400
    assert "wet_limit" in bad.json()["detail"]
    assert client.get("/api/params", headers=headers).json()["wet_limit"] == 30.0


def test_export_passthrough_and_range_check(env):
    client, host, _ = env
    headers = auth_headers(client)
    host.run_headless(1000.0)
    resp = client.get("/api/export", headers=headers)
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("text/csv")
    lines = resp.text.strip().split("\n")
    assert lines[0] == "timestamp,node_id,port,sensor,value,unit"
    assert len(lines) == 1 + 24  # one sample instant, six nodes, four ports

    resp = client.get("/api/export?from=100&to=5", headers=headers)
    assert resp.status_code == 400

    iso = client.get("/api/export?from=2021-06-01T00:00:00Z&to=2021-06-01T00:20:00Z",
                     headers=headers)
    assert iso.status_code == 200
    assert len(iso.text.strip().split("\n")) == 25


def test_export_filters(env):
    client, host, _ = env
    headers = auth_headers(client)
    host.run_headless(1000.0)
    resp = client.get("/api/export?node=6&kind=solar_radiation", headers=headers)
    rows = resp.text.strip().split("\n")[1:]
    assert len(rows) == 1
    assert rows[0].split(",")[1] == "6"


def test_sim_control_pause_resume_speed(env):
    client, host, _ = env
    headers = auth_headers(client)
    resp = client.post("/api/sim", headers=headers, json={"action": "pause"})
    assert resp.json()["paused"] is True
    now = host.world.clock.now
    import time as _time
    _time.sleep(0.05)
    assert host.world.clock.now == now  # no thread is running anyway, stays put

    resp = client.post("/api/sim", headers=headers, json={"action": "speed", "value": 3600})
    assert resp.json()["speed"] == 3600.0
    resp = client.post("/api/sim", headers=headers, json={"action": "speed", "value": -1})
    assert resp.status_code == 400
    resp = client.post("/api/sim", headers=headers, json={"action": "resume"})
    assert resp.json()["paused"] is False


def test_interleaved_clients_serialize_by_arrival(env):
    client, host, _ = env
    h1 = auth_headers(client)
    host.world.submit("plc", "run", issued_by="alice")
    host.world.submit("plc", "manual", issued_by="bob")
    resp = client.post("/api/command", headers=h1,
                       json={"target": "actuator", "action": "set",
                             "args": {"actuator": "lamp", "state": True}})
    assert resp.json()["accepted"] is True  # run+manual applied first, in order

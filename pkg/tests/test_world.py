from ghsim.scenario import FaultSpec, default_scenario
from ghsim.world import World


def quick_scenario(duration=3000.0, **soil):
    sc = default_scenario()
    sc.sim.duration = duration
    for k, v in soil.items():
        setattr(sc.soil, k, v)
    return sc


def test_two_runs_identical_files(tmp_path):
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        sc = quick_scenario(7200.0)
        w = World(sc, event_log_path=d / "events.log", outbox_path=d / "outbox.jsonl")
        w.submit("plc", "run", issued_by="test")
        w.run()
        csv = w.gateway.export_csv(0, sc.sim.duration)
        w.close()
        outs.append(((d / "events.log").read_bytes(), (d / "outbox.jsonl").read_bytes(), csv))
    assert outs[0] == outs[1]


def test_commands_processed_in_arrival_order():
    w = World(quick_scenario())
    t1 = w.submit("plc", "run", issued_by="alice")
    t2 = w.submit("plc", "manual", issued_by="bob")
    t3 = w.submit("actuator", "set", {"actuator": "lamp", "state": True}, issued_by="alice")
    w.step()
    assert t1.accepted and t2.accepted and t3.accepted
    msgs = [e.message for e in w.events.events if "command" in e.message]
    assert msgs.index("command plc/run by alice accepted") < msgs.index(
        "command plc/manual by bob accepted") < msgs.index(
        "command actuator/set by alice accepted")


def test_manual_lamp_reaches_physical_actuator():
    w = World(quick_scenario())
    w.submit("plc", "run")
    w.submit("plc", "manual")
    w.submit("actuator", "set", {"actuator": "lamp", "state": True})
    w.step()
    w.step()
    assert w.env.actuators.lamp is True


def test_stuck_level_fault_detected_by_plc():
    sc = quick_scenario(100.0)
    sc.upper_tank.initial = 50.0  # between min and middle: stuck max is non-monotone
    sc.faults.append(FaultSpec(10.0, "stuck_level", "upper:max:on"))
    w = World(sc)
    w.submit("plc", "run")
    w.run_until(12.0)
    assert "LevelInconsistency:upper" in w.master.state.faults
    raise_events = [e for e in w.events.events
                    if "fault raised: LevelInconsistency:upper" in e.message]
    assert raise_events and raise_events[0].timestamp == 10.0  # same scan as injection


def test_bus_fault_deenergizes_within_watchdog_plus_one_cycle():
    sc = quick_scenario(2000.0, initial_tension=80.0)  # dry: waters once telemetry is in
    sc.faults.append(FaultSpec(1000.0, "bus_fault", "asi", 10.0))
    w = World(sc)
    w.run_until(950.0)      # first sample instant has passed
    w.submit("plc", "run")
    w.run_until(999.0)
    assert w.env.actuators.irrigation_valve is True  # watering when fault hits
    watchdog = sc.fieldbus.watchdog_timeout
    deadline = 1000.0 + watchdog + sc.sim.tick
    off_at = None
    while w.clock.now < 1020.0:
        w.step()
        states = w.slave.actuator_states()
        if off_at is None and not any(
                (states["pump"], states["feed_valve"], states["irrigation_valve"])):
            off_at = w.clock.now
    assert off_at is not None and off_at <= deadline
    # after the fault window the link recovers and outputs follow again
    assert not w.slave.watchdog_expired


def test_float_stuck_overflow_scenario_closes_mains():
    sc = quick_scenario(4000.0)
    sc.buffer_tank.initial = sc.buffer_tank.max_level - 0.5
    sc.faults.append(FaultSpec(5.0, "float_stuck", "demanding"))
    w = World(sc)
    w.submit("plc", "run")
    overflow_scan = None
    while w.clock.now < sc.sim.duration:
        w.step()
        if "OverflowRisk" in w.master.state.faults:
            overflow_scan = w.clock.now
            break
    assert overflow_scan is not None
    assert w.master.output_word & 0b0001_0000  # mains_close energized same scan
    flags = w.env.read_level_sensors("buffer")
    assert flags[2] is True


def test_node_dead_fault_silences_node():
    sc = quick_scenario(2000.0)
    sc.faults.append(FaultSpec(0.0, "node_dead", "3"))
    w = World(sc)
    w.run()
    nodes_seen = {e["node_id"] for e in w.gateway.latest_block(w.clock.now)}
    assert 3 not in nodes_seen
    assert nodes_seen == {1, 2, 4, 5, 6}


def test_watering_span_bookkeeping():
    sc = quick_scenario(3000.0, initial_tension=80.0)
    sc.control.irrigation_duration = 120.0
    w = World(sc)
    w.run_until(950.0)
    w.submit("plc", "run")
    w.run()
    spans = w.watering_spans
    assert spans, "expected at least one watering episode"
    for start, end in spans:
        assert abs((end - start) - 120.0) <= sc.sim.tick + sc.sim.tick


def test_status_snapshot_consistent_with_words():
    w = World(quick_scenario())
    w.submit("plc", "run")
    for _ in range(5):
        w.step()
    status = w.status()
    word = status["slave"]["applied_word"]
    acts = status["actuators"]
    assert acts["pump"] == bool(word & 1)
    assert acts["feed_valve"] == bool(word & 2)
    assert acts["irrigation_valve"] == bool(word & 4)
    assert status["plc"]["mode"] == "Run"
    assert len(status["snapshot"]["zones"]) == 6


def test_speed_factor_never_changes_results():
    # the speed knob is pacing only; the kernel ignores it entirely
    sc1, sc2 = quick_scenario(2000.0), quick_scenario(2000.0)
    w1, w2 = World(sc1), World(sc2)
    w1.clock.speed = 0.0
    w2.clock.speed = 3600.0
    w1.run()
    w2.run()
    assert w1.events.events == w2.events.events
    assert w1.gateway.raw_rows() == w2.gateway.raw_rows()

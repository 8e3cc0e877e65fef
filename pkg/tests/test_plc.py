import itertools

from ghsim import fieldbus as fb
from ghsim.plc import (
    ACT_MANUAL,
    FAULT_BUS,
    FAULT_DRYRUN,
    FAULT_LEVEL,
    FAULT_OVERFLOW,
    FAULT_STALE,
    MODE_RUN,
    MasterPlc,
    PHASE_IDLE,
    PHASE_LOCKOUT,
    PHASE_WATERING,
    PUMP_FILLING,
    PUMP_OFF,
    SlavePlc,
)
from ghsim.scenario import default_scenario
from ghsim.simkernel import CommandTicket, EventLog, SimClock


class FakeMpi:
    def __init__(self):
        self.last_block = None
        self.last_block_at = None

    def set_tensions(self, values, at, age=0.0):
        self.last_block = [
            {"node_id": i + 1, "kind": "soil_moisture", "value": v, "age": age}
            for i, v in enumerate(values)
        ]
        self.last_block_at = at


FULL = (True, True, True)
MID = (True, True, False)
LOW = (True, False, False)
EMPTY = (False, False, False)


def make_master(sc=None):
    sc = sc or default_scenario()
    clock = SimClock(sc.sim.tick, sc.sim.epoch)
    events = EventLog(clock)
    mpi = FakeMpi()
    master = MasterPlc(sc, events, mpi, sc.fieldbus.watchdog_timeout)
    return master, mpi, events


def run_cmd(master, target, action, args=None):
    ticket = CommandTicket(target, action, args or {})
    master.handle_commands([ticket], 0.0, MID)
    return ticket


def start_running(master, actuation="auto"):
    t1 = CommandTicket("plc", "run")
    t2 = CommandTicket("plc", actuation)
    master.handle_commands([t1, t2], 0.0, MID)


def scan(master, now, level_buffer=MID, level_upper=MID, float_demanding=True,
         input_word=0, commands=None):
    return master.scan(now, commands or [], level_buffer, level_upper,
                       float_demanding, input_word)


# -- average ---------------------------------------------------------------


def test_average_of_fresh_values():
    master, mpi, _ = make_master()
    mpi.set_tensions([40.0, 50.0, 60.0], at=900.0)
    assert master.average_tension(900.0) == 50.0


def test_average_excludes_stale_entries():
    master, mpi, _ = make_master()
    mpi.last_block = [
        {"node_id": 1, "kind": "soil_moisture", "value": 40.0, "age": 0.0},
        {"node_id": 2, "kind": "soil_moisture", "value": 90.0, "age": 9999.0},
    ]
    mpi.last_block_at = 900.0
    assert master.average_tension(900.0) == 40.0


def test_average_none_when_all_stale_raises_fault():
    master, mpi, _ = make_master()
    mpi.set_tensions([40.0], at=0.0, age=9999.0)
    start_running(master)
    scan(master, 1.0)
    assert master.average_tension(1.0) is None
    assert FAULT_STALE in master.state.faults


# -- irrigation FSM -----------------------------------------------------------


def test_dry_average_starts_watering():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([65.0] * 6, at=900.0)
    word = scan(master, 900.0)
    st = master.state
    assert st.irrigation_phase == PHASE_WATERING
    assert st.phase_remaining == master.params.irrigation_duration
    assert word & fb.BIT_IRRIGATION_VALVE


def test_watering_ends_into_lockout():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([65.0] * 6, at=900.0)
    duration = int(master.params.irrigation_duration)
    t = 900.0
    word = scan(master, t)
    for i in range(duration):
        t += 1.0
        word = scan(master, t)
    assert master.state.irrigation_phase == PHASE_LOCKOUT
    assert not word & fb.BIT_IRRIGATION_VALVE


def test_watering_span_equals_duration_within_one_scan():
    master, mpi, events = make_master()
    start_running(master)
    mpi.set_tensions([65.0] * 6, at=900.0)
    on_at = off_at = None
    t = 900.0
    for _ in range(500):
        word = scan(master, t)
        if word & fb.BIT_IRRIGATION_VALVE and on_at is None:
            on_at = t
        if on_at is not None and not word & fb.BIT_IRRIGATION_VALVE and off_at is None:
            off_at = t
            break
        t += 1.0
    assert on_at is not None and off_at is not None
    assert abs((off_at - on_at) - master.params.irrigation_duration) <= master.scan_period


def test_stop_mode_outputs_all_zero():
    master, mpi, _ = make_master()
    mpi.set_tensions([200.0] * 6, at=900.0)
    word = scan(master, 900.0, level_buffer=FULL, level_upper=EMPTY)
    assert word == 0


def test_no_start_during_lockout_or_low_upper_tank():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([65.0] * 6, at=900.0)
    master.state.irrigation_phase = PHASE_LOCKOUT
    master.state.phase_remaining = 100.0
    scan(master, 900.0)
    assert master.state.irrigation_phase == PHASE_LOCKOUT
    master.state.irrigation_phase = PHASE_IDLE
    scan(master, 901.0, level_upper=EMPTY)
    assert master.state.irrigation_phase == PHASE_IDLE


def test_no_watering_restart_before_lockout_elapses():
    # hysteresis: two watering starts can never be closer than
    # irrigation_duration + lockout
    sc = default_scenario()
    sc.control.irrigation_duration = 20.0
    sc.control.lockout = 60.0
    master, mpi, _ = make_master(sc)
    start_running(master)
    starts = []
    tension = 59.0
    for t in range(900, 4000):
        if t % 30 == 0:
            mpi.set_tensions([tension] * 6, at=float(t))
        tension += 0.05  # slowly drying, always re-triggers after lockout
        before = master.state.irrigation_phase
        scan(master, float(t))
        if before != PHASE_WATERING and master.state.irrigation_phase == PHASE_WATERING:
            starts.append(t)
    assert len(starts) >= 2
    for a, b in zip(starts, starts[1:]):
        assert b - a >= sc.control.irrigation_duration + sc.control.lockout


# -- tank FSM ---------------------------------------------------------------


def test_filling_starts_when_upper_low_and_buffer_ok():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([20.0] * 6, at=900.0)
    word = scan(master, 900.0, level_buffer=MID, level_upper=EMPTY)
    assert master.state.pump_phase == PUMP_FILLING
    assert word & fb.BIT_PUMP and word & fb.BIT_FEED_VALVE


def test_dry_run_protection_stops_pump():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([20.0] * 6, at=900.0)
    scan(master, 900.0, level_buffer=MID, level_upper=EMPTY)
    word = scan(master, 901.0, level_buffer=EMPTY, level_upper=EMPTY)
    assert master.state.pump_phase == PUMP_OFF
    assert FAULT_DRYRUN in master.state.faults
    assert not word & fb.BIT_PUMP


def test_filling_stops_at_upper_max():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([20.0] * 6, at=900.0)
    scan(master, 900.0, level_buffer=FULL, level_upper=EMPTY)
    word = scan(master, 901.0, level_buffer=FULL, level_upper=FULL)
    assert master.state.pump_phase == PUMP_OFF
    assert not word & fb.BIT_PUMP


# -- fault detection --------------------------------------------------------


def test_non_monotone_flags_raise_level_inconsistency_same_scan():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([20.0] * 6, at=900.0)
    scan(master, 900.0, level_upper=(True, False, True))
    assert f"{FAULT_LEVEL}:upper" in master.state.faults


def test_overflow_risk_energizes_mains_close_same_scan():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([20.0] * 6, at=900.0)
    word = scan(master, 900.0, level_buffer=FULL, float_demanding=True)
    assert FAULT_OVERFLOW in master.state.faults
    assert word & fb.BIT_MAINS_CLOSE


def test_healthy_inputs_raise_nothing():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([20.0] * 6, at=900.0)
    scan(master, 900.0, level_buffer=MID, level_upper=MID, float_demanding=True)
    assert master.state.faults == {}


def test_bus_timeout_after_missing_input():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([20.0] * 6, at=900.0)
    scan(master, 900.0, input_word=0)
    for t in range(901, 906):
        scan(master, float(t), input_word=None)
    assert FAULT_BUS in master.state.faults


def test_faults_latch_until_ack_after_resolution():
    master, mpi, _ = make_master()
    start_running(master)
    mpi.set_tensions([20.0] * 6, at=900.0)
    scan(master, 900.0, level_upper=(True, False, True))
    assert f"{FAULT_LEVEL}:upper" in master.state.faults
    # condition persists: ack does not clear
    scan(master, 901.0, level_upper=(True, False, True),
         commands=[CommandTicket("plc", "ack_faults")])
    assert f"{FAULT_LEVEL}:upper" in master.state.faults
    # condition resolved but not acked: still latched
    scan(master, 902.0, level_upper=MID)
    assert f"{FAULT_LEVEL}:upper" in master.state.faults
    # resolved + acked: cleared
    scan(master, 903.0, level_upper=MID, commands=[CommandTicket("plc", "ack_faults")])
    assert f"{FAULT_LEVEL}:upper" not in master.state.faults


# -- slave logic --------------------------------------------------------------


def make_slave():
    sc = default_scenario()
    return SlavePlc(sc, EventLog(SimClock()), sc.fieldbus.watchdog_timeout)


def test_lamp_on_at_night():
    slave = make_slave()
    slave.exchange(fb.BIT_WATCHDOG, 1.0)
    slave.tick(1.0, solar=0.0)
    assert slave.lamp_physical is True


def test_lamp_off_in_daylight():
    slave = make_slave()
    slave.exchange(fb.BIT_WATCHDOG, 1.0)
    slave.tick(1.0, solar=800.0)
    assert slave.lamp_physical is False


def test_master_lamp_bit_wins_at_noon():
    slave = make_slave()
    slave.exchange(fb.BIT_LAMP | fb.BIT_WATCHDOG, 1.0)
    slave.tick(1.0, solar=800.0)
    assert slave.lamp_physical is True


def test_lamp_hysteresis_between_thresholds():
    slave = make_slave()
    slave.exchange(fb.BIT_WATCHDOG, 1.0)
    slave.tick(1.0, solar=0.0)       # below on-threshold: on
    assert slave.lamp_physical
    slave.tick(2.0, solar=30.0)      # between thresholds: hold state
    assert slave.lamp_physical
    slave.tick(3.0, solar=100.0)     # above off-threshold: off
    assert not slave.lamp_physical
    slave.tick(4.0, solar=30.0)      # between thresholds again: stays off
    assert not slave.lamp_physical


# -- manual commands ---------------------------------------------------------


def test_manual_pump_accepted_with_water():
    master, mpi, _ = make_master()
    start_running(master, actuation="manual")
    ticket = CommandTicket("actuator", "set", {"actuator": "pump", "state": True})
    word = scan(master, 900.0, level_buffer=MID, commands=[ticket])
    assert ticket.accepted is True
    assert word & fb.BIT_PUMP


def test_actuator_command_rejected_in_auto():
    master, mpi, _ = make_master()
    start_running(master, actuation="auto")
    ticket = CommandTicket("actuator", "set", {"actuator": "pump", "state": True})
    scan(master, 900.0, commands=[ticket])
    assert ticket.accepted is False
    assert ticket.reason == "ModeIsAuto"


def test_manual_pump_rejected_when_buffer_dry():
    master, mpi, _ = make_master()
    start_running(master, actuation="manual")
    ticket = CommandTicket("actuator", "set", {"actuator": "pump", "state": True})
    word = master.scan(900.0, [ticket], EMPTY, MID, True, 0)
    assert ticket.accepted is False
    assert ticket.reason == "PumpDryRun"
    assert FAULT_DRYRUN in master.state.faults
    assert not word & fb.BIT_PUMP


def test_running_manual_pump_stopped_when_buffer_drops():
    master, mpi, _ = make_master()
    start_running(master, actuation="manual")
    ticket = CommandTicket("actuator", "set", {"actuator": "pump", "state": True})
    word = scan(master, 900.0, level_buffer=MID, commands=[ticket])
    assert word & fb.BIT_PUMP
    word = scan(master, 901.0, level_buffer=EMPTY)
    assert not word & fb.BIT_PUMP
    assert FAULT_DRYRUN in master.state.faults


def test_param_update_validated_and_logged():
    master, _, events = make_master()
    good = CommandTicket("params", "update", {"irrigation_duration": 600})
    scan(master, 900.0, commands=[good])
    assert good.accepted is True
    assert master.params.irrigation_duration == 600.0
    assert any("parameters updated" in e.message for e in events.events)

    bad = CommandTicket("params", "update", {"wet_limit": 70.0})
    scan(master, 901.0, commands=[bad])
    assert bad.accepted is False
    assert "wet_limit" in bad.reason
    assert master.params.wet_limit == 30.0


def test_unknown_param_rejected():
    master, _, _ = make_master()
    bad = CommandTicket("params", "update", {"warp_speed": 9})
    scan(master, 900.0, commands=[bad])
    assert bad.accepted is False and "warp_speed" in bad.reason


# -- safety properties ----------------------------------------------------------


def monotone_flag_combos():
    return [(False, False, False), (True, False, False), (True, True, False), (True, True, True)]


def test_pump_never_energized_with_buffer_below_min_exhaustive():
    # small-state walk: every mode/actuation/phase/flag/average combination
    averages = [None, 10.0, 45.0, 65.0]
    for mode, actuation, pump_phase, irr_phase, b_flags, u_flags, avg, demand in itertools.product(
            ("run", "stop"), ("auto", "manual"), (PUMP_OFF, PUMP_FILLING),
            (PHASE_IDLE, PHASE_WATERING, PHASE_LOCKOUT),
            monotone_flag_combos(), monotone_flag_combos(), averages, (False, True)):
        master, mpi, _ = make_master()
        t1, t2 = CommandTicket("plc", mode), CommandTicket("plc", actuation)
        master.handle_commands([t1, t2], 0.0, MID)
        master.state.pump_phase = pump_phase
        master.state.irrigation_phase = irr_phase
        master.state.phase_remaining = 50.0
        master.state.manual_demands["pump"] = demand
        if avg is not None:
            mpi.set_tensions([avg] * 6, at=900.0)
        word = master.scan(900.0, [], b_flags, u_flags, True, 0)
        if not b_flags[0]:
            assert not word & fb.BIT_PUMP, (
                f"pump on with dry buffer: {mode}/{actuation} {pump_phase}/{irr_phase} avg={avg}")


def test_every_output_bit_change_has_event_same_scan():
    master, mpi, events = make_master()
    start_running(master)
    mpi.set_tensions([65.0] * 6, at=900.0)
    prev_word = master.output_word
    t = 900.0
    for i in range(1200):
        before = len(events.events)
        word = scan(master, t, level_upper=MID if i < 600 else EMPTY)
        changed = (word ^ prev_word) & ~fb.BIT_WATCHDOG
        if changed:
            new_msgs = [e.message for e in events.events[before:]]
            for name, bit in fb.ACTUATOR_BITS.items():
                if changed & bit:
                    assert any(f"output {name}" in m for m in new_msgs)
        prev_word = word
        t += 1.0

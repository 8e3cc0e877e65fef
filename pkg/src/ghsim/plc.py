"""Soft PLCs: the master scan-cycle program and the actuator slave.

The master executes read -> fault detection -> tank FSM -> irrigation FSM ->
output assembly once per scan period. All abnormal conditions become latched
faults (cleared only by operator acknowledgement after the condition is
gone), never exceptions. Every state transition and every actuator bit change
appends an event; the watchdog toggle alternates by design each cycle and is
deliberately not logged.

The slave applies the master's output word verbatim, mirrors it back as the
confirmation word, runs the local night-light rule, and de-energizes every
output if the master's watchdog toggle goes quiet for longer than the
watchdog timeout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import fieldbus
from .scenario import ControlConfig, ScenarioValidationError, Scenario, validate_control
from .simkernel import CommandTicket, EventLog

ControlParams = ControlConfig  # the scenario section is the live parameter block

MODE_RUN = "Run"
MODE_STOP = "Stop"
ACT_AUTO = "Auto"
ACT_MANUAL = "Manual"

PHASE_IDLE = "Idle"
PHASE_WATERING = "Watering"
PHASE_LOCKOUT = "Lockout"
PUMP_OFF = "Off"
PUMP_FILLING = "Filling"

FAULT_STALE = "StaleTelemetry"
FAULT_LEVEL = "LevelInconsistency"
FAULT_DRYRUN = "PumpDryRun"
FAULT_OVERFLOW = "OverflowRisk"
FAULT_BUS = "BusTimeout"

MANUAL_ACTUATORS = ("pump", "feed_valve", "irrigation_valve", "lamp")

_LEVEL_INDEX = {"min": 0, "middle": 1, "max": 2}


@dataclass
class ControlState:
    mode: str = MODE_STOP
    actuation: str = ACT_AUTO
    irrigation_phase: str = PHASE_IDLE
    phase_remaining: float = 0.0
    pump_phase: str = PUMP_OFF
    faults: dict[str, float] = field(default_factory=dict)  # fault key -> first seen
    last_avg_tension: float | None = None
    manual_demands: dict[str, bool] = field(default_factory=lambda: {a: False for a in MANUAL_ACTUATORS})


class MasterPlc:
    """Scan-cycle controller for irrigation, tank filling and fault handling."""

    def __init__(self, scenario: Scenario, events: EventLog, mpi_link, watchdog_timeout: float):
        self.params: ControlParams = replace(scenario.control)
        self.events = events
        self.mpi = mpi_link
        self.watchdog_timeout = watchdog_timeout
        self.scan_period = scenario.sim.scan_period
        self.state = ControlState()
        self.output_word = 0
        self._toggle = 0
        self._last_input_at: float | None = 0.0
        self._conditions: dict[str, bool] = {}
        self.scans = 0

    # -- telemetry ------------------------------------------------------------

    def average_tension(self, now: float) -> float | None:
        """Mean of fresh soil-moisture channels; None when everything is stale."""
        block, received_at = self.mpi.last_block, self.mpi.last_block_at
        if not block:
            return None
        limit = self.params.staleness_limit
        since_rx = now - received_at
        total, n = 0.0, 0
        for entry in block:
            if entry["kind"] == "soil_moisture" and entry["age"] + since_rx <= limit:
                total += entry["value"]
                n += 1
        return total / n if n else None

    # -- commands ---------------------------------------------------------------

    def handle_commands(self, commands: list[CommandTicket], now: float,
                        level_buffer: tuple[bool, bool, bool]):
        for cmd in commands:
            accepted, reason = self._apply_command(cmd, now, level_buffer)
            cmd.resolve(accepted, reason)
            origin = cmd.issued_by or "?"
            if accepted:
                self.events.append("info", "plc",
                                   f"command {cmd.target}/{cmd.action} by {origin} accepted")
            else:
                self.events.append("warn", "plc",
                                   f"command {cmd.target}/{cmd.action} by {origin} rejected({reason})")

    def _apply_command(self, cmd: CommandTicket, now: float,
                       level_buffer: tuple[bool, bool, bool]) -> tuple[bool, str | None]:
        st = self.state
        if cmd.target == "plc":
            action = cmd.action
            if action == "run":
                self._set_mode(MODE_RUN)
            elif action == "stop":
                self._set_mode(MODE_STOP)
            elif action == "auto":
                self._set_actuation(ACT_AUTO)
            elif action == "manual":
                self._set_actuation(ACT_MANUAL)
            elif action == "ack_faults":
                self._ack_faults(now)
            else:
                return False, f"UnknownAction:{action}"
            return True, None

        if cmd.target == "actuator":
            name = cmd.args.get("actuator")
            demand = bool(cmd.args.get("state"))
            if name not in MANUAL_ACTUATORS:
                return False, f"UnknownActuator:{name}"
            if st.mode != MODE_RUN:
                return False, "ModeIsStop"
            if st.actuation != ACT_MANUAL:
                return False, "ModeIsAuto"
            if name == "pump" and demand and not level_buffer[0]:
                self._raise_fault(FAULT_DRYRUN, now)
                return False, "PumpDryRun"
            st.manual_demands[name] = demand
            return True, None

        if cmd.target == "params":
            return self._update_params(cmd.args)

        return False, f"UnknownTarget:{cmd.target}"

    def _set_mode(self, mode: str):
        if mode == self.state.mode:
            return
        self.state.mode = mode
        self.events.append("info", "plc", f"mode -> {mode}")
        if mode == MODE_STOP:
            self._reset_automation("stop commanded")

    def _set_actuation(self, actuation: str):
        if actuation == self.state.actuation:
            return
        self.state.actuation = actuation
        self.events.append("info", "plc", f"actuation -> {actuation}")
        if actuation == ACT_MANUAL:
            self.state.manual_demands = {a: False for a in MANUAL_ACTUATORS}
            self._reset_automation("manual actuation")
        else:
            self._reset_automation("auto actuation")

    def _reset_automation(self, why: str):
        st = self.state
        if st.irrigation_phase != PHASE_IDLE:
            st.irrigation_phase = PHASE_IDLE
            st.phase_remaining = 0.0
            self.events.append("info", "plc", f"irrigation -> Idle ({why})")
        if st.pump_phase != PUMP_OFF:
            st.pump_phase = PUMP_OFF
            self.events.append("info", "plc", f"tank filling -> Off ({why})")

    def _ack_faults(self, now: float):
        st = self.state
        cleared = [key for key in st.faults if not self._conditions.get(key, False)]
        for key in cleared:
            del st.faults[key]
            self.events.append("info", "plc", f"fault {key} acknowledged and cleared")
        if not cleared:
            self.events.append("info", "plc", "fault acknowledgement: no clearable faults")

    def _update_params(self, updates: dict) -> tuple[bool, str | None]:
        candidate = replace(self.params)
        for key, value in updates.items():
            if not hasattr(candidate, key):
                return False, f"UnknownParam:{key}"
            current = getattr(candidate, key)
            if isinstance(current, float) and isinstance(value, (int, float)):
                value = float(value)
            if type(value) is not type(current):
                return False, f"BadType:{key}"
            setattr(candidate, key, value)
        try:
            validate_control(candidate)
        except ScenarioValidationError as exc:
            return False, str(exc)
        changes = ", ".join(
            f"{k}: {getattr(self.params, k)} -> {getattr(candidate, k)}"
            for k in updates
        )
        self.params = candidate
        self.events.append("info", "plc", f"parameters updated ({changes})")
        return True, None

    # -- faults ---------------------------------------------------------------

    def _raise_fault(self, key: str, now: float):
        if key not in self.state.faults:
            self.state.faults[key] = now
            self.events.append("fault", "plc", f"fault raised: {key}")

    def detect_faults(self, now: float, avg: float | None,
                      level_buffer, level_upper, float_demanding: bool):
        st = self.state
        cond: dict[str, bool] = {}
        cond[FAULT_STALE] = avg is None
        for tank, flags in (("buffer", level_buffer), ("upper", level_upper)):
            lo, mid, hi = flags
            cond[f"{FAULT_LEVEL}:{tank}"] = (hi and not mid) or (mid and not lo)
        cond[FAULT_OVERFLOW] = level_buffer[2] and float_demanding
        missing_for = now - self._last_input_at if self._last_input_at is not None else float("inf")
        cond[FAULT_BUS] = missing_for > self.watchdog_timeout
        # dry-run is raised at its trigger instant by the protections below;
        # the standing condition is "pump demanded while the buffer is dry"
        cond[FAULT_DRYRUN] = (not level_buffer[0]) and (
            st.pump_phase == PUMP_FILLING
            or (st.actuation == ACT_MANUAL and st.manual_demands["pump"])
        )

        self._conditions = cond
        if st.mode == MODE_RUN:
            for key, active in cond.items():
                if active:
                    self._raise_fault(key, now)

    # -- tank FSM -----------------------------------------------------------------

    def tank_control(self, now: float, level_buffer, level_upper):
        st, p = self.state, self.params
        upper_start = level_upper[_LEVEL_INDEX[p.pump_start_level]]
        upper_stop = level_upper[_LEVEL_INDEX[p.pump_stop_level]]
        buffer_ok = level_buffer[0]
        if st.pump_phase == PUMP_OFF:
            if not upper_start and buffer_ok:
                st.pump_phase = PUMP_FILLING
                self.events.append("info", "plc", "tank filling -> Filling (upper tank low)")
        else:
            if not buffer_ok:
                st.pump_phase = PUMP_OFF
                self._conditions[FAULT_DRYRUN] = True
                self._raise_fault(FAULT_DRYRUN, now)
                self.events.append("warn", "plc", "tank filling -> Off (buffer below min, dry-run protection)")
            elif upper_stop:
                st.pump_phase = PUMP_OFF
                self.events.append("info", "plc", "tank filling -> Off (upper tank full)")

    # -- irrigation FSM --------------------------------------------------------------

    def irrigation_control(self, now: float, avg: float | None, level_upper):
        st, p = self.state, self.params
        if st.irrigation_phase == PHASE_WATERING:
            st.phase_remaining -= self.scan_period
            if st.phase_remaining <= 0:
                st.irrigation_phase = PHASE_LOCKOUT
                st.phase_remaining = p.lockout
                self.events.append("info", "plc", "irrigation -> Lockout (duration elapsed)")
            return
        if st.irrigation_phase == PHASE_LOCKOUT:
            st.phase_remaining -= self.scan_period
            if st.phase_remaining <= 0:
                st.irrigation_phase = PHASE_IDLE
                st.phase_remaining = 0.0
                self.events.append("info", "plc", "irrigation -> Idle (lockout elapsed)")
            return
        # Idle: start only with fresh telemetry, a dry average, water available
        # above the upper tank's min sensor, and no standing faults.
        if (avg is not None and avg >= p.dry_limit and avg > p.wet_limit
                and level_upper[0] and not st.faults):
            st.irrigation_phase = PHASE_WATERING
            st.phase_remaining = p.irrigation_duration
            self.events.append(
                "info", "plc",
                f"irrigation -> Watering (avg tension {avg:.1f} >= {p.dry_limit:g})")

    # -- scan ----------------------------------------------------------------------

    def scan(self, now: float, commands: list[CommandTicket],
             level_buffer, level_upper, float_demanding: bool,
             input_word: int | None) -> int:
        """One master cycle; returns the output word for the cyclic exchange."""
        self.scans += 1
        st = self.state
        if commands:
            self.handle_commands(commands, now, level_buffer)

        if input_word is not None:
            self._last_input_at = now
        avg = self.average_tension(now)
        st.last_avg_tension = avg
        self.detect_faults(now, avg, level_buffer, level_upper, float_demanding)

        word = 0
        if st.mode == MODE_RUN:
            if st.actuation == ACT_AUTO:
                self.tank_control(now, level_buffer, level_upper)
                self.irrigation_control(now, avg, level_upper)
                if st.pump_phase == PUMP_FILLING:
                    word |= fieldbus.BIT_PUMP | fieldbus.BIT_FEED_VALVE
                if st.irrigation_phase == PHASE_WATERING:
                    word |= fieldbus.BIT_IRRIGATION_VALVE
            else:
                demands = st.manual_demands
                if demands["pump"] and not level_buffer[0]:
                    demands["pump"] = False
                    self._conditions[FAULT_DRYRUN] = True
                    self._raise_fault(FAULT_DRYRUN, now)
                    self.events.append("warn", "plc", "manual pump stopped (buffer below min)")
                if demands["pump"]:
                    word |= fieldbus.BIT_PUMP
                if demands["feed_valve"]:
                    word |= fieldbus.BIT_FEED_VALVE
                if demands["irrigation_valve"]:
                    word |= fieldbus.BIT_IRRIGATION_VALVE
                if demands["lamp"]:
                    word |= fieldbus.BIT_LAMP
            if FAULT_OVERFLOW in st.faults:
                word |= fieldbus.BIT_MAINS_CLOSE  # corrective: shut the supply
            self._toggle ^= 1
            if self._toggle:
                word |= fieldbus.BIT_WATCHDOG

        changed = (word ^ self.output_word) & ~fieldbus.BIT_WATCHDOG
        if changed:
            for name, bit in fieldbus.ACTUATOR_BITS.items():
                if changed & bit:
                    state_s = "on" if word & bit else "off"
                    self.events.append("info", "plc", f"output {name} {state_s}")
        self.output_word = word
        return word

    # -- introspection -----------------------------------------------------------

    def snapshot(self) -> dict:
        st = self.state
        return {
            "mode": st.mode,
            "actuation": st.actuation,
            "irrigation_phase": st.irrigation_phase,
            "phase_remaining": max(0.0, st.phase_remaining),
            "pump_phase": st.pump_phase,
            "faults": [{"kind": k, "since": t} for k, t in sorted(st.faults.items())],
            "last_avg_tension": st.last_avg_tension,
            "manual_demands": dict(st.manual_demands),
            "output_word": self.output_word,
        }


class SlavePlc:
    """Actuator slave: applies the master word, mirrors it, guards with a
    watchdog, and runs the local lighting rule."""

    def __init__(self, scenario: Scenario, events: EventLog, watchdog_timeout: float):
        self.events = events
        self.watchdog_timeout = watchdog_timeout
        self.lamp_on_solar = scenario.control.lamp_on_solar
        self.lamp_off_solar = scenario.control.lamp_off_solar
        self.commanded = 0
        self.applied = 0
        self._last_toggle: int | None = None
        self._last_toggle_change = 0.0
        self.watchdog_expired = False
        self._lamp_local = False
        self.lamp_physical = False

    def exchange(self, output_word: int, now: float) -> int:
        toggle = 1 if output_word & fieldbus.BIT_WATCHDOG else 0
        if self._last_toggle is None or toggle != self._last_toggle:
            self._last_toggle_change = now
            if self.watchdog_expired:
                self.watchdog_expired = False
                self.events.append("info", "slave", "watchdog restored, outputs follow master again")
        self._last_toggle = toggle
        self.commanded = output_word
        if not self.watchdog_expired:
            self.applied = output_word
        return self.applied

    def tick(self, now: float, solar: float):
        """One slave cycle: watchdog supervision plus the lighting rule."""
        if not self.watchdog_expired and now - self._last_toggle_change > self.watchdog_timeout:
            self.watchdog_expired = True
            self.applied = 0
            self.events.append("warn", "slave", "watchdog expired, all outputs de-energized")
        if solar < self.lamp_on_solar:
            self._lamp_local = True
        elif solar > self.lamp_off_solar:
            self._lamp_local = False
        if self.watchdog_expired:
            self.lamp_physical = False
        else:
            self.lamp_physical = bool(self.applied & fieldbus.BIT_LAMP) or self._lamp_local

    def actuator_states(self) -> dict:
        w = self.applied
        return {
            "pump": bool(w & fieldbus.BIT_PUMP),
            "feed_valve": bool(w & fieldbus.BIT_FEED_VALVE),
            "irrigation_valve": bool(w & fieldbus.BIT_IRRIGATION_VALVE),
            "lamp": self.lamp_physical,
            "mains_close": bool(w & fieldbus.BIT_MAINS_CLOSE),
        }

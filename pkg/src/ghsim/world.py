"""Assembled simulation: all subsystems driven in a fixed per-tick order.

Order per tick (a breaking change if reordered): environment physics ->
mesh network -> gateway -> fieldbus transport -> PLCs. External commands
enter through the serialized queue and are drained at the start of the
master scan; actuator states applied by the slave take effect in the
environment on the next tick.

The fault-injection schedule from the scenario is applied here by opening
and closing windows on the affected subsystem (stuck level flags, stuck
float switch, bus fault, frame corruption, dead node).
"""

from __future__ import annotations

from .envsim import EnvSim
from .fieldbus import AsiLink, MpiLink
from .gateway import Gateway
from .meshnet import MeshNet
from .plc import MasterPlc, SlavePlc
from .scenario import Scenario
from .simkernel import CommandQueue, CommandTicket, Event, EventLog, RngHub, SimClock


class World:
    def __init__(self, scenario: Scenario, event_log_path=None, store_path=None, outbox_path=None):
        self.scenario = scenario
        self.clock = SimClock(scenario.sim.tick, scenario.sim.epoch)
        self.rng = RngHub(scenario.sim.seed)
        self.events = EventLog(self.clock, event_log_path)
        self.commands = CommandQueue()

        self.env = EnvSim(scenario, self.rng, self.events)
        self.mesh = MeshNet(scenario, self.rng, self.events)
        self.gateway = Gateway(scenario, self.clock, store_path, outbox_path)
        self.mpi = MpiLink(scenario.fieldbus.retransmit_limit, self.rng.stream("mpi-corrupt"))
        self.slave = SlavePlc(scenario, self.events, scenario.fieldbus.watchdog_timeout)
        self.asi = AsiLink(self.slave)
        self.master = MasterPlc(scenario, self.events, self.mpi, scenario.fieldbus.watchdog_timeout)

        self._pending_block: list[dict] | None = None
        self._last_input_word: int | None = 0
        self._next_scan = scenario.sim.scan_period
        self._faults = sorted(scenario.faults, key=lambda f: f.time)
        self._fault_idx = 0
        self._active_faults: list = []
        self._next_fault_boundary = self._faults[0].time if self._faults else float("inf")
        self._watering_spans: list[tuple[float, float]] = []
        self._watering_started: float | None = None

    # -- fault windows ----------------------------------------------------------

    def _apply_fault_windows(self, now: float):
        changed = False
        while self._fault_idx < len(self._faults) and self._faults[self._fault_idx].time <= now:
            f = self._faults[self._fault_idx]
            self._fault_idx += 1
            self._active_faults.append(f)
            self._fault_on(f)
            self.events.append("warn", "simkernel", f"fault injected: {f.kind} {f.target}")
            changed = True
        still = []
        for f in self._active_faults:
            if now >= f.end:
                self._fault_off(f)
                self.events.append("info", "simkernel", f"fault injection ended: {f.kind} {f.target}")
                changed = True
            else:
                still.append(f)
        self._active_faults = still
        if changed or self._fault_idx < len(self._faults):
            nxt = self._faults[self._fault_idx].time if self._fault_idx < len(self._faults) else float("inf")
            for f in self._active_faults:
                nxt = min(nxt, f.end)
            self._next_fault_boundary = nxt
        else:
            self._next_fault_boundary = min((f.end for f in self._active_faults), default=float("inf"))

    def _fault_on(self, f):
        if f.kind == "stuck_level":
            tank, level, value = f.target.split(":")
            self.env.stuck_flags[(tank, level)] = value == "on"
        elif f.kind == "float_stuck":
            self.env.float_forced = f.target == "demanding"
        elif f.kind == "bus_fault":
            self.asi.fault_active = True
        elif f.kind == "mpi_corrupt":
            self.mpi.corrupt_active = True
        elif f.kind == "node_dead":
            self.mesh.nodes[int(f.target)].forced_dead = True

    def _fault_off(self, f):
        if f.kind == "stuck_level":
            tank, level, _ = f.target.split(":")
            self.env.stuck_flags.pop((tank, level), None)
        elif f.kind == "float_stuck":
            self.env.float_forced = None
        elif f.kind == "bus_fault":
            self.asi.fault_active = False
        elif f.kind == "mpi_corrupt":
            self.mpi.corrupt_active = False
        elif f.kind == "node_dead":
            self.mesh.nodes[int(f.target)].forced_dead = False

    # -- stepping -------------------------------------------------------------

    def step(self) -> list[Event]:
        """Advance the clock one tick and every subsystem exactly once."""
        before = len(self.events.events)
        now = self.clock.advance()
        dt = self.clock.tick

        if now >= self._next_fault_boundary:
            self._apply_fault_windows(now)

        # 1. environment physics (uses actuator states from the previous tick)
        self.env.advance(now, dt)

        # 2. mesh sampling and forwarding
        packets = self.mesh.advance(now, self.env)

        # 3. gateway ingest, rollups, alerts; queue a telemetry push
        self.gateway.advance(now, packets)
        if packets:
            block = self.gateway.latest_block(now)
            if block:
                self._pending_block = block

        # 4. fieldbus transport: framed telemetry toward the master
        if self._pending_block is not None:
            self.mpi.push_telemetry(self._pending_block, now)
            self._pending_block = None

        # 5. PLCs: master scan, cyclic exchange, slave cycle, actuator write-back
        if now >= self._next_scan:
            self._next_scan += self.scenario.sim.scan_period
            commands = self.commands.drain()
            word = self.master.scan(
                now, commands,
                self.env.read_level_sensors("buffer"),
                self.env.read_level_sensors("upper"),
                self.env.float_demands_fill(),
                self._last_input_word,
            )
            self._last_input_word = self.asi.cyclic_exchange(word, now)
        self.slave.tick(now, self.env.climate.solar)
        applied = self.slave.actuator_states()
        act = self.env.actuators
        act.pump = applied["pump"]
        act.feed_valve = applied["feed_valve"]
        act.irrigation_valve = applied["irrigation_valve"]
        act.lamp = applied["lamp"]
        act.mains_close = applied["mains_close"]

        if act.irrigation_valve:
            if self._watering_started is None:
                self._watering_started = now
        elif self._watering_started is not None:
            self._watering_spans.append((self._watering_started, now))
            self._watering_started = None

        return self.events.events[before:]

    def run_until(self, sim_time: float):
        while self.clock.now < sim_time:
            self.step()

    def run(self):
        self.run_until(self.scenario.sim.duration)

    # -- external command entry ---------------------------------------------------

    def submit(self, target: str, action: str, args: dict | None = None,
               issued_by: str = "") -> CommandTicket:
        ticket = CommandTicket(target, action, args or {}, issued_by, self.clock.now)
        self.commands.put(ticket)
        return ticket

    # -- introspection ---------------------------------------------------------------

    @property
    def watering_spans(self) -> list[tuple[float, float]]:
        """Closed (start, end) intervals during which the irrigation valve was
        physically energized at the slave."""
        return list(self._watering_spans)

    def status(self) -> dict:
        clock = self.clock
        return {
            "sim": {
                "now": clock.now,
                "time": clock.iso(),
                "tick": clock.tick,
                "duration": self.scenario.sim.duration,
            },
            "plc": self.master.snapshot(),
            "actuators": self.slave.actuator_states(),
            "slave": {
                "watchdog_expired": self.slave.watchdog_expired,
                "applied_word": self.slave.applied,
            },
            "tanks": [
                {
                    "tank_id": t.tank_id,
                    "volume": round(t.volume, 3),
                    "capacity": t.capacity,
                    "fill_fraction": round(t.fill_fraction, 4),
                    "levels": dict(zip(("min", "middle", "max"),
                                       self.env.read_level_sensors(t.tank_id))),
                }
                for t in (self.env.buffer, self.env.upper)
            ],
            "readings": self.gateway.latest_block(clock.now),
            "snapshot": self.env.render_snapshot(),
        }

    def close(self):
        self.events.close()
        self.gateway.close()

    def flush(self):
        self.events.flush()
        self.gateway.flush()

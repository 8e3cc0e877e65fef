"""Simulation host: one world, one driver, many readers.

SimHost owns the world and is the only thing that steps it. It can run
headless to a target time on the calling thread, or on a background pacing
thread for the service. Pacing (pause/resume/speed) changes playback rate
only; results are identical for any speed because the kernel never sees
wall time.

All mutations funnel through the world's serialized command queue. When the
pacing thread is running, ``post_command`` blocks until the next scan
resolves the ticket; without a thread it steps the world itself, which keeps
in-process tests fully deterministic.
"""

from __future__ import annotations

import threading
import time

from .scenario import Scenario
from .simkernel import CommandTicket
from .world import World

COMMAND_TIMEOUT = 30.0  # wall seconds to wait for a scan to pick a command up


class SimHost:
    def __init__(self, scenario: Scenario, event_log_path=None, store_path=None,
                 outbox_path=None):
        self.world = World(scenario, event_log_path, store_path, outbox_path)
        self.lock = threading.RLock()
        self.paused = False
        self.speed = 1.0           # sim seconds per wall second; 0 = free run
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._wake = threading.Event()
        self.finished = False

    # -- driving ----------------------------------------------------------------

    def run_headless(self, until: float | None = None, progress=None):
        """Step on the calling thread until `until` (default: scenario end)."""
        world = self.world
        target = world.scenario.sim.duration if until is None else until
        next_progress = 86400.0
        while world.clock.now < target:
            with self.lock:
                world.step()
            if progress and world.clock.now >= next_progress:
                progress(world.clock.now)
                next_progress += 86400.0
        self.finished = world.clock.now >= world.scenario.sim.duration

    def start(self):
        """Run the pacing loop on a background thread."""
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._pace, name="ghsim-loop", daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        self._wake.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def _pace(self):
        world = self.world
        duration = world.scenario.sim.duration
        anchor_wall = time.monotonic()
        anchor_sim = world.clock.now
        while not self._stop.is_set():
            if world.clock.now >= duration:
                self.finished = True
                self._wake.wait(timeout=0.2)
                self._wake.clear()
                continue
            if self.paused:
                self._wake.wait(timeout=0.2)
                self._wake.clear()
                anchor_wall = time.monotonic()
                anchor_sim = world.clock.now
                continue
            speed = self.speed
            if speed == 0.0:
                with self.lock:
                    for _ in range(2000):
                        if world.clock.now >= duration:
                            break
                        world.step()
                continue
            target = anchor_sim + (time.monotonic() - anchor_wall) * speed
            if target > duration:
                target = duration
            stepped = False
            with self.lock:
                while world.clock.now < target:
                    world.step()
                    stepped = True
            if not stepped:
                deficit = (world.clock.now + world.clock.tick - anchor_sim) / speed \
                    - (time.monotonic() - anchor_wall)
                if deficit > 0:
                    time.sleep(min(deficit, 0.1))

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    # -- commands -------------------------------------------------------------------

    def post_command(self, target: str, action: str, args: dict | None = None,
                     issued_by: str = "") -> CommandTicket:
        ticket = self.world.submit(target, action, args, issued_by)
        if self.running:
            ticket.done.wait(timeout=COMMAND_TIMEOUT if not self.paused else 0.05)
        else:
            # no driver thread: process synchronously for determinism
            with self.lock:
                limit = int(self.world.scenario.sim.scan_period / self.world.clock.tick) + 1
                for _ in range(limit):
                    if ticket.done.is_set() or self.world.clock.now >= self.world.scenario.sim.duration:
                        break
                    self.world.step()
        return ticket

    # -- pacing control -----------------------------------------------------------------

    def sim_control(self, action: str, value: float | None = None) -> dict:
        if action == "pause":
            self.paused = True
        elif action == "resume":
            self.paused = False
            self._wake.set()
        elif action == "speed":
            if value is None or value < 0:
                raise ValueError("speed must be >= 0 (0 = as fast as possible)")
            self.speed = float(value)
            self.world.clock.speed = float(value)
            self._wake.set()
        else:
            raise ValueError(f"unknown sim action {action!r}")
        return {"paused": self.paused, "speed": self.speed}

    # -- reads ------------------------------------------------------------------------

    def status(self) -> dict:
        with self.lock:
            s = self.world.status()
        s["sim"]["paused"] = self.paused
        s["sim"]["speed"] = self.speed
        s["sim"]["finished"] = self.finished or self.world.clock.now >= self.world.scenario.sim.duration
        return s

    def recent_events(self, limit: int = 10) -> list:
        with self.lock:
            return self.world.events.recent(limit)

    def export_csv(self, from_ts: float, to_ts: float, node_id=None, kind=None) -> str:
        with self.lock:
            return self.world.gateway.export_csv(from_ts, to_ts, node_id, kind)

    def get_params(self) -> dict:
        from dataclasses import asdict
        with self.lock:
            return asdict(self.world.master.params)

    def close(self):
        self.stop()
        self.world.close()

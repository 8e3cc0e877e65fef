"""Deterministic simulation kernel: clock, seeded random streams, commands, events.

Everything time- or chance-related in the simulator flows through this module.
The clock advances in fixed steps; every random draw comes from a stream that
is derived from the scenario seed plus a text label, so two runs of the same
scenario are bit-for-bit identical. Wall-clock pacing lives in the runner, not
here: the kernel has no idea how fast real time passes.
"""

from __future__ import annotations

import hashlib
import random
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone


class KernelError(Exception):
    pass


# ---------------------------------------------------------------------------
# Clock


class SimClock:
    """Fixed-step simulation clock.

    ``now`` is always ``tick_index * tick`` so repeated addition cannot drift.
    ``speed`` is the target acceleration (sim seconds per wall second, 0 means
    free-running); it is carried here for introspection but only the runner
    acts on it.
    """

    __slots__ = ("tick", "tick_index", "speed", "epoch")

    def __init__(self, tick: float = 1.0, epoch: datetime | None = None, speed: float = 0.0):
        if tick <= 0:
            raise KernelError("tick must be > 0")
        self.tick = float(tick)
        self.tick_index = 0
        self.speed = speed
        self.epoch = epoch or datetime(2021, 6, 1, tzinfo=timezone.utc)
        if self.epoch.tzinfo is None:
            self.epoch = self.epoch.replace(tzinfo=timezone.utc)

    @property
    def now(self) -> float:
        return self.tick_index * self.tick

    def advance(self) -> float:
        self.tick_index += 1
        return self.now

    def to_utc(self, sim_time: float | None = None) -> datetime:
        t = self.now if sim_time is None else sim_time
        return self.epoch + timedelta(seconds=t)

    def iso(self, sim_time: float | None = None) -> str:
        return self.to_utc(sim_time).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# Random streams


def rng_stream(seed: int, label: str) -> random.Random:
    """Return a deterministic RNG for (seed, label).

    The same pair always yields the same sequence; distinct labels give
    independent streams (one per concern: "radio-loss", "sensor-noise", ...).
    Derivation hashes the pair so nearby seeds do not produce correlated
    generators.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))


class RngHub:
    """Per-scenario cache of labeled random streams."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, random.Random] = {}

    def stream(self, label: str) -> random.Random:
        s = self._streams.get(label)
        if s is None:
            s = rng_stream(self.seed, label)
            self._streams[label] = s
        return s


# ---------------------------------------------------------------------------
# Events

SEVERITIES = ("info", "warn", "fault")


@dataclass(frozen=True)
class Event:
    timestamp: float          # sim seconds
    seq: int                  # total order within a run
    severity: str             # info | warn | fault
    source: str               # module that emitted it
    message: str


class EventLog:
    """Append-only event log, optionally mirrored to a file.

    File format (one line per event, documented interface):
    ISO-8601-timestamp<TAB>severity<TAB>source<TAB>message
    """

    def __init__(self, clock: SimClock, path=None):
        self.clock = clock
        self.events: list[Event] = []
        self._fh = open(path, "w", encoding="utf-8", newline="\n") if path else None

    def append(self, severity: str, source: str, message: str, timestamp: float | None = None) -> Event:
        if severity not in SEVERITIES:
            raise KernelError(f"unknown severity {severity!r}")
        ts = self.clock.now if timestamp is None else timestamp
        ev = Event(ts, len(self.events), severity, source, message)
        self.events.append(ev)
        if self._fh is not None:
            self._fh.write(f"{self.clock.iso(ts)}\t{severity}\t{source}\t{message}\n")
        return ev

    def recent(self, limit: int = 10) -> list[Event]:
        if limit <= 0:
            return []
        return list(reversed(self.events[-limit:]))

    def close(self):
        if self._fh is not None:
            self._fh.flush()
            self._fh.close()
            self._fh = None

    def flush(self):
        if self._fh is not None:
            self._fh.flush()


# ---------------------------------------------------------------------------
# Command queue


@dataclass
class CommandTicket:
    """A queued external command and its eventual outcome.

    ``done`` is set by the simulation thread once the command was processed
    at a scan boundary; other threads may block on it.
    """

    target: str               # plc | actuator | params
    action: str
    args: dict = field(default_factory=dict)
    issued_by: str = ""
    issued_at: float = 0.0    # sim time at enqueue
    done: threading.Event = field(default_factory=threading.Event, repr=False)
    accepted: bool | None = None
    reason: str | None = None

    def resolve(self, accepted: bool, reason: str | None = None):
        self.accepted = accepted
        self.reason = reason
        self.done.set()


class CommandQueue:
    """FIFO queue bridging service threads into the simulation loop.

    Producers enqueue from any thread; the kernel drains the whole queue once
    per tick, which serializes interleaved clients by arrival order.
    """

    def __init__(self):
        self._q: deque[CommandTicket] = deque()
        self._lock = threading.Lock()

    def put(self, ticket: CommandTicket) -> CommandTicket:
        with self._lock:
            self._q.append(ticket)
        return ticket

    def drain(self) -> list[CommandTicket]:
        with self._lock:
            items = list(self._q)
            self._q.clear()
        return items

    def __len__(self):
        with self._lock:
            return len(self._q)

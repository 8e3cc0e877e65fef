"""Gateway: raw telemetry store, calendar rollups, alerts, CSV export.

Storage is a single SQLite file (or an in-memory database for throwaway
runs) with an append-only raw table and derived rollup tables. Rollups are
a pure function of the raw rows: hour, day and month aggregates are
materialized when their calendar boundary elapses and can be recomputed
from scratch at any time; means use exact summation so recomputation is
bit-identical.

CSV export is the external data interface: UTF-8, LF endings, header
``timestamp,node_id,port,sensor,value,unit``, ISO-8601 UTC timestamps,
values in shortest-decimal form with at most 3 fractional digits. Alert
rules write edge-triggered notifications to a JSONL outbox file.
"""

from __future__ import annotations

import json
import math
import sqlite3
from dataclasses import dataclass
from datetime import datetime, timezone

from . import sensors
from .meshnet import MeshPacket, Reading
from .scenario import AlertSpec, Scenario
from .simkernel import SimClock


class ExportRangeError(ValueError):
    pass


@dataclass(frozen=True)
class RollupRecord:
    period: str         # hour | day | month
    period_start: int   # sim seconds, calendar aligned
    node_id: int
    kind: str
    mean: float
    min: float
    max: float
    count: int


@dataclass(frozen=True)
class Notification:
    timestamp: float
    rule_id: str
    node_id: int
    kind: str
    value: float
    message: str


def format_value(v: float) -> str:
    """Shortest decimal text with at most 3 fractional digits."""
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class Gateway:
    def __init__(self, scenario: Scenario, clock: SimClock, store_path=None, outbox_path=None):
        self.sc = scenario
        self.clock = clock
        self.db = sqlite3.connect(str(store_path) if store_path else ":memory:",
                                  check_same_thread=False)
        self.db.execute("PRAGMA journal_mode=MEMORY")
        self.db.execute("PRAGMA synchronous=OFF")
        self._create_tables()
        self.latest: dict[tuple[int, str], tuple[float, float, int]] = {}  # (node,kind) -> (value, ts, port)
        self.rules: list[AlertSpec] = list(scenario.alerts)
        self._episodes: set[tuple[str, int]] = set()
        self.notifications: list[Notification] = []
        self._outbox = open(outbox_path, "w", encoding="utf-8", newline="\n") if outbox_path else None
        self.stored_count = 0
        self.quarantined_count = 0

        epoch = clock.epoch
        self._hour_end = self._sim_time(_ceil_hour(epoch))
        self._day_end = self._sim_time(_ceil_day(epoch))
        self._month_end = self._sim_time(_ceil_month(epoch))

    # -- storage ------------------------------------------------------------

    def _create_tables(self):
        self.db.executescript(
            """
            CREATE TABLE IF NOT EXISTS raw (
                ts INTEGER NOT NULL,
                node_id INTEGER NOT NULL,
                port INTEGER NOT NULL,
                kind TEXT NOT NULL,
                value REAL NOT NULL,
                seq INTEGER NOT NULL,
                PRIMARY KEY (node_id, seq)
            );
            CREATE INDEX IF NOT EXISTS raw_ts ON raw (ts, node_id, port);
            CREATE TABLE IF NOT EXISTS quarantine (
                ts INTEGER, node_id INTEGER, port INTEGER, kind TEXT, value REAL, reason TEXT
            );
            CREATE TABLE IF NOT EXISTS rollup (
                period TEXT NOT NULL,
                period_start INTEGER NOT NULL,
                node_id INTEGER NOT NULL,
                kind TEXT NOT NULL,
                mean REAL NOT NULL, min REAL NOT NULL, max REAL NOT NULL, count INTEGER NOT NULL,
                PRIMARY KEY (period, period_start, node_id, kind)
            );
            """
        )

    def _sim_time(self, dt: datetime) -> int:
        return int(round((dt - self.clock.epoch).total_seconds()))

    def _utc(self, sim_time: float) -> datetime:
        return self.clock.to_utc(sim_time)

    # -- ingest ---------------------------------------------------------------

    def ingest(self, packets: list[MeshPacket]) -> int:
        """Validate and append readings; returns the number stored."""
        stored = 0
        fresh: list[Reading] = []
        cur = self.db.cursor()
        for packet in packets:
            for r in packet.readings:
                k = sensors.BY_NAME.get(r.kind)
                if k is None or not k.in_range(r.value):
                    self.quarantined_count += 1
                    cur.execute(
                        "INSERT INTO quarantine VALUES (?,?,?,?,?,?)",
                        (int(r.timestamp), r.node_id, r.port, r.kind, r.value, "out of range"),
                    )
                    continue
                cur.execute(
                    "INSERT OR IGNORE INTO raw VALUES (?,?,?,?,?,?)",
                    (int(r.timestamp), r.node_id, r.port, r.kind, r.value, r.seq),
                )
                if cur.rowcount:
                    stored += 1
                    fresh.append(r)
                    prev = self.latest.get((r.node_id, r.kind))
                    if prev is None or r.timestamp >= prev[1]:
                        self.latest[(r.node_id, r.kind)] = (r.value, r.timestamp, r.port)
        self.stored_count += stored
        if fresh:
            self.evaluate_alerts(fresh)
        return stored

    # -- alerts -----------------------------------------------------------------

    def evaluate_alerts(self, readings: list[Reading]) -> list[Notification]:
        """Edge-triggered rule evaluation; one notification per violation episode."""
        out = []
        for rule in self.rules:
            for r in readings:
                if r.kind != rule.kind:
                    continue
                if rule.scope != "any" and int(rule.scope) != r.node_id:
                    continue
                violating = r.value > rule.threshold if rule.comparator == ">" else r.value < rule.threshold
                key = (rule.rule_id, r.node_id)
                if violating and key not in self._episodes:
                    self._episodes.add(key)
                    k = sensors.BY_NAME[r.kind]
                    note = Notification(
                        r.timestamp, rule.rule_id, r.node_id, r.kind, r.value,
                        f"{rule.rule_id}: node {r.node_id} {r.kind} {format_value(r.value)} {k.unit} "
                        f"{rule.comparator} {format_value(rule.threshold)}",
                    )
                    self.notifications.append(note)
                    out.append(note)
                    if self._outbox:
                        self._outbox.write(json.dumps({
                            "timestamp": self.clock.iso(r.timestamp),
                            "rule_id": rule.rule_id,
                            "node_id": r.node_id,
                            "kind": r.kind,
                            "value": r.value,
                            "message": note.message,
                        }, sort_keys=True) + "\n")
                elif not violating:
                    self._episodes.discard(key)
        return out

    # -- rollups ----------------------------------------------------------------

    def rollup(self, period: str, period_start: int, period_end: int) -> list[RollupRecord]:
        """Aggregate raw rows in [period_start, period_end) and persist them."""
        rows = self.db.execute(
            "SELECT node_id, kind, value FROM raw WHERE ts >= ? AND ts < ? ORDER BY node_id, kind",
            (period_start, period_end),
        ).fetchall()
        groups: dict[tuple[int, str], list[float]] = {}
        for node_id, kind, value in rows:
            groups.setdefault((node_id, kind), []).append(value)
        records = []
        for (node_id, kind), values in sorted(groups.items()):
            records.append(RollupRecord(
                period, period_start, node_id, kind,
                math.fsum(values) / len(values), min(values), max(values), len(values),
            ))
        self.db.executemany(
            "INSERT OR REPLACE INTO rollup VALUES (?,?,?,?,?,?,?,?)",
            [(r.period, r.period_start, r.node_id, r.kind, r.mean, r.min, r.max, r.count) for r in records],
        )
        return records

    def advance(self, now: float, packets: list[MeshPacket]):
        if packets:
            self.ingest(packets)
        while now >= self._hour_end:
            start = self._sim_time(_floor_hour(self._utc(self._hour_end - 1)))
            self.rollup("hour", start, self._hour_end)
            self._hour_end = self._sim_time(_ceil_hour(self._utc(self._hour_end + 1)))
        while now >= self._day_end:
            start = self._sim_time(_floor_day(self._utc(self._day_end - 1)))
            self.rollup("day", start, self._day_end)
            self._day_end = self._sim_time(_ceil_day(self._utc(self._day_end + 1)))
        while now >= self._month_end:
            start = self._sim_time(_floor_month(self._utc(self._month_end - 1)))
            self.rollup("month", start, self._month_end)
            self._month_end = self._sim_time(_ceil_month(self._utc(self._month_end + 1)))

    def rollups(self, period: str | None = None) -> list[RollupRecord]:
        q = "SELECT period, period_start, node_id, kind, mean, min, max, count FROM rollup"
        args: tuple = ()
        if period:
            q += " WHERE period = ?"
            args = (period,)
        q += " ORDER BY period, period_start, node_id, kind"
        return [RollupRecord(*row) for row in self.db.execute(q, args)]

    def recompute_rollups(self) -> list[RollupRecord]:
        """Drop every rollup row and rebuild from raw rows (purity check)."""
        periods = [
            (p, start) for p, start in
            self.db.execute("SELECT DISTINCT period, period_start FROM rollup")
        ]
        self.db.execute("DELETE FROM rollup")
        for period, start in periods:
            end = self._period_end(period, start)
            self.rollup(period, start, end)
        return self.rollups()

    def _period_end(self, period: str, start: int) -> int:
        dt = self._utc(start)
        if period == "hour":
            return self._sim_time(_ceil_hour(dt + _SECOND))
        if period == "day":
            return self._sim_time(_ceil_day(dt + _SECOND))
        return self._sim_time(_ceil_month(dt + _SECOND))

    # -- export -------------------------------------------------------------------

    def export_csv(self, from_ts: float, to_ts: float, node_id: int | None = None,
                   kind: str | None = None) -> str:
        """CSV of raw rows with ts in [from_ts, to_ts], sorted (ts, node, port)."""
        if from_ts > to_ts:
            raise ExportRangeError(f"export range is inverted: from {from_ts} > to {to_ts}")
        q = "SELECT ts, node_id, port, kind, value FROM raw WHERE ts >= ? AND ts <= ?"
        args: list = [int(from_ts), int(to_ts)]
        if node_id is not None:
            q += " AND node_id = ?"
            args.append(node_id)
        if kind is not None:
            q += " AND kind = ?"
            args.append(kind)
        q += " ORDER BY ts, node_id, port"
        lines = ["timestamp,node_id,port,sensor,value,unit"]
        iso = self.clock.iso
        for ts, nid, port, kind_name, value in self.db.execute(q, args):
            lines.append(f"{iso(ts)},{nid},{port},{kind_name},{format_value(value)},"
                         f"{sensors.BY_NAME[kind_name].unit}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse_csv(text: str, epoch: datetime) -> list[tuple[int, int, int, str, float]]:
        """Inverse of export_csv: rows of (ts, node_id, port, kind, value)."""
        lines = text.strip("\n").split("\n")
        if lines[0] != "timestamp,node_id,port,sensor,value,unit":
            raise ValueError(f"unexpected CSV header: {lines[0]!r}")
        rows = []
        for line in lines[1:]:
            ts_s, nid, port, kind_name, value, _unit = line.split(",")
            dt = datetime.strptime(ts_s, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
            rows.append((int((dt - epoch).total_seconds()), int(nid), int(port), kind_name, float(value)))
        return rows

    def raw_rows(self) -> list[tuple[int, int, int, str, float]]:
        return list(self.db.execute(
            "SELECT ts, node_id, port, kind, value FROM raw ORDER BY ts, node_id, port"))

    # -- freshest values ------------------------------------------------------------

    def latest_block(self, now: float) -> list[dict]:
        """Freshest value per (node, kind) with staleness age in seconds."""
        return [
            {"node_id": nid, "kind": kind, "value": value, "port": port, "age": now - ts}
            for (nid, kind), (value, ts, port) in sorted(self.latest.items())
        ]

    def close(self):
        if self._outbox:
            self._outbox.flush()
            self._outbox.close()
            self._outbox = None
        self.db.commit()
        self.db.close()

    def flush(self):
        if self._outbox:
            self._outbox.flush()
        self.db.commit()


# -- calendar helpers -----------------------------------------------------------

from datetime import timedelta as _timedelta  # noqa: E402

_SECOND = _timedelta(seconds=1)


def _floor_hour(dt: datetime) -> datetime:
    return dt.replace(minute=0, second=0, microsecond=0)


def _ceil_hour(dt: datetime) -> datetime:
    f = _floor_hour(dt)
    return f if f == dt else f + _timedelta(hours=1)


def _floor_day(dt: datetime) -> datetime:
    return dt.replace(hour=0, minute=0, second=0, microsecond=0)


def _ceil_day(dt: datetime) -> datetime:
    f = _floor_day(dt)
    return f if f == dt else f + _timedelta(days=1)


def _floor_month(dt: datetime) -> datetime:
    return dt.replace(day=1, hour=0, minute=0, second=0, microsecond=0)


def _ceil_month(dt: datetime) -> datetime:
    f = _floor_month(dt)
    if f == dt:
        return f
    return datetime(f.year + (f.month == 12), f.month % 12 + 1, 1, tzinfo=timezone.utc)

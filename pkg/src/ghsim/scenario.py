"""Scenario files: the single source of truth for a simulation run.

A scenario is a plain-text file with two kinds of sections: key/value
sections (``[sim]``, ``[control]``, ``[tank buffer]``, ...) and table
sections where each line is one whitespace-separated row (``[nodes]``,
``[alerts]``, ``[faults]``). ``#`` starts a comment anywhere. The format is
documented in docs/scenario.md; every knob has a default, so the minimal
valid scenario is an empty file plus a [nodes] table.

Parsing reports the offending line and field; validation reports the violated
invariant by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from . import sensors


class ScenarioParseError(Exception):
    def __init__(self, path, line_no, field_name, message):
        self.path = path
        self.line_no = line_no
        self.field = field_name
        super().__init__(f"{path}:{line_no}: field {field_name!r}: {message}")


class ScenarioValidationError(Exception):
    def __init__(self, invariant, message):
        self.invariant = invariant
        super().__init__(f"invariant {invariant!r} violated: {message}")


# ---------------------------------------------------------------------------
# Sections


@dataclass
class SimConfig:
    seed: int = 42
    tick: float = 1.0
    duration: float = 7 * 86400.0
    epoch: datetime = field(default_factory=lambda: datetime(2021, 6, 1, tzinfo=timezone.utc))
    scan_period: float = 1.0   # master PLC scan, seconds


@dataclass
class ClimateConfig:
    temp_mean: float = 24.0
    temp_amplitude: float = 8.0
    humidity_mean: float = 55.0
    humidity_amplitude: float = 25.0
    solar_peak: float = 900.0
    sunrise_hour: float = 6.0
    sunset_hour: float = 18.0
    noise_temp: float = 0.3
    noise_humidity: float = 1.0
    noise_solar: float = 15.0
    noise_refresh: float = 60.0   # seconds between noise redraws


@dataclass
class SoilConfig:
    initial_tension: float = 10.0
    field_capacity_tension: float = 8.0
    dry_rate_solar: float = 2.7e-7     # cbar per (W/m^2 * s)
    dry_rate_temp: float = 4.4e-6      # cbar per (degC over reference * s)
    temp_reference: float = 18.0
    wetting_per_liter: float = 1.0     # cbar drop per delivered liter
    wc_intercept: float = 45.0         # water content at zero tension, %wfv
    wc_slope: float = 0.15             # %wfv lost per cbar
    initial_soil_temp: float = 22.0
    leaf_wetness_base: float = 120.0


@dataclass
class TankConfig:
    capacity: float
    min_level: float
    middle_level: float
    max_level: float
    initial: float
    float_cutoff: float | None = None  # buffer tank only


@dataclass
class HydraulicsConfig:
    mains_rate: float = 0.05     # L/s through the supply valve
    pump_rate: float = 0.2       # L/s buffer -> upper
    gravity_rate: float = 0.1    # L/s upper -> irrigation line


@dataclass
class RadioConfig:
    range_m: float = 45.0
    p_loss: float = 0.05
    max_retries: int = 3
    sample_period: float = 900.0
    noise_frac: float = 0.01     # sensor noise sigma as a fraction of range
    base_position: tuple[float, float] = (0.0, 0.0)


@dataclass
class EnergyConfig:
    initial_battery: float = 1.0
    tx_cost: float = 5e-5        # per transmit attempt (origin or relay)
    idle_per_second: float = 1e-7
    charge_per_solar: float = 2e-8   # battery per (W/m^2 * s)
    refresh: float = 60.0        # seconds between battery integration steps


@dataclass
class ControlConfig:
    dry_limit: float = 60.0
    wet_limit: float = 30.0
    irrigation_duration: float = 300.0
    lockout: float = 3600.0
    pump_start_level: str = "min"    # start filling when upper below this
    pump_stop_level: str = "max"     # stop when upper at/above this
    lamp_on_solar: float = 10.0
    lamp_off_solar: float = 50.0
    staleness_limit: float = 2700.0


@dataclass
class FieldbusConfig:
    watchdog_timeout: float = 3.0
    retransmit_limit: int = 3


@dataclass
class NodeSpec:
    node_id: int
    position: tuple[float, float]
    ports: dict[int, tuple[str, str]]   # port -> (source, kind name); source is zoneN or "climate"


@dataclass
class AlertSpec:
    rule_id: str
    kind: str
    scope: str        # "any" or a node id as text
    comparator: str   # "<" or ">"
    threshold: float


FAULT_KINDS = ("stuck_level", "float_stuck", "bus_fault", "mpi_corrupt", "node_dead")


@dataclass
class FaultSpec:
    time: float
    kind: str
    target: str
    duration: float | None = None   # None = until end of run

    @property
    def end(self) -> float:
        return float("inf") if self.duration is None else self.time + self.duration


@dataclass
class Scenario:
    sim: SimConfig = field(default_factory=SimConfig)
    climate: ClimateConfig = field(default_factory=ClimateConfig)
    soil: SoilConfig = field(default_factory=SoilConfig)
    buffer_tank: TankConfig = field(default_factory=lambda: TankConfig(200.0, 30.0, 100.0, 180.0, 120.0, 170.0))
    upper_tank: TankConfig = field(default_factory=lambda: TankConfig(150.0, 20.0, 75.0, 140.0, 100.0))
    hydraulics: HydraulicsConfig = field(default_factory=HydraulicsConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    fieldbus: FieldbusConfig = field(default_factory=FieldbusConfig)
    nodes: list[NodeSpec] = field(default_factory=list)
    alerts: list[AlertSpec] = field(default_factory=list)
    faults: list[FaultSpec] = field(default_factory=list)

    @property
    def zones(self) -> list[str]:
        names = {src for n in self.nodes for (src, _k) in n.ports.values() if src != "climate"}
        return sorted(names)

    def node(self, node_id: int) -> NodeSpec:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)


def default_scenario() -> Scenario:
    """The bundled six-node layout: one node only reachable through a relay."""
    return load_scenario(Path(__file__).parent / "data" / "default.scenario")


# ---------------------------------------------------------------------------
# Parsing


def _parse_scalar(raw: str, path, line_no, key):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "on", "yes"):
        return True
    if low in ("false", "off", "no"):
        return False
    try:
        if "." in raw or "e" in low:
            return float(raw)
        return int(raw)
    except ValueError:
        pass
    if "T" in raw and raw.endswith("Z"):
        try:
            return datetime.strptime(raw, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
        except ValueError:
            raise ScenarioParseError(path, line_no, key, f"bad datetime {raw!r} (want YYYY-MM-DDTHH:MM:SSZ)")
    return raw


def _num(value, path, line_no, key) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioParseError(path, line_no, key, f"expected a number, got {value!r}")
    return float(value)


_KV_SECTIONS = {
    "sim": (SimConfig, "sim"),
    "climate": (ClimateConfig, "climate"),
    "soil": (SoilConfig, "soil"),
    "hydraulics": (HydraulicsConfig, "hydraulics"),
    "radio": (RadioConfig, "radio"),
    "energy": (EnergyConfig, "energy"),
    "control": (ControlConfig, "control"),
    "fieldbus": (FieldbusConfig, "fieldbus"),
}

_TANK_KEYS = {"capacity", "min", "middle", "max", "initial", "float_cutoff"}


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file, filling every default."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(path, 0, "-", f"cannot read scenario: {exc}")
    sc = parse_scenario_text(text, path)
    validate_scenario(sc)
    return sc


def parse_scenario_text(text: str, path="<string>") -> Scenario:
    sc = Scenario()
    section = None
    tank_overrides: dict[str, dict[str, float]] = {"buffer": {}, "upper": {}}

    for line_no, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue

        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioParseError(path, line_no, "section", f"unterminated section header {line!r}")
            section = line[1:-1].strip().lower()
            parts = section.split()
            if parts[0] == "tank":
                if len(parts) != 2 or parts[1] not in ("buffer", "upper"):
                    raise ScenarioParseError(path, line_no, "section", "tank section must be [tank buffer] or [tank upper]")
            elif section not in _KV_SECTIONS and section not in ("nodes", "alerts", "faults"):
                raise ScenarioParseError(path, line_no, "section", f"unknown section {section!r}")
            continue

        if section is None:
            raise ScenarioParseError(path, line_no, "-", "content before any [section] header")

        if section in _KV_SECTIONS:
            _apply_kv(sc, section, line, path, line_no)
        elif section.startswith("tank "):
            tank_name = section.split()[1]
            key, value = _split_kv(line, path, line_no)
            if key not in _TANK_KEYS:
                raise ScenarioParseError(path, line_no, key, f"unknown tank key; known: {sorted(_TANK_KEYS)}")
            tank_overrides[tank_name][key] = _num(_parse_scalar(value, path, line_no, key), path, line_no, key)
        elif section == "nodes":
            sc.nodes.append(_parse_node_row(line, path, line_no))
        elif section == "alerts":
            sc.alerts.append(_parse_alert_row(line, path, line_no))
        elif section == "faults":
            sc.faults.append(_parse_fault_row(line, path, line_no))

    for name, overrides in tank_overrides.items():
        if not overrides:
            continue
        base = sc.buffer_tank if name == "buffer" else sc.upper_tank
        mapped = {}
        for k, v in overrides.items():
            mapped[{"min": "min_level", "middle": "middle_level", "max": "max_level"}.get(k, k)] = v
        tank = replace(base, **mapped)
        if name == "buffer":
            sc.buffer_tank = tank
        else:
            sc.upper_tank = tank

    return sc


def _split_kv(line, path, line_no):
    if "=" not in line:
        raise ScenarioParseError(path, line_no, "-", f"expected 'key = value', got {line!r}")
    key, _, value = line.partition("=")
    key = key.strip()
    if not key:
        raise ScenarioParseError(path, line_no, "-", "empty key")
    return key, value


_FIELD_ALIASES = {
    ("radio", "range"): "range_m",
    ("soil", "temp_ref"): "temp_reference",
}


def _apply_kv(sc: Scenario, section, line, path, line_no):
    key, value = _split_kv(line, path, line_no)
    key = _FIELD_ALIASES.get((section, key), key)
    cfg = getattr(sc, _KV_SECTIONS[section][1])
    if not hasattr(cfg, key):
        raise ScenarioParseError(path, line_no, key, f"unknown key in [{section}]")
    parsed = _parse_scalar(value, path, line_no, key)
    current = getattr(cfg, key)
    if key == "base_position":
        xy = [p.strip() for p in str(value).split(",")]
        if len(xy) != 2:
            raise ScenarioParseError(path, line_no, key, "expected 'x, y'")
        parsed = (float(xy[0]), float(xy[1]))
    elif isinstance(current, float) and isinstance(parsed, int):
        parsed = float(parsed)
    elif isinstance(current, datetime):
        if not isinstance(parsed, datetime):
            raise ScenarioParseError(path, line_no, key, f"expected a UTC datetime, got {value.strip()!r}")
    elif isinstance(current, (int, float)) and not isinstance(parsed, (int, float)):
        raise ScenarioParseError(path, line_no, key, f"expected a number, got {value.strip()!r}")
    setattr(cfg, key, parsed)


def _parse_node_row(line, path, line_no) -> NodeSpec:
    cols = line.split()
    if len(cols) < 3:
        raise ScenarioParseError(path, line_no, "nodes", "node row needs: id x y [port:kind@source ...]")
    try:
        node_id = int(cols[0])
    except ValueError:
        raise ScenarioParseError(path, line_no, "node_id", f"bad node id {cols[0]!r}")
    try:
        x, y = float(cols[1]), float(cols[2])
    except ValueError:
        raise ScenarioParseError(path, line_no, "position", f"bad coordinates {cols[1]!r} {cols[2]!r}")
    ports: dict[int, tuple[str, str]] = {}
    for spec in cols[3:]:
        if ":" not in spec or "@" not in spec:
            raise ScenarioParseError(path, line_no, "ports", f"bad port spec {spec!r} (want port:kind@source)")
        port_s, _, rest = spec.partition(":")
        kind_name, _, source = rest.partition("@")
        try:
            port = int(port_s)
        except ValueError:
            raise ScenarioParseError(path, line_no, "ports", f"bad port number {port_s!r}")
        if not 1 <= port <= 4:
            raise ScenarioParseError(path, line_no, "ports", f"port {port} outside 1..4")
        if kind_name not in sensors.BY_NAME:
            raise ScenarioParseError(path, line_no, "ports", f"unknown sensor kind {kind_name!r}")
        if port in ports:
            raise ScenarioParseError(path, line_no, "ports", f"port {port} assigned twice")
        ports[port] = (source, kind_name)
    return NodeSpec(node_id, (x, y), ports)


def _parse_alert_row(line, path, line_no) -> AlertSpec:
    cols = line.split()
    if len(cols) != 5:
        raise ScenarioParseError(path, line_no, "alerts", "alert row needs: rule_id kind scope comparator threshold")
    rule_id, kind_name, scope, comparator, threshold_s = cols
    if kind_name not in sensors.BY_NAME:
        raise ScenarioParseError(path, line_no, "kind", f"unknown sensor kind {kind_name!r}")
    if comparator not in ("<", ">"):
        raise ScenarioParseError(path, line_no, "comparator", f"comparator must be < or >, got {comparator!r}")
    try:
        threshold = float(threshold_s)
    except ValueError:
        raise ScenarioParseError(path, line_no, "threshold", f"bad threshold {threshold_s!r}")
    return AlertSpec(rule_id, kind_name, scope, comparator, threshold)


def _parse_fault_row(line, path, line_no) -> FaultSpec:
    cols = line.split()
    if len(cols) not in (3, 4):
        raise ScenarioParseError(path, line_no, "faults", "fault row needs: time kind target [duration]")
    try:
        t = float(cols[0])
    except ValueError:
        raise ScenarioParseError(path, line_no, "time", f"bad time {cols[0]!r}")
    kind_name = cols[1]
    if kind_name not in FAULT_KINDS:
        raise ScenarioParseError(path, line_no, "kind", f"unknown fault kind {kind_name!r}; known: {FAULT_KINDS}")
    duration = None
    if len(cols) == 4:
        try:
            duration = float(cols[3])
        except ValueError:
            raise ScenarioParseError(path, line_no, "duration", f"bad duration {cols[3]!r}")
    return FaultSpec(t, kind_name, cols[2], duration)


# ---------------------------------------------------------------------------
# Validation


def validate_control(c: ControlConfig):
    """Check the controller parameter invariants; raised field names are the
    operator's feedback on a rejected parameter update."""
    if not c.wet_limit < c.dry_limit:
        raise ScenarioValidationError("wet_limit < dry_limit", f"wet {c.wet_limit} vs dry {c.dry_limit}")
    if c.irrigation_duration <= 0:
        raise ScenarioValidationError("irrigation_duration > 0", f"duration {c.irrigation_duration}")
    if c.lockout < 0:
        raise ScenarioValidationError("lockout >= 0", f"lockout {c.lockout}")
    if not c.lamp_off_solar > c.lamp_on_solar:
        raise ScenarioValidationError("lamp_off_solar > lamp_on_solar", f"{c.lamp_off_solar} vs {c.lamp_on_solar}")
    if c.staleness_limit <= 0:
        raise ScenarioValidationError("staleness_limit > 0", f"{c.staleness_limit}")
    for level_key in ("pump_start_level", "pump_stop_level"):
        if getattr(c, level_key) not in ("min", "middle", "max"):
            raise ScenarioValidationError(f"{level_key} in (min, middle, max)", f"{getattr(c, level_key)!r}")


def validate_scenario(sc: Scenario):
    if sc.sim.tick <= 0:
        raise ScenarioValidationError("tick > 0", f"tick = {sc.sim.tick}")
    if sc.sim.duration < 0:
        raise ScenarioValidationError("duration >= 0", f"duration = {sc.sim.duration}")
    if len(sc.nodes) < 1:
        raise ScenarioValidationError("node count >= 1", f"scenario defines {len(sc.nodes)} nodes")
    ids = [n.node_id for n in sc.nodes]
    if len(set(ids)) != len(ids):
        raise ScenarioValidationError("node ids unique", f"duplicate ids in {sorted(ids)}")
    if any(i <= 0 or i > 255 for i in ids):
        raise ScenarioValidationError("node id in 1..255", f"ids {sorted(ids)}")

    for name, tank in (("buffer", sc.buffer_tank), ("upper", sc.upper_tank)):
        if not (0 < tank.min_level < tank.middle_level < tank.max_level <= tank.capacity):
            raise ScenarioValidationError(
                "min < middle < max <= capacity",
                f"{name} tank thresholds ({tank.min_level}, {tank.middle_level}, {tank.max_level}) "
                f"capacity {tank.capacity}",
            )
        if not 0 <= tank.initial <= tank.capacity:
            raise ScenarioValidationError("0 <= volume <= capacity", f"{name} tank initial {tank.initial}")
    if sc.buffer_tank.float_cutoff is None:
        sc.buffer_tank.float_cutoff = sc.buffer_tank.max_level - 10.0
    if not 0 < sc.buffer_tank.float_cutoff <= sc.buffer_tank.capacity:
        raise ScenarioValidationError("0 < float_cutoff <= capacity", f"float_cutoff {sc.buffer_tank.float_cutoff}")

    validate_control(sc.control)

    if not 0 <= sc.radio.p_loss <= 1:
        raise ScenarioValidationError("0 <= p_loss <= 1", f"p_loss {sc.radio.p_loss}")
    if sc.radio.max_retries < 0:
        raise ScenarioValidationError("max_retries >= 0", f"{sc.radio.max_retries}")
    if sc.radio.sample_period <= 0:
        raise ScenarioValidationError("sample_period > 0", f"{sc.radio.sample_period}")

    zone_names = set(sc.zones)
    for alert in sc.alerts:
        k = sensors.BY_NAME[alert.kind]
        if not k.in_range(alert.threshold):
            raise ScenarioValidationError("alert threshold within kind range",
                                          f"rule {alert.rule_id}: {alert.threshold} outside [{k.lo}, {k.hi}]")
        if alert.scope != "any":
            try:
                scope_id = int(alert.scope)
            except ValueError:
                raise ScenarioValidationError("alert scope is 'any' or a node id", f"rule {alert.rule_id}: {alert.scope!r}")
            if scope_id not in ids:
                raise ScenarioValidationError("every referenced node id exists", f"rule {alert.rule_id}: node {scope_id}")

    for f in sc.faults:
        if f.time < 0:
            raise ScenarioValidationError("fault time >= 0", f"{f.kind} at {f.time}")
        if f.kind == "node_dead":
            try:
                target_id = int(f.target)
            except ValueError:
                raise ScenarioValidationError("node_dead target is a node id", f"{f.target!r}")
            if target_id not in ids:
                raise ScenarioValidationError("every referenced node id exists", f"node_dead target {target_id}")
        elif f.kind == "stuck_level":
            parts = f.target.split(":")
            if len(parts) != 3 or parts[0] not in ("buffer", "upper") or parts[1] not in ("min", "middle", "max") \
                    or parts[2] not in ("on", "off"):
                raise ScenarioValidationError("stuck_level target is tank:level:on|off", f"{f.target!r}")
        elif f.kind == "float_stuck":
            if f.target not in ("demanding", "satisfied"):
                raise ScenarioValidationError("float_stuck target is demanding|satisfied", f"{f.target!r}")

    if zone_names and not all(z.startswith("zone") for z in zone_names):
        raise ScenarioValidationError("zone sources named zoneN", f"{sorted(zone_names)}")

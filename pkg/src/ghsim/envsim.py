"""Physical ground truth: climate, per-zone soil, two-tank hydraulics.

This module is the only place where water and weather exist. Sensors read
from it, actuators act on it, and a per-tick mass balance guards the tank
plumbing: buffer delta + upper delta + delivered irrigation + overflow must
equal the mains inflow to within 1e-9 L.

Physics choices are deliberately first-order. Drying is linear in solar
irradiance and in temperature excess over a reference; wetting is linear in
delivered liters; the tank network uses constant volumetric rates. These are
calibration constants from the scenario, not physical claims.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .scenario import Scenario
from .simkernel import EventLog, RngHub


def dew_point(temp_c: float, humidity_pct: float) -> float:
    """Magnus approximation of the dew point, clamped to the sensor range."""
    rh = max(0.01, min(100.0, humidity_pct))
    a, b = 17.62, 243.12
    gamma = math.log(rh / 100.0) + a * temp_c / (b + temp_c)
    td = b * gamma / (a - gamma)
    return min(50.0, max(-10.0, td))


@dataclass
class Climate:
    ambient_temp: float
    humidity: float
    solar: float
    dew_point: float


@dataclass
class PlantZone:
    zone_id: str
    tension: float        # cbar; higher = drier
    soil_temp: float
    water_content: float  # %wfv
    leaf_wetness: float   # counts 0..1024


@dataclass
class TankState:
    tank_id: str
    volume: float
    capacity: float
    min_level: float
    middle_level: float
    max_level: float
    float_cutoff: float | None = None  # buffer only

    @property
    def fill_fraction(self) -> float:
        return self.volume / self.capacity if self.capacity else 0.0


@dataclass
class ActuatorPhys:
    """Energization states. NC valves pass only when energized; the NO mains
    valve blocks only when energized (mains_close)."""

    pump: bool = False
    feed_valve: bool = False
    irrigation_valve: bool = False
    lamp: bool = False
    mains_close: bool = False

    @property
    def mains_passing(self) -> bool:
        return not self.mains_close


class EnvSim:
    """Greenhouse physics advanced once per kernel tick."""

    def __init__(self, scenario: Scenario, rng: RngHub, events: EventLog):
        self.sc = scenario
        self.events = events
        self._rng = rng.stream("climate-noise")
        self._cc = scenario.climate
        self._soil = scenario.soil

        self.climate = Climate(self._cc.temp_mean, self._cc.humidity_mean, 0.0, 0.0)
        self.zones = {
            z: PlantZone(z, self._soil.initial_tension, self._soil.initial_soil_temp,
                         0.0, self._soil.leaf_wetness_base)
            for z in scenario.zones
        }
        bt, ut = scenario.buffer_tank, scenario.upper_tank
        self.buffer = TankState("buffer", bt.initial, bt.capacity, bt.min_level,
                                bt.middle_level, bt.max_level, bt.float_cutoff)
        self.upper = TankState("upper", ut.initial, ut.capacity, ut.min_level,
                               ut.middle_level, ut.max_level)
        self.actuators = ActuatorPhys()

        # fault overrides, managed by the world from the injection schedule
        self.stuck_flags: dict[tuple[str, str], bool] = {}
        self.float_forced: bool | None = None  # True = demanding, False = satisfied

        self._noise = (0.0, 0.0, 0.0)
        self._noise_until = -1.0
        self._overflowing = False
        self.total_overflow = 0.0
        self.total_delivered = 0.0
        self.max_balance_residual = 0.0
        self.last_inflow_per_zone = 0.0
        self._nzones = max(1, len(self.zones))
        self._advance_climate(0.0)
        for zone in self.zones.values():
            self._update_derived(zone)

    # -- climate ------------------------------------------------------------

    def _advance_climate(self, now: float):
        cc = self._cc
        if now >= self._noise_until:
            self._noise = (
                self._rng.gauss(0.0, cc.noise_temp),
                self._rng.gauss(0.0, cc.noise_humidity),
                self._rng.gauss(0.0, cc.noise_solar),
            )
            self._noise_until = now + cc.noise_refresh
        h = (now / 3600.0) % 24.0
        phase = math.sin((h - 9.0) * (math.pi / 12.0))
        temp = cc.temp_mean + cc.temp_amplitude * phase + self._noise[0]
        humidity = cc.humidity_mean - cc.humidity_amplitude * phase + self._noise[1]
        if cc.sunrise_hour < h < cc.sunset_hour:
            span = cc.sunset_hour - cc.sunrise_hour
            solar = cc.solar_peak * math.sin(math.pi * (h - cc.sunrise_hour) / span) + self._noise[2]
            solar = min(1800.0, max(0.0, solar))
        else:
            solar = 0.0
        c = self.climate
        c.ambient_temp = min(65.0, max(-40.0, temp))
        c.humidity = min(100.0, max(0.0, humidity))
        c.solar = solar
        c.dew_point = dew_point(c.ambient_temp, c.humidity)

    # -- hydraulics -----------------------------------------------------------

    def float_demands_fill(self) -> bool:
        if self.float_forced is not None:
            return self.float_forced
        return self.buffer.volume < (self.buffer.float_cutoff or self.buffer.capacity)

    def _advance_hydraulics(self, dt: float) -> float:
        """Move water for one tick; returns liters delivered to irrigation."""
        hy = self.sc.hydraulics
        act = self.actuators
        b, u = self.buffer, self.upper
        b_before, u_before = b.volume, u.volume
        overflow = 0.0

        mains_in = 0.0
        if act.mains_passing and self.float_demands_fill():
            mains_in = hy.mains_rate * dt
            headroom = b.capacity - b.volume
            applied = mains_in if mains_in <= headroom else headroom
            b.volume += applied
            overflow += mains_in - applied

        if act.pump and act.feed_valve and b.volume > 0.0:
            moved = hy.pump_rate * dt
            if moved > b.volume:
                moved = b.volume
            b.volume -= moved
            headroom = u.capacity - u.volume
            into_upper = moved if moved <= headroom else headroom
            u.volume += into_upper
            overflow += moved - into_upper

        delivered = 0.0
        if act.irrigation_valve and u.volume > 0.0:
            delivered = hy.gravity_rate * dt
            if delivered > u.volume:
                delivered = u.volume
            u.volume -= delivered

        residual = (b.volume - b_before) + (u.volume - u_before) + delivered + overflow - mains_in
        if residual < 0.0:
            residual = -residual
        if residual > self.max_balance_residual:
            self.max_balance_residual = residual

        if overflow > 0.0:
            self.total_overflow += overflow
            if not self._overflowing:
                self._overflowing = True
                self.events.append("warn", "envsim", "tank overflow: excess water discarded")
        else:
            self._overflowing = False

        self.total_delivered += delivered
        return delivered

    # -- soil ---------------------------------------------------------------

    def _update_derived(self, zone: PlantZone):
        s = self._soil
        wc = s.wc_intercept - s.wc_slope * zone.tension
        zone.water_content = min(100.0, max(0.0, wc))
        lw = s.leaf_wetness_base + (self.climate.humidity - 50.0) * 8.0
        zone.leaf_wetness = min(1024.0, max(0.0, lw))

    def _advance_soil(self, dt: float, inflow_per_zone: float):
        s = self._soil
        c = self.climate
        temp_excess = c.ambient_temp - s.temp_reference
        if temp_excess < 0.0:
            temp_excess = 0.0
        drying = (s.dry_rate_solar * c.solar + s.dry_rate_temp * temp_excess) * dt
        wetting = s.wetting_per_liter * inflow_per_zone
        soil_track = dt / 21600.0  # soil temperature follows air with ~6 h lag
        for zone in self.zones.values():
            t = zone.tension + drying - wetting
            if t > 240.0:
                t = 240.0
            elif t < s.field_capacity_tension:
                t = s.field_capacity_tension
            zone.tension = t
            zone.soil_temp += (c.ambient_temp - zone.soil_temp) * soil_track
            self._update_derived(zone)

    # -- per-tick entry point -------------------------------------------------

    def advance(self, now: float, dt: float):
        self._advance_climate(now)
        delivered = self._advance_hydraulics(dt)
        inflow_per_zone = delivered / self._nzones
        self.last_inflow_per_zone = inflow_per_zone
        self._advance_soil(dt, inflow_per_zone)

    # -- sensors --------------------------------------------------------------

    def read_level_sensors(self, tank_id: str) -> tuple[bool, bool, bool]:
        tank = self.buffer if tank_id == "buffer" else self.upper
        v = tank.volume
        flags = [v >= tank.min_level, v >= tank.middle_level, v >= tank.max_level]
        if self.stuck_flags:
            for i, level in enumerate(("min", "middle", "max")):
                forced = self.stuck_flags.get((tank_id, level))
                if forced is not None:
                    flags[i] = forced
        return flags[0], flags[1], flags[2]

    def ground_truth(self, source: str, kind_name: str) -> float:
        """Value a sensor of `kind` would observe at `source` (zoneN or climate)."""
        if source == "climate":
            c = self.climate
            return {
                "ambient_temperature": c.ambient_temp,
                "ambient_humidity": c.humidity,
                "dew_point": c.dew_point,
                "solar_radiation": c.solar,
            }[kind_name]
        zone = self.zones[source]
        return {
            "soil_moisture": zone.tension,
            "soil_temperature": zone.soil_temp,
            "water_content": zone.water_content,
            "leaf_wetness": zone.leaf_wetness,
        }[kind_name]

    # -- snapshot ---------------------------------------------------------------

    def render_snapshot(self) -> dict:
        """Schematic scene document for the operator panel (webcam stand-in)."""
        act = self.actuators
        return {
            "climate": {
                "ambient_temp": round(self.climate.ambient_temp, 2),
                "humidity": round(self.climate.humidity, 2),
                "solar": round(self.climate.solar, 2),
                "dew_point": round(self.climate.dew_point, 2),
            },
            "zones": [
                {
                    "zone_id": z.zone_id,
                    "tension": round(z.tension, 2),
                    "soil_temp": round(z.soil_temp, 2),
                    "water_content": round(z.water_content, 2),
                    "leaf_wetness": round(z.leaf_wetness, 1),
                }
                for z in sorted(self.zones.values(), key=lambda z: z.zone_id)
            ],
            "tanks": [
                {
                    "tank_id": t.tank_id,
                    "volume": round(t.volume, 3),
                    "capacity": t.capacity,
                    "fill_fraction": round(t.fill_fraction, 4),
                    "levels": dict(zip(("min", "middle", "max"), self.read_level_sensors(t.tank_id))),
                    **({"float_demanding": self.float_demands_fill()} if t.tank_id == "buffer" else {}),
                }
                for t in (self.buffer, self.upper)
            ],
            "actuators": {
                "pump": act.pump,
                "feed_valve": {"energized": act.feed_valve, "passing": act.feed_valve},
                "irrigation_valve": {"energized": act.irrigation_valve, "passing": act.irrigation_valve},
                "mains_valve": {"energized": act.mains_close, "passing": act.mains_passing},
                "lamp": act.lamp,
            },
        }

"""Sensor channel catalogue: units and reporting ranges.

Eight channels are supported, grouped the way the hardware groups them:
soil probes (moisture tension, temperature, water content), a leaf wetness
grid, and the ambient set (humidity, temperature, dew point, solar). The
range metadata doubles as the gateway's validity filter and the noise scale
reference for simulated sampling.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SensorKind:
    name: str       # stable slug used in scenarios, CSV and telemetry
    code: int       # 1-byte id on the telemetry link
    unit: str
    lo: float
    hi: float

    def clamp(self, value: float) -> float:
        return min(self.hi, max(self.lo, value))

    def in_range(self, value: float) -> bool:
        return self.lo <= value <= self.hi


SOIL_MOISTURE = SensorKind("soil_moisture", 1, "cbar", 0.0, 240.0)
SOIL_TEMPERATURE = SensorKind("soil_temperature", 2, "degC", -40.0, 65.0)
WATER_CONTENT = SensorKind("water_content", 3, "%wfv", 0.0, 100.0)
LEAF_WETNESS = SensorKind("leaf_wetness", 4, "counts", 0.0, 1024.0)
AMBIENT_HUMIDITY = SensorKind("ambient_humidity", 5, "%", 0.0, 100.0)
AMBIENT_TEMPERATURE = SensorKind("ambient_temperature", 6, "degC", -40.0, 65.0)
DEW_POINT = SensorKind("dew_point", 7, "degC", -10.0, 50.0)
SOLAR_RADIATION = SensorKind("solar_radiation", 8, "W/m2", 0.0, 1800.0)

ALL_KINDS = (
    SOIL_MOISTURE,
    SOIL_TEMPERATURE,
    WATER_CONTENT,
    LEAF_WETNESS,
    AMBIENT_HUMIDITY,
    AMBIENT_TEMPERATURE,
    DEW_POINT,
    SOLAR_RADIATION,
)

BY_NAME = {k.name: k for k in ALL_KINDS}
BY_CODE = {k.code: k for k in ALL_KINDS}


def kind(name: str) -> SensorKind:
    try:
        return BY_NAME[name]
    except KeyError:
        raise KeyError(f"unknown sensor kind {name!r}; known: {sorted(BY_NAME)}") from None

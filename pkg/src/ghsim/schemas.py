"""Request/response models for the HTTP API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class LoginRequest(BaseModel):
    username: str
    password: str


class LoginResponse(BaseModel):
    token: str
    expires_in: float
    role: str = "operator"


class EventOut(BaseModel):
    timestamp: float
    time: str          # ISO-8601 UTC, second resolution
    severity: str
    source: str
    message: str


class EventsResponse(BaseModel):
    events: list[EventOut]


class CommandBody(BaseModel):
    target: Literal["plc", "actuator", "params"]
    action: str
    args: dict = Field(default_factory=dict)


class CommandResult(BaseModel):
    accepted: Optional[bool]   # None while still pending (paused simulation)
    reason: Optional[str] = None


class ParamsModel(BaseModel):
    dry_limit: float
    wet_limit: float
    irrigation_duration: float
    lockout: float
    pump_start_level: str
    pump_stop_level: str
    lamp_on_solar: float
    lamp_off_solar: float
    staleness_limit: float


class ParamsUpdate(BaseModel):
    dry_limit: Optional[float] = None
    wet_limit: Optional[float] = None
    irrigation_duration: Optional[float] = None
    lockout: Optional[float] = None
    pump_start_level: Optional[str] = None
    pump_stop_level: Optional[str] = None
    lamp_on_solar: Optional[float] = None
    lamp_off_solar: Optional[float] = None
    staleness_limit: Optional[float] = None

    def changes(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class SimControlBody(BaseModel):
    action: Literal["pause", "resume", "speed"]
    value: Optional[float] = None


class SimControlResult(BaseModel):
    paused: bool
    speed: float

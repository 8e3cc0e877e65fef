// Shapes of the JSON API (docs/api.md in the repository root).

export interface LoginResponse {
  token: string;
  expires_in: number;
  role: string;
}

export interface EventOut {
  timestamp: number;
  time: string; // ISO-8601 UTC
  severity: "info" | "warn" | "fault";
  source: string;
  message: string;
}

export interface FaultOut {
  kind: string;
  since: number;
}

export interface PlcStatus {
  mode: "Run" | "Stop";
  actuation: "Auto" | "Manual";
  irrigation_phase: string;
  phase_remaining: number;
  pump_phase: string;
  faults: FaultOut[];
  last_avg_tension: number | null;
  manual_demands: Record<string, boolean>;
  output_word: number;
}

export interface TankStatus {
  tank_id: string;
  volume: number;
  capacity: number;
  fill_fraction: number;
  levels: { min: boolean; middle: boolean; max: boolean };
  float_demanding?: boolean;
}

export interface ZoneSnapshot {
  zone_id: string;
  tension: number;
  soil_temp: number;
  water_content: number;
  leaf_wetness: number;
}

export interface ValveSnapshot {
  energized: boolean;
  passing: boolean;
}

export interface SceneSnapshot {
  climate: { ambient_temp: number; humidity: number; solar: number; dew_point: number };
  zones: ZoneSnapshot[];
  tanks: TankStatus[];
  actuators: {
    pump: boolean;
    feed_valve: ValveSnapshot;
    irrigation_valve: ValveSnapshot;
    mains_valve: ValveSnapshot;
    lamp: boolean;
  };
}

export interface ReadingOut {
  node_id: number;
  kind: string;
  value: number;
  port: number;
  age: number;
}

export interface Status {
  sim: {
    now: number;
    time: string;
    tick: number;
    duration: number;
    paused: boolean;
    speed: number;
    finished: boolean;
  };
  plc: PlcStatus;
  actuators: Record<string, boolean>;
  slave: { watchdog_expired: boolean; applied_word: number };
  tanks: TankStatus[];
  readings: ReadingOut[];
  snapshot: SceneSnapshot;
}

export interface Params {
  dry_limit: number;
  wet_limit: number;
  irrigation_duration: number;
  lockout: number;
  pump_start_level: string;
  pump_stop_level: string;
  lamp_on_solar: number;
  lamp_off_solar: number;
  staleness_limit: number;
}

export interface CommandResult {
  accepted: boolean | null;
  reason: string | null;
}

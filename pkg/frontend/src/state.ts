// Pure view logic, kept out of the DOM for testability. The panel never
// fabricates state: everything shown traces back to a status or events
// response.

import type { EventOut, Status } from "./types.js";

export const POLL_INTERVAL_MS = 2000;
export const STALE_AFTER_FAILURES = 3;

export interface ViewModel {
  status: Status | null;
  events: EventOut[];
  tensionHistory: number[]; // recent zone-average tension, newest last
  consecutiveFailures: number;
  pending: Set<string>; // control ids with a command in flight
}

export function emptyViewModel(): ViewModel {
  return { status: null, events: [], tensionHistory: [], consecutiveFailures: 0, pending: new Set() };
}

export function actuatorsEnabled(status: Status | null): boolean {
  return !!status && status.plc.mode === "Run" && status.plc.actuation === "Manual";
}

export function isStale(vm: ViewModel): boolean {
  return vm.consecutiveFailures >= STALE_AFTER_FAILURES;
}

export function applyStatus(vm: ViewModel, status: Status): void {
  vm.status = status;
  vm.consecutiveFailures = 0;
  const avg = status.plc.last_avg_tension;
  if (avg !== null && avg !== undefined) {
    vm.tensionHistory.push(avg);
    if (vm.tensionHistory.length > 120) vm.tensionHistory.shift();
  }
}

export function applyFailure(vm: ViewModel): void {
  vm.consecutiveFailures += 1;
}

// "date and hour" for the feed: 2021-06-01T06:30:05Z -> 2021-06-01 06:30:05
export function eventDateHour(ev: EventOut): string {
  return ev.time.replace("T", " ").replace("Z", "");
}

export function faultBadges(status: Status | null): string[] {
  if (!status) return [];
  return status.plc.faults.map((f) => f.kind);
}

export function fmt(value: number | null | undefined, digits = 1): string {
  if (value === null || value === undefined) return "--";
  return value.toFixed(digits);
}

// sparkline path for the recent-tension history (viewBox 0 0 w h)
export function sparklinePath(history: number[], w = 160, h = 36, maxValue = 240): string {
  if (history.length < 2) return "";
  const n = history.length;
  const pts = history.map((v, i) => {
    const x = (i / (n - 1)) * w;
    const y = h - (Math.min(v, maxValue) / maxValue) * h;
    return `${x.toFixed(1)},${y.toFixed(1)}`;
  });
  return `M${pts.join(" L")}`;
}

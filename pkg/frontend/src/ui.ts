// Dashboard assembly and behavior. One in-flight poll at a time; command
// submissions are independent of the poll and show a pending indicator until
// the service reports the controller's verdict.

import { ApiClient } from "./api.js";
import {
  POLL_INTERVAL_MS,
  ViewModel,
  actuatorsEnabled,
  applyFailure,
  applyStatus,
  emptyViewModel,
  eventDateHour,
  faultBadges,
  fmt,
  isStale,
  sparklinePath,
} from "./state.js";
import { renderSchematic } from "./schematic.js";
import type { Params } from "./types.js";

const PARAM_FIELDS: (keyof Params)[] = [
  "dry_limit",
  "wet_limit",
  "irrigation_duration",
  "lockout",
  "lamp_on_solar",
  "lamp_off_solar",
  "staleness_limit",
];

const ACTUATORS = ["pump", "feed_valve", "irrigation_valve", "lamp"] as const;

export interface PanelOptions {
  pollIntervalMs?: number;
  autoPoll?: boolean; // tests drive pollOnce() manually
}

export class Panel {
  vm: ViewModel = emptyViewModel();
  root: HTMLElement;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;
  private polling = false;
  private interval: number;
  private autoPoll: boolean;

  constructor(private client: ApiClient, root: HTMLElement, opts: PanelOptions = {}) {
    this.root = root;
    this.interval = opts.pollIntervalMs ?? POLL_INTERVAL_MS;
    this.autoPoll = opts.autoPoll ?? true;
    this.renderLogin();
  }

  // -- login ------------------------------------------------------------------

  renderLogin(message = ""): void {
    this.stopPolling();
    this.root.innerHTML = `
      <main class="login">
        <h1>Greenhouse control</h1>
        <form id="login-form">
          <label>User <input name="username" autocomplete="username" required/></label>
          <label>Password <input name="password" type="password" autocomplete="current-password" required/></label>
          <button type="submit">Sign in</button>
          <p id="login-error" class="error" role="alert">${message}</p>
        </form>
      </main>`;
    const form = this.root.querySelector<HTMLFormElement>("#login-form")!;
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const username = form.querySelector<HTMLInputElement>("input[name=username]")!.value;
      const password = form.querySelector<HTMLInputElement>("input[name=password]")!.value;
      void this.handleLogin(username, password);
    });
  }

  async handleLogin(username: string, password: string): Promise<boolean> {
    const result = await this.client.login(username, password);
    if (!result.ok) {
      const box = this.root.querySelector("#login-error");
      if (box) box.textContent = result.error;
      return false;
    }
    this.renderDashboard();
    await this.pollOnce();
    await this.loadParams();
    if (this.autoPoll) this.schedulePoll();
    return true;
  }

  // -- dashboard skeleton --------------------------------------------------------

  renderDashboard(): void {
    this.root.innerHTML = `
      <header>
        <h1>Greenhouse control</h1>
        <span id="sim-clock" class="clock">--</span>
        <span id="fault-badges"></span>
        <span id="stale-banner" class="banner" hidden>connection lost, data may be stale</span>
        <button id="logout">Sign out</button>
      </header>
      <main class="dashboard">
        <section class="pane" id="process-pane">
          <h2>Process view</h2>
          <div id="schematic"></div>
          <svg id="sparkline" viewBox="0 0 160 36" aria-label="recent average tension"><path d=""/></svg>
          <div id="plc-state" class="plc-state"></div>
        </section>
        <section class="pane" id="events-pane">
          <h2>Last events</h2>
          <table id="events"><tbody></tbody></table>
        </section>
        <section class="commands" data-section="plc">
          <h2>Controller commands</h2>
          <div class="buttons">
            <button data-cmd="run">Run</button>
            <button data-cmd="stop">Stop</button>
            <button data-cmd="auto">Auto</button>
            <button data-cmd="manual">Manual</button>
            <button data-cmd="ack_faults">Ack faults</button>
          </div>
          <span id="plc-feedback" class="feedback"></span>
        </section>
        <section class="commands" data-section="actuators">
          <h2>Manual actuator control</h2>
          <div class="buttons">
            ${ACTUATORS.map(
              (a) => `
              <span class="actuator" data-actuator-row="${a}">
                <label>${a.replace("_", " ")}</label>
                <button data-actuator="${a}" data-state="on">On</button>
                <button data-actuator="${a}" data-state="off">Off</button>
              </span>`,
            ).join("")}
          </div>
          <span id="actuator-feedback" class="feedback"></span>
        </section>
        <section class="commands" data-section="params">
          <h2>Application parameters</h2>
          <form id="params-form">
            ${PARAM_FIELDS.map(
              (f) => `<label>${f} <input name="${f}" type="number" step="any"/></label>`,
            ).join("")}
            <button type="submit">Apply</button>
            <span id="param-error" class="error" role="alert"></span>
          </form>
        </section>
        <section class="commands" data-section="export">
          <h2>Data export</h2>
          <form id="export-form">
            <label>From <input name="from" placeholder="2021-06-01T00:00:00Z"/></label>
            <label>To <input name="to" placeholder="2021-06-02T00:00:00Z"/></label>
            <label>Node <input name="node" type="number" min="1"/></label>
            <label>Sensor <input name="kind" placeholder="soil_moisture"/></label>
            <button type="submit">Download CSV</button>
            <span id="export-feedback" class="feedback"></span>
          </form>
        </section>
      </main>`;

    this.root.querySelector("#logout")!.addEventListener("click", () => {
      this.client.logout();
      this.renderLogin();
    });
    this.root.querySelectorAll<HTMLButtonElement>("[data-cmd]").forEach((btn) => {
      btn.addEventListener("click", () => this.sendPlcCommand(btn.dataset.cmd!, btn));
    });
    this.root.querySelectorAll<HTMLButtonElement>("[data-actuator]").forEach((btn) => {
      btn.addEventListener("click", () =>
        this.sendActuator(btn.dataset.actuator!, btn.dataset.state === "on", btn),
      );
    });
    this.root.querySelector<HTMLFormElement>("#params-form")!.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submitParams();
    });
    this.root.querySelector<HTMLFormElement>("#export-form")!.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.downloadExport();
    });
  }

  // -- polling ----------------------------------------------------------------

  private schedulePoll(): void {
    this.pollTimer = setTimeout(async () => {
      await this.pollOnce();
      if (this.client.token) this.schedulePoll();
    }, this.interval);
  }

  stopPolling(): void {
    if (this.pollTimer !== null) {
      clearTimeout(this.pollTimer);
      this.pollTimer = null;
    }
  }

  async pollOnce(): Promise<void> {
    if (this.polling) return;
    this.polling = true;
    try {
      const [status, events] = await Promise.all([this.client.status(), this.client.events(10)]);
      if (!status.ok || !events.ok) {
        if ((!status.ok && status.status === 401) || (!events.ok && events.status === 401)) {
          this.renderLogin("session expired, sign in again");
          return;
        }
        applyFailure(this.vm);
      } else {
        applyStatus(this.vm, status.data);
        this.vm.events = events.data.events;
      }
      this.refresh();
    } finally {
      this.polling = false;
    }
  }

  // -- rendering from the view model ---------------------------------------------

  refresh(): void {
    const vm = this.vm;
    const status = vm.status;
    const clock = this.root.querySelector("#sim-clock");
    if (!clock) return; // login view is showing
    clock.textContent = status
      ? `${status.sim.time} (t=${status.sim.now.toFixed(0)} s${status.sim.paused ? ", paused" : ""})`
      : "--";
    const banner = this.root.querySelector<HTMLElement>("#stale-banner")!;
    banner.hidden = !isStale(vm);
    this.root.querySelector("#fault-badges")!.innerHTML = faultBadges(status)
      .map((f) => `<span class="badge fault">${f}</span>`)
      .join("");

    if (status) {
      this.root.querySelector("#schematic")!.innerHTML = renderSchematic(status.snapshot);
      const plc = status.plc;
      this.root.querySelector("#plc-state")!.innerHTML = `
        <span class="badge mode">${plc.mode}</span>
        <span class="badge">${plc.actuation}</span>
        <span>irrigation: ${plc.irrigation_phase}${
          plc.irrigation_phase !== "Idle" ? ` (${fmt(plc.phase_remaining, 0)} s left)` : ""
        }</span>
        <span>filling: ${plc.pump_phase}</span>
        <span>avg tension: ${fmt(plc.last_avg_tension)} cbar</span>`;
      this.root.querySelector("#sparkline path")!.setAttribute("d", sparklinePath(vm.tensionHistory));
    }

    const rows = vm.events
      .map(
        (e) => `<tr class="sev-${e.severity}"><td>${eventDateHour(e)}</td><td>${e.severity}</td><td>${e.source}</td><td>${e.message}</td></tr>`,
      )
      .join("");
    this.root.querySelector("#events tbody")!.innerHTML = rows;

    const manual = actuatorsEnabled(status);
    this.root.querySelectorAll<HTMLButtonElement>("[data-actuator]").forEach((btn) => {
      btn.disabled = !manual || this.vm.pending.has(`actuator:${btn.dataset.actuator}`);
    });
  }

  // -- commands ---------------------------------------------------------------------

  async sendPlcCommand(action: string, btn: HTMLButtonElement): Promise<void> {
    const feedback = this.root.querySelector("#plc-feedback")!;
    btn.classList.add("pending");
    btn.disabled = true;
    feedback.textContent = "...";
    const result = await this.client.command("plc", action);
    btn.classList.remove("pending");
    btn.disabled = false;
    feedback.textContent = this.describe(result);
    await this.pollOnce();
  }

  async sendActuator(name: string, state: boolean, btn: HTMLButtonElement): Promise<void> {
    const key = `actuator:${name}`;
    const feedback = this.root.querySelector("#actuator-feedback")!;
    this.vm.pending.add(key);
    btn.classList.add("pending");
    this.refresh();
    const result = await this.client.command("actuator", "set", { actuator: name, state });
    this.vm.pending.delete(key);
    btn.classList.remove("pending");
    feedback.textContent = this.describe(result);
    await this.pollOnce();
  }

  private describe(result: { ok: true; data: { accepted: boolean | null; reason: string | null } } | { ok: false; error: string }): string {
    if (!("ok" in result) || !result.ok) return `failed: ${(result as { error: string }).error} (retry?)`;
    const { accepted, reason } = result.data;
    if (accepted === null) return "pending (simulation paused)";
    return accepted ? "accepted" : `rejected: ${reason}`;
  }

  async loadParams(): Promise<void> {
    const result = await this.client.getParams();
    if (!result.ok) return;
    const form = this.root.querySelector<HTMLFormElement>("#params-form");
    if (!form) return;
    for (const field of PARAM_FIELDS) {
      const input = form.querySelector<HTMLInputElement>(`input[name="${field}"]`);
      if (input) input.value = String(result.data[field]);
    }
  }

  async submitParams(): Promise<void> {
    const form = this.root.querySelector<HTMLFormElement>("#params-form")!;
    const errorBox = form.querySelector("#param-error")!;
    const update: Record<string, number> = {};
    for (const field of PARAM_FIELDS) {
      const input = form.querySelector<HTMLInputElement>(`input[name="${field}"]`)!;
      if (input.value !== "") update[field] = Number(input.value);
    }
    errorBox.textContent = "...";
    const result = await this.client.putParams(update);
    if (!result.ok) {
      errorBox.textContent = result.error; // service's reason, verbatim
      return;
    }
    errorBox.textContent = "applied";
    await this.loadParams();
  }

  async downloadExport(): Promise<void> {
    const form = this.root.querySelector<HTMLFormElement>("#export-form")!;
    const feedback = form.querySelector("#export-feedback")!;
    const data = new FormData(form);
    const filters: { from?: string; to?: string; node?: number; kind?: string } = {};
    if (data.get("from")) filters.from = String(data.get("from"));
    if (data.get("to")) filters.to = String(data.get("to"));
    if (data.get("node")) filters.node = Number(data.get("node"));
    if (data.get("kind")) filters.kind = String(data.get("kind"));
    feedback.textContent = "...";
    const result = await this.client.exportCsv(filters);
    if (!result.ok) {
      feedback.textContent = `failed: ${result.error} (retry?)`;
      return;
    }
    feedback.textContent = `${result.data.split("\n").length - 2} rows`;
    this.saveFile(result.data, "export.csv");
  }

  // separated so tests can stub the browser-only blob/anchor dance
  saveFile(content: string, filename: string): void {
    const blob = new Blob([content], { type: "text/csv" });
    const url = URL.createObjectURL(blob);
    const anchor = document.createElement("a");
    anchor.href = url;
    anchor.download = filename;
    anchor.click();
    URL.revokeObjectURL(url);
  }
}

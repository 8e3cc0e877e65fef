// Thin typed client over fetch. Every mutation goes through the service;
// the panel holds no control authority of its own.

import type { CommandResult, EventOut, LoginResponse, Params, Status } from "./types.js";

export type ApiResult<T> = { ok: true; data: T } | { ok: false; error: string; status: number };

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  token: string | null = null;

  constructor(private fetchImpl: FetchLike = (...a) => fetch(...a), private base = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<ApiResult<T>> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.base + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      return { ok: false, error: `network failure: ${String(err)}`, status: 0 };
    }
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const parsed = await resp.json();
        if (parsed && typeof parsed.detail === "string") detail = parsed.detail;
        else if (parsed) detail = JSON.stringify(parsed);
      } catch {
        /* non-JSON error body */
      }
      return { ok: false, error: detail, status: resp.status };
    }
    return { ok: true, data: (await resp.json()) as T };
  }

  async login(username: string, password: string): Promise<ApiResult<LoginResponse>> {
    const result = await this.request<LoginResponse>("POST", "/api/login", { username, password });
    if (result.ok) this.token = result.data.token;
    return result;
  }

  logout(): void {
    this.token = null;
  }

  status(): Promise<ApiResult<Status>> {
    return this.request<Status>("GET", "/api/status");
  }

  events(limit = 10): Promise<ApiResult<{ events: EventOut[] }>> {
    return this.request<{ events: EventOut[] }>("GET", `/api/events?limit=${limit}`);
  }

  command(target: string, action: string, args: Record<string, unknown> = {}): Promise<ApiResult<CommandResult>> {
    return this.request<CommandResult>("POST", "/api/command", { target, action, args });
  }

  getParams(): Promise<ApiResult<Params>> {
    return this.request<Params>("GET", "/api/params");
  }

  putParams(update: Partial<Params>): Promise<ApiResult<Params>> {
    return this.request<Params>("PUT", "/api/params", update);
  }

  simControl(action: "pause" | "resume" | "speed", value?: number): Promise<ApiResult<{ paused: boolean; speed: number }>> {
    return this.request("POST", "/api/sim", { action, value });
  }

  exportUrl(filters: { from?: string; to?: string; node?: number; kind?: string }): string {
    const q = new URLSearchParams();
    if (filters.from) q.set("from", filters.from);
    if (filters.to) q.set("to", filters.to);
    if (filters.node !== undefined) q.set("node", String(filters.node));
    if (filters.kind) q.set("kind", filters.kind);
    const qs = q.toString();
    return `${this.base}/api/export${qs ? "?" + qs : ""}`;
  }

  async exportCsv(filters: { from?: string; to?: string; node?: number; kind?: string }): Promise<ApiResult<string>> {
    try {
      const resp = await this.fetchImpl(this.exportUrl(filters), {
        headers: this.token ? { Authorization: `Bearer ${this.token}` } : {},
      });
      if (!resp.ok) {
        let detail = resp.statusText;
        try {
          const parsed = await resp.json();
          if (parsed && typeof parsed.detail === "string") detail = parsed.detail;
        } catch {
          /* keep statusText */
        }
        return { ok: false, error: detail, status: resp.status };
      }
      return { ok: true, data: await resp.text() };
    } catch (err) {
      return { ok: false, error: `network failure: ${String(err)}`, status: 0 };
    }
  }
}

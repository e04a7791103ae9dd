import type { ExportManifest, LiveStatus, SessionMeta } from "./types.js";

export class HubApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(detail);
  }
}

type FetchFn = typeof fetch;

export class HubClient {
  constructor(
    public base: string,
    private fetchFn: FetchFn = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = "http_error";
      let detail = `${response.status}`;
      try {
        const payload = (await response.json()) as { error?: string; detail?: string };
        code = payload.error ?? code;
        detail = payload.detail ?? detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new HubApiError(response.status, code, detail);
    }
    return (await response.json()) as T;
  }

  status(): Promise<LiveStatus> {
    return this.request("GET", "/status");
  }

  listSessions(): Promise<SessionMeta[]> {
    return this.request("GET", "/sessions");
  }

  getSession(id: string): Promise<SessionMeta> {
    return this.request("GET", `/sessions/${id}`);
  }

  createSession(title: string, description: string): Promise<SessionMeta> {
    return this.request("POST", "/sessions", { title, description });
  }

  startSession(id: string): Promise<SessionMeta> {
    return this.request("POST", `/sessions/${id}/start`);
  }

  stopSession(id: string): Promise<SessionMeta> {
    return this.request("POST", `/sessions/${id}/stop`);
  }

  exportSession(id: string): Promise<ExportManifest> {
    return this.request("GET", `/sessions/${id}/export`);
  }

  async fetchMergedCsv(id: string): Promise<string> {
    const response = await this.fetchFn(
      `${this.base}/sessions/${id}/export/files/merged_hr.csv`,
    );
    if (!response.ok) {
      throw new HubApiError(response.status, "unknown_file", "merged_hr.csv missing");
    }
    return response.text();
  }

  eventsUrl(): string {
    return `${this.base}/events`;
  }
}

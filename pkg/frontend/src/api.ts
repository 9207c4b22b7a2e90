// Typed client for the bootscope facade API.  Every byte of target
// interaction goes through these HTTP calls; the UI never opens its own
// connection to the debug stub.

export interface LocationInfo {
  address: number;
  symbol: string | null;
  offset: number;
  file: string | null;
  line: number | null;
  display: string;
}

export interface BreakpointOrigin {
  kind: "symbol" | "line" | "raw";
  symbol?: string;
  file?: string;
  line?: number;
  address?: number;
}

export interface BreakpointInfo {
  id: number;
  address: number;
  origin: BreakpointOrigin;
  mechanism: string;
  enabled: boolean;
  hit_count: number;
}

export interface SessionState {
  id: string;
  phase: string;
  pc: number | null;
  location: LocationInfo | null;
  breakpoints: BreakpointInfo[];
  packet_limit: number;
  event_seq: number;
}

export interface SourceDoc {
  file: string;
  lines: string[];
  current_line: number | null;
  breakable_lines: number[];
  breakpoints: (BreakpointInfo & { line: number })[];
}

export interface StopResult {
  pc: number | null;
  location: LocationInfo | null;
  exited: boolean;
}

export interface TraceEventInfo {
  seq: number;
  milestone: string;
  pc: number;
  step_budget_used: number;
}

export interface TraceDoc {
  catalog: string;
  outcome: string;
  events: TraceEventInfo[];
  warnings: string[];
}

export interface RegistersDoc {
  names: string[];
  values: Record<string, number>;
  pc_name: string;
}

export interface ApiEventMsg {
  seq: number;
  kind: string;
  [key: string]: unknown;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
  }

  health(): Promise<{ status: string; sessions: number }> {
    return this.request("/api/health");
  }

  listSessions(): Promise<SessionState[]> {
    return this.request("/api/sessions");
  }

  getState(sid: string): Promise<SessionState> {
    return this.request(`/api/sessions/${sid}`);
  }

  getSource(sid: string, file: string): Promise<SourceDoc> {
    return this.request(`/api/sessions/${sid}/source?file=${encodeURIComponent(file)}`);
  }

  step(sid: string): Promise<StopResult> {
    return this.post(`/api/sessions/${sid}/step`, {});
  }

  continueRun(sid: string): Promise<StopResult> {
    return this.post(`/api/sessions/${sid}/continue`, {});
  }

  addBreakpoint(
    sid: string,
    origin: { symbol?: string; file?: string; line?: number; address?: number },
  ): Promise<BreakpointInfo> {
    return this.post(`/api/sessions/${sid}/breakpoints`, origin);
  }

  removeBreakpoint(sid: string, bpId: number): Promise<{ removed: number }> {
    return this.request(`/api/sessions/${sid}/breakpoints/${bpId}`, { method: "DELETE" });
  }

  toggleBreakpoint(sid: string, bpId: number, enabled: boolean): Promise<BreakpointInfo> {
    return this.request(`/api/sessions/${sid}/breakpoints/${bpId}`, {
      method: "PATCH",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ enabled }),
    });
  }

  getRegisters(sid: string): Promise<RegistersDoc> {
    return this.request(`/api/sessions/${sid}/registers`);
  }

  readMemory(sid: string, addr: number, len: number): Promise<{ addr: number; len: number; hex: string }> {
    return this.request(`/api/sessions/${sid}/memory?addr=${addr}&len=${len}`);
  }

  runBootTrace(sid: string, catalog?: string): Promise<TraceDoc> {
    return this.post(`/api/sessions/${sid}/boot-trace`, catalog ? { catalog } : {});
  }

  getTrace(sid: string): Promise<TraceDoc> {
    return this.request(`/api/sessions/${sid}/trace`);
  }

  getFlow(sid: string, format: "text" | "dot" = "text"): Promise<{ format: string; document: string }> {
    return this.request(`/api/sessions/${sid}/flow?format=${format}`);
  }

  getBenchTables(format: "text" | "markdown" = "markdown"): Promise<{ format: string; document: string }> {
    return this.request(`/api/bench/tables?format=${format}`);
  }

  /**
   * Subscribe to the session's server-sent events, resuming after `after`.
   * Yields events until the stream ends or the signal aborts.
   */
  async *events(sid: string, after: number, signal?: AbortSignal): AsyncGenerator<ApiEventMsg> {
    const response = await this.fetchFn(
      `${this.baseUrl}/api/sessions/${sid}/events?after=${after}`,
      signal ? { signal } : {},
    );
    if (!response.ok || response.body === null) {
      throw new ApiError(response.status, "event stream unavailable");
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const event of parser.feed(decoder.decode(value, { stream: true }))) {
          yield event;
        }
      }
    } finally {
      reader.releaseLock();
    }
  }
}

/** Incremental parser for text/event-stream payloads carrying JSON data. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): ApiEventMsg[] {
    this.buffer += chunk;
    const events: ApiEventMsg[] = [];
    for (;;) {
      const split = this.buffer.indexOf("\n\n");
      if (split < 0) break;
      const block = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const data = block
        .split("\n")
        .filter((line) => line.startsWith("data: "))
        .map((line) => line.slice("data: ".length))
        .join("\n");
      if (!data) continue; // comment/keepalive block
      try {
        events.push(JSON.parse(data) as ApiEventMsg);
      } catch {
        // Malformed data block: skip rather than kill the stream.
      }
    }
    return events;
  }
}

// REST client and telemetry stream consumer. Everything the console
// knows about the backend goes through these two classes.

import type {
  BundleSummary, CreateBundleRequest, CreateBundleResponse,
  DecryptResponse, InboxEntry, IssPosition, PassWindow, StationInfo,
  TelemetryTick,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  code: string;
  detail: Record<string, unknown>;

  constructor(status: number, code: string, message: string,
              detail: Record<string, unknown> = {}) {
    super(message);
    this.status = status;
    this.code = code;
    this.detail = detail;
  }
}

type FetchFn = typeof fetch;

export class ApiClient {
  base: string;
  private fetchFn: FetchFn;

  constructor(base = "", fetchFn: FetchFn = globalThis.fetch) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async request<T>(method: string, path: string,
                           body?: unknown): Promise<T> {
    const resp = await this.fetchFn(this.base + path, {
      method,
      headers: body === undefined
        ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    const doc = text ? JSON.parse(text) : {};
    if (!resp.ok) {
      const detail = (doc && typeof doc.detail === "object"
        && doc.detail !== null) ? doc.detail : {};
      const code = typeof detail.error === "string"
        ? detail.error : `http_${resp.status}`;
      const message = typeof detail.message === "string"
        ? detail.message
        : typeof doc.detail === "string" ? doc.detail : resp.statusText;
      throw new ApiError(resp.status, code, message, detail);
    }
    return doc as T;
  }

  health(): Promise<{ status: string; mode: string; sim_time_s: number }> {
    return this.request("GET", "/health");
  }

  stations(): Promise<StationInfo[]> {
    return this.request<{ stations: StationInfo[] }>("GET", "/stations")
      .then((d) => d.stations);
  }

  issState(): Promise<IssPosition & { sim_time_s: number }> {
    return this.request("GET", "/iss/state");
  }

  createBundle(req: CreateBundleRequest): Promise<CreateBundleResponse> {
    return this.request("POST", "/bundles", req);
  }

  listBundles(status?: string): Promise<BundleSummary[]> {
    const qs = status ? `?status=${encodeURIComponent(status)}` : "";
    return this.request<{ bundles: BundleSummary[] }>("GET", `/bundles${qs}`)
      .then((d) => d.bundles);
  }

  inbox(): Promise<InboxEntry[]> {
    return this.request<{ inbox: InboxEntry[] }>("GET", "/iss/inbox")
      .then((d) => d.inbox);
  }

  decrypt(bundleId: string): Promise<DecryptResponse> {
    return this.request("POST", "/iss/decrypt", { bundle_id: bundleId });
  }

  relay(message: string, destination: string,
        priority?: string): Promise<CreateBundleResponse> {
    return this.request("POST", "/iss/relay",
                        { message, destination, priority });
  }

  passes(station: string, limit = 5): Promise<PassWindow[]> {
    const qs = `?station=${encodeURIComponent(station)}&limit=${limit}`;
    return this.request<{ passes: PassWindow[] }>("GET", `/passes${qs}`)
      .then((d) => d.passes);
  }
}

// Minimal surface shared by browser WebSocket, the ws package, and fakes.
export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export type FeedStatus = "connecting" | "open" | "lost";

export interface FeedOptions {
  url: string;
  onTick: (tick: TelemetryTick) => void;
  onStatus?: (status: FeedStatus) => void;
  makeSocket?: SocketFactory;
  baseDelayMs?: number;
  maxDelayMs?: number;
  schedule?: (fn: () => void, ms: number) => unknown;
}

const defaultFactory: SocketFactory = (url) =>
  new (globalThis as { WebSocket: new (u: string) => SocketLike }).WebSocket(url);

export class TelemetryFeed {
  private opts: Required<Pick<FeedOptions, "url" | "onTick">> & FeedOptions;
  private socket: SocketLike | null = null;
  private stopped = false;
  private delayMs: number;
  lastTimestamp = Number.NEGATIVE_INFINITY;
  ticksSeen = 0;
  duplicatesDropped = 0;

  constructor(opts: FeedOptions) {
    this.opts = opts;
    this.delayMs = opts.baseDelayMs ?? 1000;
  }

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.socket) {
      this.socket.onclose = null;
      this.socket.onerror = null;
      this.socket.close();
      this.socket = null;
    }
  }

  private connect(): void {
    if (this.stopped) return;
    this.opts.onStatus?.("connecting");
    const make = this.opts.makeSocket ?? defaultFactory;
    let socket: SocketLike;
    try {
      socket = make(this.opts.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.delayMs = this.opts.baseDelayMs ?? 1000;
      this.opts.onStatus?.("open");
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onclose = () => this.handleLoss();
    socket.onerror = () => {
      // close always follows in the browser; fakes may only error
    };
  }

  private handleMessage(data: unknown): void {
    let tick: TelemetryTick;
    try {
      tick = JSON.parse(String(data));
    } catch {
      return;
    }
    if (typeof tick.timestamp !== "number") return;
    // reconnects replay the server's latest tick; drop anything not newer
    if (tick.timestamp <= this.lastTimestamp) {
      this.duplicatesDropped += 1;
      return;
    }
    this.lastTimestamp = tick.timestamp;
    this.ticksSeen += 1;
    this.opts.onTick(tick);
  }

  private handleLoss(): void {
    this.socket = null;
    if (this.stopped) return;
    this.opts.onStatus?.("lost");
    this.scheduleReconnect();
  }

  private scheduleReconnect(): void {
    if (this.stopped) return;
    const wait = this.delayMs;
    this.delayMs = Math.min(this.delayMs * 2,
                            this.opts.maxDelayMs ?? 10_000);
    const schedule = this.opts.schedule
      ?? ((fn: () => void, ms: number) => setTimeout(fn, ms));
    schedule(() => this.connect(), wait);
  }
}

import { describe, expect, it } from "vitest";

import {
  ApiClient, ApiError, SocketLike, TelemetryFeed,
} from "../src/client.js";

class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  closed = false;

  close(): void { this.closed = true; }

  open(): void { this.onopen?.(); }
  message(doc: unknown): void {
    this.onmessage?.({ data: JSON.stringify(doc) });
  }
  drop(): void { this.onclose?.(); }
}

function tickDoc(timestamp: number) {
  return { timestamp, sim_time_s: timestamp, mode: "simulation",
           iss: { lat: 0, lon: 0, alt_km: 420, velocity_kms: 7.66,
                  timestamp },
           stations: {}, active_transmissions: [], queue_depths: {},
           delivered: 0, injected: 0 };
}

function fakeFetch(status: number, body: unknown): typeof fetch {
  return (async (url: RequestInfo | URL, init?: RequestInit) => ({
    ok: status >= 200 && status < 300,
    status,
    statusText: `status ${status}`,
    text: async () => JSON.stringify(body),
    url: String(url),
    init,
  })) as unknown as typeof fetch;
}

describe("TelemetryFeed", () => {
  function feedWith(sockets: FakeSocket[]) {
    const ticks: number[] = [];
    const statuses: string[] = [];
    const pending: Array<() => void> = [];
    let index = 0;
    const feed = new TelemetryFeed({
      url: "ws://test/telemetry",
      onTick: (t) => ticks.push(t.timestamp),
      onStatus: (s) => statuses.push(s),
      makeSocket: () => sockets[index++],
      schedule: (fn) => pending.push(fn),
    });
    return { feed, ticks, statuses, pending };
  }

  it("delivers ticks in order and counts them", () => {
    const socket = new FakeSocket();
    const { feed, ticks, statuses } = feedWith([socket]);
    feed.start();
    socket.open();
    socket.message(tickDoc(1));
    socket.message(tickDoc(2));
    expect(ticks).toEqual([1, 2]);
    expect(statuses).toEqual(["connecting", "open"]);
    expect(feed.ticksSeen).toBe(2);
  });

  it("dedupes replayed ticks across a reconnect", () => {
    const first = new FakeSocket();
    const second = new FakeSocket();
    const { feed, ticks, statuses, pending } = feedWith([first, second]);
    feed.start();
    first.open();
    first.message(tickDoc(10));
    first.message(tickDoc(11));
    first.drop();
    expect(statuses).toContain("lost");
    expect(pending).toHaveLength(1);
    pending[0]();                      // run the scheduled reconnect
    second.open();
    second.message(tickDoc(11));       // server replays the latest tick
    second.message(tickDoc(12));
    expect(ticks).toEqual([10, 11, 12]);
    expect(feed.duplicatesDropped).toBe(1);
  });

  it("ignores garbage frames and out-of-order timestamps", () => {
    const socket = new FakeSocket();
    const { feed, ticks } = feedWith([socket]);
    feed.start();
    socket.open();
    socket.onmessage?.({ data: "not json{{" });
    socket.message(tickDoc(5));
    socket.message(tickDoc(3));
    socket.message({ hello: "no timestamp" });
    expect(ticks).toEqual([5]);
    expect(feed.lastTimestamp).toBe(5);
  });

  it("stops cleanly and never reconnects after stop", () => {
    const socket = new FakeSocket();
    const { feed, pending } = feedWith([socket]);
    feed.start();
    socket.open();
    feed.stop();
    expect(socket.closed).toBe(true);
    expect(pending).toHaveLength(0);
  });

  it("backs off exponentially up to the cap", () => {
    const sockets = [new FakeSocket(), new FakeSocket(), new FakeSocket(),
                     new FakeSocket(), new FakeSocket()];
    let index = 0;
    const waits: number[] = [];
    const pending: Array<() => void> = [];
    const feed = new TelemetryFeed({
      url: "ws://test/telemetry",
      onTick: () => undefined,
      makeSocket: () => sockets[index++],
      baseDelayMs: 1000,
      maxDelayMs: 4000,
      schedule: (fn, ms) => { waits.push(ms); pending.push(fn); },
    });
    feed.start();
    for (let i = 0; i < 4; i++) {
      sockets[i].drop();
      pending[i]();
    }
    expect(waits).toEqual([1000, 2000, 4000, 4000]);
  });
});

describe("ApiClient", () => {
  it("unwraps list envelopes", async () => {
    const client = new ApiClient("http://h",
                                 fakeFetch(200, { bundles: [{ bundle_id: "b1" }] }));
    const rows = await client.listBundles("QUEUED");
    expect(rows).toEqual([{ bundle_id: "b1" }]);
  });

  it("raises typed errors from detail objects", async () => {
    const client = new ApiClient("http://h", fakeFetch(409, {
      detail: { error: "reassembly_incomplete", received: 3, total: 22 },
    }));
    const err = await client.decrypt("b9").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.code).toBe("reassembly_incomplete");
    expect(err.detail.received).toBe(3);
    expect(err.detail.total).toBe(22);
  });

  it("raises validation errors with their message", async () => {
    const client = new ApiClient("http://h", fakeFetch(422, {
      detail: { error: "validation", message: "unknown source" },
    }));
    const err = await client.createBundle({
      message: "x", source: "atlantis", destination: "ISS",
    }).catch((e) => e);
    expect(err.code).toBe("validation");
    expect(err.message).toBe("unknown source");
  });

  it("builds station query strings", async () => {
    const calls: string[] = [];
    const fetchFn = (async (url: RequestInfo | URL) => {
      calls.push(String(url));
      return {
        ok: true, status: 200, statusText: "OK",
        text: async () => JSON.stringify({ passes: [] }),
      };
    }) as unknown as typeof fetch;
    const client = new ApiClient("http://h/", fetchFn);
    await client.passes("moscow", 3);
    expect(calls).toEqual(["http://h/passes?station=moscow&limit=3"]);
  });
});

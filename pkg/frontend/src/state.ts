// Console state and its reducer. The reducer is pure: every event
// returns a fresh state object and never touches the old one, so
// replaying a recorded event stream reproduces the exact same state.

import type {
  BundleSummary, CreateBundleResponse, DecryptResponse, InboxEntry,
  PassWindow, StationInfo, TelemetryTick,
} from "./types.js";
import type { FeedStatus } from "./client.js";

export type ViewName = "GROUND" | "ISS";

export interface TrailPoint {
  lat: number;
  lon: number;
  sim_time_s: number;
}

export interface AppState {
  view: ViewName;
  connection: FeedStatus;
  stations: StationInfo[];
  selectedStation: string | null;
  tick: TelemetryTick | null;
  lastTimestamp: number;
  trail: TrailPoint[];
  bundles: BundleSummary[];
  inbox: InboxEntry[];
  passes: PassWindow[];
  lastSend: CreateBundleResponse | null;
  sendError: string | null;
  decrypted: Record<string, DecryptResponse>;
  decryptError: { bundle_id: string; message: string } | null;
  relayResult: CreateBundleResponse | null;
  relayError: string | null;
}

export const TRAIL_LIMIT = 240;

export type AppEvent =
  | { kind: "tick"; tick: TelemetryTick }
  | { kind: "connection"; status: FeedStatus }
  | { kind: "stations"; stations: StationInfo[] }
  | { kind: "view"; view: ViewName }
  | { kind: "select-station"; id: string }
  | { kind: "bundles"; bundles: BundleSummary[] }
  | { kind: "inbox"; inbox: InboxEntry[] }
  | { kind: "passes"; passes: PassWindow[] }
  | { kind: "sent"; response: CreateBundleResponse }
  | { kind: "send-error"; message: string }
  | { kind: "decrypted"; response: DecryptResponse }
  | { kind: "decrypt-error"; bundle_id: string; message: string }
  | { kind: "relayed"; response: CreateBundleResponse }
  | { kind: "relay-error"; message: string };

export function initialState(): AppState {
  return {
    view: "GROUND",
    connection: "connecting",
    stations: [],
    selectedStation: null,
    tick: null,
    lastTimestamp: Number.NEGATIVE_INFINITY,
    trail: [],
    bundles: [],
    inbox: [],
    passes: [],
    lastSend: null,
    sendError: null,
    decrypted: {},
    decryptError: null,
    relayResult: null,
    relayError: null,
  };
}

export function reduce(state: AppState, event: AppEvent): AppState {
  switch (event.kind) {
    case "tick": {
      if (event.tick.timestamp <= state.lastTimestamp) return state;
      const point: TrailPoint = {
        lat: event.tick.iss.lat,
        lon: event.tick.iss.lon,
        sim_time_s: event.tick.sim_time_s,
      };
      return {
        ...state,
        tick: event.tick,
        lastTimestamp: event.tick.timestamp,
        trail: [...state.trail, point].slice(-TRAIL_LIMIT),
      };
    }
    case "connection":
      return { ...state, connection: event.status };
    case "stations": {
      const selected = state.selectedStation
        ?? event.stations[0]?.id ?? null;
      return { ...state, stations: event.stations,
               selectedStation: selected };
    }
    case "view":
      return { ...state, view: event.view };
    case "select-station":
      return { ...state, selectedStation: event.id, passes: [] };
    case "bundles":
      return { ...state, bundles: event.bundles };
    case "inbox":
      return { ...state, inbox: event.inbox };
    case "passes":
      return { ...state, passes: event.passes };
    case "sent":
      return { ...state, lastSend: event.response, sendError: null };
    case "send-error":
      return { ...state, sendError: event.message };
    case "decrypted":
      return {
        ...state,
        decrypted: { ...state.decrypted,
                     [event.response.bundle_id]: event.response },
        decryptError: null,
      };
    case "decrypt-error":
      return {
        ...state,
        decryptError: { bundle_id: event.bundle_id,
                        message: event.message },
      };
    case "relayed":
      return { ...state, relayResult: event.response, relayError: null };
    case "relay-error":
      return { ...state, relayError: event.message };
  }
}

export function replay(events: AppEvent[],
                       start: AppState = initialState()): AppState {
  return events.reduce(reduce, start);
}

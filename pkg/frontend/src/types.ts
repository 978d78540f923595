// Document shapes served by the backend. Field names mirror the wire
// format exactly; keep them snake_case.

export interface IssPosition {
  lat: number;
  lon: number;
  alt_km: number;
  velocity_kms: number;
  timestamp: number;
}

export interface LinkReading {
  fspl_db: number;
  atm_loss_db: number;
  noise_floor_dbm: number;
  snr_db: number;
  doppler_hz: number;
  capacity_bps: number;
  effective_rate_bps: number;
  visible: boolean;
}

export interface StationTelemetry {
  visible: boolean;
  next_aos_s: number | null;
  elevation_deg: number;
  link: LinkReading;
}

export interface ActiveTransmission {
  bundle_id: string;
  node_from: string;
  node_to: string;
  uplink: boolean;
  progress: number;
}

export interface EmulationCounters {
  sent: number;
  delivered: number;
  losses: number;
  reassembled: number;
  mean_rtt_s: number | null;
}

export interface TelemetryTick {
  timestamp: number;
  sim_time_s: number;
  mode: string;
  iss: IssPosition;
  stations: Record<string, StationTelemetry>;
  active_transmissions: ActiveTransmission[];
  queue_depths: Record<string, number>;
  delivered: number;
  injected: number;
  emulation?: EmulationCounters;
}

export interface StationInfo {
  id: string;
  name: string;
  lat: number;
  lon: number;
  alt_km: number;
  neighbors: string[];
}

export interface RouteDoc {
  kind: "unicast" | "flood";
  hops?: string[];
  neighbors?: string[];
}

export interface BundleSummary {
  bundle_id: string;
  status: string;
  source: string;
  destination: string;
  priority: string;
  custody: boolean;
  created_at_s: number;
  encrypted_bytes: number;
  encrypted_preview: string;
  fragments: number;
}

export interface CreateBundleResponse extends BundleSummary {
  route: RouteDoc;
  broadcast_copies?: string[];
}

export interface InboxEntry {
  bundle_id: string;
  source: string;
  injected_at_s: number;
  size_bytes: number;
  fragments_total: number;
  fragments_received: number;
  complete: boolean;
  delivered_at_s: number | null;
  reassembly_ok: boolean | null;
}

export interface DecryptResponse {
  bundle_id: string;
  message: string;
  plaintext_b64: string;
  bytes: number;
}

export interface PassWindow {
  aos_s: number;
  los_s: number;
  duration_s: number;
  max_elevation_deg: number;
}

export interface CreateBundleRequest {
  message: string;
  source: string;
  destination: string;
  priority?: string;
  custody?: boolean;
  ttl_s?: number;
}

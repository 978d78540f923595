// Ground View panels: link budget, passes, queues, transmissions,
// bundle list, and the send confirmation. Pure functions of state.

import {
  escapeHtml, formatBytes, formatCoord, formatDuration, formatRate,
} from "../format.js";
import type { AppState } from "../state.js";

export function renderStatusBar(state: AppState): string {
  const tick = state.tick;
  const conn = state.connection;
  const banner = conn === "open" ? ""
    : `<span class="banner ${conn}">`
      + (conn === "lost" ? "telemetry lost, data is stale, reconnecting"
                         : "connecting to telemetry")
      + `</span>`;
  if (!tick) return banner || `<span class="muted">waiting for first`
    + ` tick</span>`;
  return `${banner}<span>mode <b>${escapeHtml(tick.mode)}</b></span>`
    + `<span>sim ${formatDuration(tick.sim_time_s)}</span>`
    + `<span>ISS ${formatCoord(tick.iss.lat, tick.iss.lon)} at `
    + `${tick.iss.alt_km.toFixed(0)} km, `
    + `${tick.iss.velocity_kms.toFixed(2)} km/s</span>`
    + `<span>${tick.delivered}/${tick.injected} delivered</span>`
    + (tick.emulation
       ? `<span>socket layer ${tick.emulation.delivered}/`
         + `${tick.emulation.sent} (${tick.emulation.losses} lost)</span>`
       : "");
}

export function renderLinkPanel(state: AppState): string {
  const id = state.selectedStation;
  const info = id ? state.tick?.stations[id] : undefined;
  if (!id || !info) return `<p class="muted">select a station</p>`;
  const link = info.link;
  const rows = [
    ["visibility", info.visible ? "in contact" : "below horizon"],
    ["elevation", `${info.elevation_deg.toFixed(1)}°`],
    ["next pass", info.visible ? "now" : formatDuration(info.next_aos_s)],
    ["SNR", `${link.snr_db.toFixed(1)} dB`],
    ["path loss", `${link.fspl_db.toFixed(1)} dB`],
    ["capacity", formatRate(link.capacity_bps)],
    ["effective rate", formatRate(link.effective_rate_bps)],
    ["Doppler", `${(link.doppler_hz / 1000).toFixed(2)} kHz`],
  ];
  const body = rows.map(([k, v]) =>
    `<tr><th>${k}</th><td>${v}</td></tr>`).join("");
  return `<h3>${escapeHtml(id)} uplink</h3><table>${body}</table>`;
}

export function renderPasses(state: AppState): string {
  if (!state.passes.length) return `<p class="muted">no passes loaded</p>`;
  const rows = state.passes.map((w) =>
    `<tr><td>${formatDuration(w.aos_s - (state.tick?.sim_time_s ?? 0))}`
    + `</td><td>${formatDuration(w.duration_s)}</td>`
    + `<td>${w.max_elevation_deg.toFixed(0)}°</td></tr>`).join("");
  return `<table><tr><th>in</th><th>length</th><th>max elev</th></tr>`
    + rows + `</table>`;
}

export function renderQueues(state: AppState): string {
  const tick = state.tick;
  if (!tick) return "";
  const rows = Object.entries(tick.queue_depths)
    .filter(([, depth]) => depth > 0)
    .map(([node, depth]) => `<tr><td>${escapeHtml(node)}</td>`
      + `<td>${depth}</td></tr>`)
    .join("");
  return rows
    ? `<table><tr><th>node</th><th>queued</th></tr>${rows}</table>`
    : `<p class="muted">all queues empty</p>`;
}

export function renderTransmissions(state: AppState): string {
  const active = state.tick?.active_transmissions ?? [];
  if (!active.length) return `<p class="muted">nothing on the air</p>`;
  return active.map((tx) => {
    const pct = Math.round(tx.progress * 100);
    return `<div class="tx ${tx.uplink ? "uplink" : "mesh"}">`
      + `<span class="tx-label">${escapeHtml(tx.node_from)} → `
      + `${escapeHtml(tx.node_to)}</span>`
      + `<span class="tx-id">${escapeHtml(tx.bundle_id)}</span>`
      + `<div class="bar"><div class="fill" style="width:${pct}%"></div>`
      + `</div><span class="pct">${pct}%</span></div>`;
  }).join("");
}

export function renderBundleList(state: AppState): string {
  if (!state.bundles.length) {
    return `<p class="muted">no bundles yet</p>`;
  }
  const rows = state.bundles.slice(-30).reverse().map((b) =>
    `<tr class="status-${escapeHtml(b.status)}">`
    + `<td>${escapeHtml(b.bundle_id)}</td>`
    + `<td>${escapeHtml(b.source)} → ${escapeHtml(b.destination)}</td>`
    + `<td>${escapeHtml(b.priority)}</td>`
    + `<td>${formatBytes(b.encrypted_bytes)}</td>`
    + `<td>${b.fragments}</td>`
    + `<td>${escapeHtml(b.status)}</td></tr>`).join("");
  return `<table><tr><th>bundle</th><th>path</th><th>priority</th>`
    + `<th>size</th><th>frags</th><th>status</th></tr>${rows}</table>`;
}

export function renderSendResult(state: AppState): string {
  if (state.sendError) {
    return `<p class="error">${escapeHtml(state.sendError)}</p>`;
  }
  const sent = state.lastSend;
  if (!sent) return "";
  const route = sent.route.kind === "flood"
    ? `flood via ${(sent.route.neighbors ?? []).map(escapeHtml).join(", ")}`
      + (sent.broadcast_copies
         ? ` (${sent.broadcast_copies.length} copies)` : "")
    : (sent.route.hops ?? []).map(escapeHtml).join(" → ");
  return `<div class="send-ok"><p>sent <b>${escapeHtml(sent.bundle_id)}`
    + `</b> (${formatBytes(sent.encrypted_bytes)} encrypted,`
    + ` ${sent.fragments} fragment${sent.fragments === 1 ? "" : "s"})</p>`
    + `<p class="preview">${escapeHtml(sent.encrypted_preview)}</p>`
    + `<p>route: ${route}</p></div>`;
}

// ISS View panels: inbox with reassembly progress, decrypt output,
// relay confirmation. Pure functions of state.

import { escapeHtml, formatBytes, formatCoord } from "../format.js";
import type { AppState } from "../state.js";

export function renderIssPosition(state: AppState): string {
  const tick = state.tick;
  if (!tick) return `<p class="muted">waiting for telemetry</p>`;
  const visible = Object.entries(tick.stations)
    .filter(([, s]) => s.visible).map(([id]) => id);
  return `<table>`
    + `<tr><th>position</th><td>`
    + `${formatCoord(tick.iss.lat, tick.iss.lon)}</td></tr>`
    + `<tr><th>altitude</th><td>${tick.iss.alt_km.toFixed(1)} km</td></tr>`
    + `<tr><th>speed</th><td>${tick.iss.velocity_kms.toFixed(2)}`
    + ` km/s</td></tr>`
    + `<tr><th>in contact with</th><td>`
    + (visible.length ? visible.map(escapeHtml).join(", ") : "nobody")
    + `</td></tr></table>`;
}

export function renderInbox(state: AppState): string {
  if (!state.inbox.length) return `<p class="muted">inbox empty</p>`;
  const rows = state.inbox.slice(-40).reverse().map((entry) => {
    const pct = entry.fragments_total > 0
      ? Math.round((entry.fragments_received / entry.fragments_total) * 100)
      : 0;
    const decrypted = state.decrypted[entry.bundle_id];
    const failedDecrypt = state.decryptError?.bundle_id === entry.bundle_id
      ? state.decryptError.message : null;
    const action = decrypted
      ? `<span class="ok">decrypted</span>`
      : `<button class="decrypt" data-bundle="`
        + `${escapeHtml(entry.bundle_id)}"`
        + `${entry.complete ? "" : " disabled"}>decrypt</button>`;
    return `<tr class="${entry.complete ? "complete" : "partial"}">`
      + `<td>${escapeHtml(entry.bundle_id)}</td>`
      + `<td>${escapeHtml(entry.source)}</td>`
      + `<td>${formatBytes(entry.size_bytes)}</td>`
      + `<td><div class="bar"><div class="fill" style="width:${pct}%">`
      + `</div></div> ${entry.fragments_received}/${entry.fragments_total}`
      + `</td><td>${action}`
      + (failedDecrypt
         ? `<div class="error">${escapeHtml(failedDecrypt)}</div>` : "")
      + `</td></tr>`;
  }).join("");
  return `<table><tr><th>bundle</th><th>from</th><th>size</th>`
    + `<th>reassembly</th><th></th></tr>${rows}</table>`;
}

export function renderDecrypted(state: AppState): string {
  const docs = Object.values(state.decrypted);
  if (!docs.length) return "";
  return docs.slice(-5).reverse().map((doc) =>
    `<div class="plaintext"><p class="label">`
    + `${escapeHtml(doc.bundle_id)} (${doc.bytes} bytes)</p>`
    + `<pre>${escapeHtml(doc.message)}</pre></div>`).join("");
}

export function renderRelayResult(state: AppState): string {
  if (state.relayError) {
    return `<p class="error">${escapeHtml(state.relayError)}</p>`;
  }
  const sent = state.relayResult;
  if (!sent) return "";
  const hops = (sent.route.hops ?? []).map(escapeHtml).join(" → ");
  return `<p class="send-ok">relayed <b>${escapeHtml(sent.bundle_id)}</b>`
    + ` via ${hops}</p>`;
}

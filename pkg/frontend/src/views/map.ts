// 2D equirectangular ground-track map rendered as an SVG string.

import { toMap } from "../scene.js";
import { escapeHtml } from "../format.js";
import type { AppState, TrailPoint } from "../state.js";

export const MAP_W = 720;
export const MAP_H = 360;

const GRID_STEP = 30;

function gridLines(): string {
  const lines: string[] = [];
  for (let lon = -180 + GRID_STEP; lon < 180; lon += GRID_STEP) {
    const { x } = toMap(0, lon, MAP_W, MAP_H);
    lines.push(`<line x1="${x}" y1="0" x2="${x}" y2="${MAP_H}"`
      + ` class="grid"/>`);
  }
  for (let lat = -90 + GRID_STEP; lat < 90; lat += GRID_STEP) {
    const { y } = toMap(lat, 0, MAP_W, MAP_H);
    lines.push(`<line x1="0" y1="${y}" x2="${MAP_W}" y2="${y}"`
      + ` class="grid"/>`);
  }
  return lines.join("");
}

function trailPath(trail: TrailPoint[]): string {
  if (trail.length < 2) return "";
  const segments: string[] = [];
  let current: string[] = [];
  let prevLon: number | null = null;
  for (const p of trail) {
    // split the polyline where the track wraps across the date line
    if (prevLon !== null && Math.abs(p.lon - prevLon) > 180) {
      if (current.length > 1) {
        segments.push(`<polyline points="${current.join(" ")}"`
          + ` class="trail"/>`);
      }
      current = [];
    }
    const { x, y } = toMap(p.lat, p.lon, MAP_W, MAP_H);
    current.push(`${x.toFixed(1)},${y.toFixed(1)}`);
    prevLon = p.lon;
  }
  if (current.length > 1) {
    segments.push(`<polyline points="${current.join(" ")}" class="trail"/>`);
  }
  return segments.join("");
}

export function renderMap(state: AppState): string {
  const tick = state.tick;
  const markers: string[] = [];
  for (const st of state.stations) {
    const { x, y } = toMap(st.lat, st.lon, MAP_W, MAP_H);
    const visible = tick?.stations[st.id]?.visible ?? false;
    const selected = st.id === state.selectedStation;
    const cls = ["station", visible ? "visible" : "hidden-from-iss",
                 selected ? "selected" : ""].join(" ").trim();
    markers.push(
      `<g class="${cls}" data-station="${escapeHtml(st.id)}">`
      + `<circle cx="${x.toFixed(1)}" cy="${y.toFixed(1)}" r="5"/>`
      + `<text x="${(x + 8).toFixed(1)}" y="${(y + 4).toFixed(1)}">`
      + `${escapeHtml(st.id)}</text></g>`);
  }
  let iss = "";
  if (tick) {
    const { x, y } = toMap(tick.iss.lat, tick.iss.lon, MAP_W, MAP_H);
    iss = `<g class="iss-marker">`
      + `<rect x="${(x - 6).toFixed(1)}" y="${(y - 6).toFixed(1)}"`
      + ` width="12" height="12"/>`
      + `<text x="${(x + 9).toFixed(1)}" y="${(y - 8).toFixed(1)}">ISS`
      + `</text></g>`;
  }
  return `<svg viewBox="0 0 ${MAP_W} ${MAP_H}" class="ground-map"`
    + ` preserveAspectRatio="xMidYMid meet">`
    + `<rect width="${MAP_W}" height="${MAP_H}" class="sea"/>`
    + gridLines() + trailPath(state.trail) + markers.join("") + iss
    + `</svg>`;
}

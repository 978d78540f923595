// Bootstrap: owns the single mutable state reference, wires DOM events
// to API calls, and repaints the dynamic regions after every event.

import { ApiClient, ApiError, TelemetryFeed } from "./client.js";
import {
  AppEvent, AppState, initialState, reduce, ViewName,
} from "./state.js";
import { renderMap } from "./views/map.js";
import {
  renderBundleList, renderLinkPanel, renderPasses, renderQueues,
  renderSendResult, renderStatusBar, renderTransmissions,
} from "./views/ground.js";
import {
  renderDecrypted, renderInbox, renderIssPosition, renderRelayResult,
} from "./views/iss.js";

const params = new URLSearchParams(location.search);
const apiBase = params.get("api") ?? "";
const api = new ApiClient(apiBase);

let state: AppState = initialState();

function dispatch(event: AppEvent): void {
  state = reduce(state, event);
  render();
}

function region(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing region #${id}`);
  return el;
}

function render(): void {
  region("status-bar").innerHTML = renderStatusBar(state);
  document.body.classList.toggle("stale", state.connection !== "open");
  const ground = state.view === "GROUND";
  region("ground-view").hidden = !ground;
  region("iss-view").hidden = ground;
  for (const tab of document.querySelectorAll<HTMLElement>(".tab")) {
    tab.classList.toggle("active", tab.dataset.view === state.view);
  }
  const reachable = state.connection === "open";
  for (const btn of document.querySelectorAll<HTMLButtonElement>(
    "button[type=submit]")) {
    btn.disabled = !reachable;
  }
  if (ground) {
    region("map").innerHTML = renderMap(state);
    region("link-panel").innerHTML = renderLinkPanel(state);
    region("passes").innerHTML = renderPasses(state);
    region("queues").innerHTML = renderQueues(state);
    region("transmissions").innerHTML = renderTransmissions(state);
    region("bundle-list").innerHTML = renderBundleList(state);
    region("send-result").innerHTML = renderSendResult(state);
  } else {
    region("iss-position").innerHTML = renderIssPosition(state);
    region("inbox").innerHTML = renderInbox(state);
    region("decrypted").innerHTML = renderDecrypted(state);
    region("relay-result").innerHTML = renderRelayResult(state);
  }
}

function errorText(err: unknown): string {
  if (err instanceof ApiError) {
    if (err.code === "reassembly_incomplete") {
      return `reassembly incomplete: ${err.detail.received}`
        + `/${err.detail.total} fragments`;
    }
    return err.message || err.code;
  }
  return err instanceof Error ? err.message : String(err);
}

async function refreshLists(): Promise<void> {
  try {
    if (state.view === "GROUND") {
      dispatch({ kind: "bundles", bundles: await api.listBundles() });
    } else {
      dispatch({ kind: "inbox", inbox: await api.inbox() });
    }
  } catch {
    // telemetry status banner already covers unreachable backends
  }
}

async function loadPasses(stationId: string): Promise<void> {
  try {
    dispatch({ kind: "passes", passes: await api.passes(stationId, 5) });
  } catch {
    dispatch({ kind: "passes", passes: [] });
  }
}

function fillDestinations(): void {
  const select = document.querySelector<HTMLSelectElement>("#dest");
  const relaySelect = document.querySelector<HTMLSelectElement>(
    "#relay-dest");
  if (!select || !relaySelect) return;
  select.innerHTML = `<option value="ISS">ISS</option>`
    + `<option value="broadcast">broadcast (all stations)</option>`
    + state.stations.map((s) =>
      `<option value="${s.id}">${s.id}</option>`).join("");
  relaySelect.innerHTML = state.stations.map((s) =>
    `<option value="${s.id}">${s.id}</option>`).join("");
  const src = document.querySelector<HTMLSelectElement>("#source");
  if (src) {
    src.innerHTML = state.stations.map((s) =>
      `<option value="${s.id}">${s.id}</option>`).join("");
  }
}

function wireEvents(): void {
  document.querySelector("#tabs")?.addEventListener("click", (ev) => {
    const tab = (ev.target as HTMLElement).closest<HTMLElement>(".tab");
    const view = tab?.dataset.view as ViewName | undefined;
    if (view) {
      dispatch({ kind: "view", view });
      void refreshLists();
    }
  });

  region("map").addEventListener("click", (ev) => {
    const marker = (ev.target as Element)
      .closest<SVGGElement>("g[data-station]");
    const id = marker?.dataset.station;
    if (id) {
      dispatch({ kind: "select-station", id });
      void loadPasses(id);
    }
  });

  document.querySelector("#compose-form")?.addEventListener(
    "submit", (ev) => {
      ev.preventDefault();
      const form = ev.target as HTMLFormElement;
      const data = new FormData(form);
      const message = String(data.get("message") ?? "");
      if (!message.trim()) {
        dispatch({ kind: "send-error", message: "message is empty" });
        return;
      }
      void api.createBundle({
        message,
        source: String(data.get("source")),
        destination: String(data.get("destination")),
        priority: String(data.get("priority")),
        custody: data.get("custody") === "on",
      }).then((resp) => {
        form.reset();
        dispatch({ kind: "sent", response: resp });
        void refreshLists();
      }).catch((err) =>
        dispatch({ kind: "send-error", message: errorText(err) }));
    });

  document.querySelector("#relay-form")?.addEventListener(
    "submit", (ev) => {
      ev.preventDefault();
      const form = ev.target as HTMLFormElement;
      const data = new FormData(form);
      const message = String(data.get("message") ?? "");
      if (!message.trim()) {
        dispatch({ kind: "relay-error", message: "message is empty" });
        return;
      }
      void api.relay(message, String(data.get("destination")))
        .then((resp) => {
          form.reset();
          dispatch({ kind: "relayed", response: resp });
        })
        .catch((err) =>
          dispatch({ kind: "relay-error", message: errorText(err) }));
    });

  region("inbox").addEventListener("click", (ev) => {
    const btn = (ev.target as HTMLElement)
      .closest<HTMLButtonElement>("button.decrypt");
    const id = btn?.dataset.bundle;
    if (!id) return;
    void api.decrypt(id)
      .then((resp) => dispatch({ kind: "decrypted", response: resp }))
      .catch((err) => dispatch({
        kind: "decrypt-error", bundle_id: id, message: errorText(err),
      }));
  });
}

async function start(): Promise<void> {
  wireEvents();
  render();
  try {
    const stations = await api.stations();
    dispatch({ kind: "stations", stations });
    fillDestinations();
    if (state.selectedStation) void loadPasses(state.selectedStation);
  } catch {
    dispatch({ kind: "connection", status: "lost" });
  }
  const wsBase = apiBase
    ? apiBase.replace(/^http/, "ws")
    : `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}`;
  const feed = new TelemetryFeed({
    url: `${wsBase}/telemetry`,
    onTick: (tick) => dispatch({ kind: "tick", tick }),
    onStatus: (status) => dispatch({ kind: "connection", status }),
  });
  feed.start();
  setInterval(() => void refreshLists(), 2000);
  void refreshLists();
}

void start();

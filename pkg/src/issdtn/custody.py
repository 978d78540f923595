"""Custody transfer: pending-ACK bookkeeping, NAKs, and timeout retries.

The manager is engine-agnostic: it owns the pending table and counters
and answers every event with effect objects (retransmit, custody moved,
delivered, failed) that the hosting engine applies to its own state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class AckKind(str, Enum):
    CUSTODY_ACK = "custody_ack"
    CUSTODY_NAK = "custody_nak"
    DELIVERY_ACK = "delivery_ack"


@dataclass(frozen=True)
class AckMessage:
    kind: AckKind
    bundle_id: str
    from_node: str
    at: float


@dataclass
class PendingAck:
    bundle_id: str
    expected_from: str
    deadline: float
    retransmit_count: int = 0


@dataclass(frozen=True)
class Retransmit:
    bundle_id: str
    count: int


@dataclass(frozen=True)
class CustodyTransferred:
    bundle_id: str
    to_node: str


@dataclass(frozen=True)
class MarkDelivered:
    bundle_id: str
    at: float


@dataclass(frozen=True)
class MarkFailed:
    bundle_id: str
    reason: str


class CustodyManager:
    def __init__(self, ack_timeout_s: float = 30.0, max_retries: int = 5):
        self.ack_timeout_s = ack_timeout_s
        self.max_retries = max_retries
        self.pending: dict[str, PendingAck] = {}
        self.custody_acks = 0
        self.naks = 0
        self.delivery_acks = 0
        self.retransmissions = 0

    def register_pending(self, bundle, next_hop: str,
                         now: float) -> PendingAck | None:
        """Arm the ACK timer for a custody transmission just started.

        Re-registration (a retry) replaces the entry but preserves the
        retransmit counter.
        """
        if not bundle.custody:
            return None
        prior = self.pending.get(bundle.bundle_id)
        entry = PendingAck(
            bundle_id=bundle.bundle_id,
            expected_from=next_hop,
            deadline=now + self.ack_timeout_s,
            retransmit_count=prior.retransmit_count if prior else 0)
        self.pending[bundle.bundle_id] = entry
        return entry

    def drop(self, bundle_id: str) -> None:
        self.pending.pop(bundle_id, None)

    def suspend(self, bundle_id: str) -> None:
        """Disarm the timer while a retry waits for its next contact.

        The entry and its counter survive; the next register_pending
        re-arms the deadline. Without this a bundle queued through a
        long no-coverage stretch would exhaust its retries without a
        single transmission happening.
        """
        entry = self.pending.get(bundle_id)
        if entry is not None:
            entry.deadline = math.inf

    def on_ack(self, ack: AckMessage) -> list:
        entry = self.pending.get(ack.bundle_id)
        if ack.kind is AckKind.CUSTODY_ACK:
            if entry is None:
                return []  # duplicate or unknown; ignore
            self.custody_acks += 1
            del self.pending[ack.bundle_id]
            return [CustodyTransferred(ack.bundle_id, ack.from_node)]
        if ack.kind is AckKind.DELIVERY_ACK:
            self.delivery_acks += 1
            self.pending.pop(ack.bundle_id, None)
            return [MarkDelivered(ack.bundle_id, ack.at)]
        # NAK: immediate retransmission, no waiting for the timer
        if entry is None:
            return []
        self.naks += 1
        if entry.retransmit_count >= self.max_retries:
            del self.pending[ack.bundle_id]
            return [MarkFailed(ack.bundle_id, "retries exhausted after NAK")]
        entry.retransmit_count += 1
        entry.deadline = ack.at + self.ack_timeout_s
        self.retransmissions += 1
        return [Retransmit(ack.bundle_id, entry.retransmit_count)]

    def on_timeout(self, now: float) -> list:
        """Effects for every pending entry whose deadline has passed."""
        effects = []
        for bundle_id in sorted(self.pending):
            entry = self.pending[bundle_id]
            if entry.deadline > now:
                continue
            if entry.retransmit_count >= self.max_retries:
                del self.pending[bundle_id]
                effects.append(MarkFailed(bundle_id, "ack timeout, retries"
                                                     " exhausted"))
            else:
                entry.retransmit_count += 1
                entry.deadline = now + self.ack_timeout_s
                self.retransmissions += 1
                effects.append(Retransmit(bundle_id, entry.retransmit_count))
        return effects

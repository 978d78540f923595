"""Fragmentation of over-MTU bundles and destination-side reassembly.

Chunking operates on the base64 ciphertext, so fragments need no
re-encryption and the end-to-end security blocks travel unchanged.
Each fragment's own payload hash covers its chunk, giving per-arrival
tamper detection; the parent hashes in the fragment metadata anchor
the final whole-payload checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from random import Random

from .bundles import DTNBundle, FragmentInfo, new_bundle_id, serialized_size
from .security import (
    IntegrityError,
    PCB,
    SecurityBlocks,
    pcb_decrypt,
    pib_verify,
    sha256_hex,
)


class FragmentProtocolError(RuntimeError):
    pass


class AcceptResult(Enum):
    STORED = "STORED"
    DUPLICATE = "DUPLICATE"
    COMPLETE = "COMPLETE"


@dataclass
class ReassemblyBuffer:
    parent_id: str
    total_expected: int
    first_seen: float
    iv: str
    parent_payload_hash: str
    parent_cipher_hash: str
    source: str
    destination: str
    created_at: float
    ttl_s: float
    received: dict[int, str] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return len(self.received) == self.total_expected

    def expires_at(self) -> float:
        return self.created_at + self.ttl_s


def maybe_fragment(bundle: DTNBundle, mtu: int, header_reserve: int = 1024,
                   rng: Random | None = None) -> list[DTNBundle]:
    """Return [bundle] if it fits the MTU, else its fragment bundles.

    The trigger compares the full serialized document against the MTU;
    chunks are sized to leave header_reserve bytes for the rest of the
    document.
    """
    if mtu <= header_reserve:
        raise ValueError("mtu must exceed header_reserve")
    if serialized_size(bundle) <= mtu:
        return [bundle]
    chunk_size = mtu - header_reserve
    payload = bundle.encrypted_payload
    chunks = [payload[i:i + chunk_size]
              for i in range(0, len(payload), chunk_size)]
    cipher_hash = sha256_hex(payload.encode("ascii"))
    fragments = []
    for number, chunk in enumerate(chunks):
        fragments.append(DTNBundle(
            bundle_id=new_bundle_id(bundle.source, bundle.created_at, rng),
            source=bundle.source,
            destination=bundle.destination,
            encrypted_payload=chunk,
            payload_hash=sha256_hex(chunk.encode("ascii")),
            priority=bundle.priority,
            created_at=bundle.created_at,
            ttl_s=bundle.ttl_s,
            custody=bundle.custody,
            security=SecurityBlocks(
                pcb=PCB(iv=bundle.security.pcb.iv, ciphertext=chunk),
                pib=bundle.security.pib),
            hop_list=[bundle.source],
            fragment=FragmentInfo(
                parent_id=bundle.bundle_id,
                fragment_number=number,
                total_fragments=len(chunks),
                parent_payload_hash=bundle.payload_hash,
                parent_cipher_hash=cipher_hash),
        ))
    return fragments


def accept_fragment(buffers: dict[str, ReassemblyBuffer], fragment: DTNBundle,
                    key: bytes, now: float = 0.0) -> AcceptResult:
    """Verify an arriving fragment and store its chunk.

    Rejections (bad integrity signature, tampered chunk, inconsistent
    totals) leave the buffer untouched.
    """
    info = fragment.fragment
    if info is None:
        raise ValueError("bundle carries no fragment metadata")
    if not pib_verify(fragment.security.pib, info.parent_cipher_hash, key):
        raise IntegrityError(
            f"integrity signature rejected for fragment of {info.parent_id}")
    if sha256_hex(fragment.encrypted_payload.encode("ascii")) != fragment.payload_hash:
        raise IntegrityError(
            f"chunk hash mismatch on fragment {info.fragment_number}"
            f" of {info.parent_id}")
    buffer = buffers.get(info.parent_id)
    if buffer is None:
        buffer = ReassemblyBuffer(
            parent_id=info.parent_id,
            total_expected=info.total_fragments,
            first_seen=now,
            iv=fragment.security.pcb.iv,
            parent_payload_hash=info.parent_payload_hash,
            parent_cipher_hash=info.parent_cipher_hash,
            source=fragment.source,
            destination=fragment.destination,
            created_at=fragment.created_at,
            ttl_s=fragment.ttl_s)
        buffers[info.parent_id] = buffer
    if info.total_fragments != buffer.total_expected:
        raise FragmentProtocolError(
            f"fragment count mismatch for {info.parent_id}:"
            f" {info.total_fragments} != {buffer.total_expected}")
    if info.fragment_number in buffer.received:
        return AcceptResult.DUPLICATE
    buffer.received[info.fragment_number] = fragment.encrypted_payload
    return AcceptResult.COMPLETE if buffer.complete else AcceptResult.STORED


def reassemble(buffer: ReassemblyBuffer, key: bytes) -> bytes:
    """Concatenate chunks in order, decrypt, and check both parent hashes."""
    if not buffer.complete:
        raise FragmentProtocolError(
            f"reassembly of {buffer.parent_id} incomplete:"
            f" {len(buffer.received)}/{buffer.total_expected}")
    payload = "".join(buffer.received[i] for i in range(buffer.total_expected))
    if sha256_hex(payload.encode("ascii")) != buffer.parent_cipher_hash:
        raise IntegrityError(f"ciphertext hash mismatch for {buffer.parent_id}")
    plaintext = pcb_decrypt(PCB(iv=buffer.iv, ciphertext=payload), key)
    if sha256_hex(plaintext) != buffer.parent_payload_hash:
        raise IntegrityError(f"plaintext hash mismatch for {buffer.parent_id}")
    return plaintext


def evict_stale(buffers: dict[str, ReassemblyBuffer], now: float) -> list[str]:
    """Drop buffers whose parent TTL has lapsed; returns evicted parent ids."""
    stale = [pid for pid, buf in buffers.items() if buf.expires_at() <= now]
    for pid in stale:
        del buffers[pid]
    return stale

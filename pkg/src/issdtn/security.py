"""Payload confidentiality, end-to-end integrity, and per-hop authentication.

Three block types travel with every bundle: an AES-256-CBC envelope
(IV + base64 ciphertext), an HMAC signature over the encrypted-payload
hash, and a per-hop HMAC binding the bundle to the (from, to) pair of
the current transmission.  The 32-byte key comes from PBKDF2 over a
shared secret and is derived once per configuration.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import os
import threading
from dataclasses import dataclass

from cryptography.hazmat.primitives import hashes, padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.kdf.pbkdf2 import PBKDF2HMAC

from .config import KeySettings


class DecryptionError(Exception):
    pass


class IntegrityError(Exception):
    pass


_key_cache: dict[tuple[str, str, int], bytes] = {}
_key_cache_lock = threading.Lock()


def derive_key(cfg: KeySettings) -> bytes:
    """PBKDF2-HMAC-SHA256 -> 32 bytes; cached so the cost is paid once."""
    cache_key = (cfg.shared_secret, cfg.salt, cfg.kdf_iterations)
    cached = _key_cache.get(cache_key)
    if cached is not None:
        return cached
    with _key_cache_lock:
        cached = _key_cache.get(cache_key)
        if cached is None:
            kdf = PBKDF2HMAC(algorithm=hashes.SHA256(), length=32,
                             salt=cfg.salt.encode(),
                             iterations=cfg.kdf_iterations)
            cached = kdf.derive(cfg.shared_secret.encode())
            _key_cache[cache_key] = cached
    return cached


@dataclass(frozen=True)
class PCB:
    iv: str  # base64 of 16 bytes
    ciphertext: str  # base64 text


@dataclass(frozen=True)
class PIB:
    signature: str  # HMAC-SHA256 hex


@dataclass(frozen=True)
class BAB:
    security_source: str
    security_dest: str
    signature: str


@dataclass(frozen=True)
class SecurityBlocks:
    pcb: PCB
    pib: PIB
    bab: BAB | None = None


def pcb_encrypt(plaintext: bytes, key: bytes) -> PCB:
    """AES-256-CBC with PKCS7 padding and a fresh random IV."""
    if not plaintext:
        raise ValueError("plaintext must be non-empty")
    iv = os.urandom(16)
    padder = padding.PKCS7(128).padder()
    padded = padder.update(plaintext) + padder.finalize()
    enc = Cipher(algorithms.AES(key), modes.CBC(iv)).encryptor()
    ct = enc.update(padded) + enc.finalize()
    return PCB(iv=base64.b64encode(iv).decode("ascii"),
               ciphertext=base64.b64encode(ct).decode("ascii"))


def pcb_decrypt(pcb: PCB, key: bytes) -> bytes:
    try:
        iv = base64.b64decode(pcb.iv)
        ct = base64.b64decode(pcb.ciphertext)
        dec = Cipher(algorithms.AES(key), modes.CBC(iv)).decryptor()
        padded = dec.update(ct) + dec.finalize()
        unpadder = padding.PKCS7(128).unpadder()
        return unpadder.update(padded) + unpadder.finalize()
    except Exception as exc:
        raise DecryptionError(f"payload decryption failed: {exc}") from exc


def encrypted_size(plaintext_len: int) -> int:
    """Base64 length of the ciphertext for a given plaintext length.

    PKCS7 always adds at least one byte, so an aligned input still grows
    by a full block.  The IV lives in its own field and is not counted.
    """
    if plaintext_len < 1:
        raise ValueError("plaintext_len must be >= 1")
    padded = 16 * (plaintext_len // 16 + 1)
    return 4 * ((padded + 2) // 3)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def pib_create(encrypted_payload_hash: str, key: bytes) -> PIB:
    sig = hmac.new(key, encrypted_payload_hash.encode("ascii"),
                   hashlib.sha256).hexdigest()
    return PIB(signature=sig)


def pib_verify(pib: PIB, encrypted_payload_hash: str, key: bytes) -> bool:
    expected = hmac.new(key, encrypted_payload_hash.encode("ascii"),
                        hashlib.sha256).hexdigest()
    return hmac.compare_digest(expected, pib.signature)


def _bab_signature(bundle, hop_from: str, hop_to: str, key: bytes) -> str:
    material = "|".join([bundle.bundle_id, bundle.source, bundle.destination,
                         bundle.payload_hash, hop_from, hop_to])
    return hmac.new(key, material.encode("utf-8"), hashlib.sha256).hexdigest()


def bab_create(bundle, hop_from: str, hop_to: str, key: bytes) -> BAB:
    """Authentication block for one transmission hop; rebuilt every hop."""
    if hop_from == hop_to:
        raise ValueError("hop endpoints must differ")
    return BAB(security_source=hop_from, security_dest=hop_to,
               signature=_bab_signature(bundle, hop_from, hop_to, key))


def bab_verify(bundle, bab: BAB, key: bytes) -> bool:
    expected = _bab_signature(bundle, bab.security_source, bab.security_dest,
                              key)
    return hmac.compare_digest(expected, bab.signature)


def security_to_doc(blocks: SecurityBlocks) -> dict:
    """Serializable form; the ciphertext stays in the bundle's payload field."""
    doc: dict = {
        "pcb": {"iv": blocks.pcb.iv},
        "pib": {"signature": blocks.pib.signature},
        "bab": None,
    }
    if blocks.bab is not None:
        doc["bab"] = {
            "security_source": blocks.bab.security_source,
            "security_dest": blocks.bab.security_dest,
            "signature": blocks.bab.signature,
        }
    return doc


def security_from_doc(doc: dict, encrypted_payload: str) -> SecurityBlocks:
    bab = None
    if doc.get("bab"):
        bab = BAB(security_source=doc["bab"]["security_source"],
                  security_dest=doc["bab"]["security_dest"],
                  signature=doc["bab"]["signature"])
    return SecurityBlocks(
        pcb=PCB(iv=doc["pcb"]["iv"], ciphertext=encrypted_payload),
        pib=PIB(signature=doc["pib"]["signature"]),
        bab=bab)

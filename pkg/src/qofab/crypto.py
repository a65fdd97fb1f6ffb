"""Signing, verification and hashing primitives.

Two interchangeable signature backends share one interface:

* :class:`MacScheme` -- a deterministic keyed-hash scheme for simulation and
  tests.  The verify key *is* the MAC key, so it offers no secrecy; it only
  models unforgeability for scripted adversaries that never read other
  processes' keys.
* :class:`Ed25519Scheme` -- real Ed25519 signatures (64 bytes).

All integers inside signed bodies are fixed-width big-endian.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    PublicFormat,
)

DIGEST_LEN = 32
DEFAULT_SIG_LEN = 64

STATUS_TAG = 0x01
ECHO_TAG = 0x02


@dataclass(frozen=True)
class KeyPair:
    process_id: int
    signing_key: bytes
    verify_key: bytes


def digest(payload: bytes) -> bytes:
    """SHA-256 of the payload; the canonical identity of a payload."""
    return hashlib.sha256(payload).digest()


def status_body(round_: int, vc: Sequence[int]) -> bytes:
    """Bytes signed in a STATUS message: tag, round, n, then every clock entry."""
    return struct.pack(f">BQH{len(vc)}Q", STATUS_TAG, round_, len(vc), *vc)


def echo_body(sender: int, label: int, payload_digest: bytes) -> bytes:
    """Bytes signed by an echoing process for one broadcast instance."""
    if len(payload_digest) != DIGEST_LEN:
        raise ValueError("digest must be 32 bytes")
    return struct.pack(">BHQ", ECHO_TAG, sender, label) + payload_digest


def _seed_material(label: bytes, seed: int, process_id: int) -> bytes:
    return hashlib.sha256(label + struct.pack(">QH", seed & 0xFFFFFFFFFFFFFFFF, process_id)).digest()


class _VerifiedCache:
    """Remembers triples that verified, so a certificate checked by many
    processes in one simulation is only checked once.  Only successes are
    stored; verification is a pure function, so this never changes a result."""

    cache_limit = 1 << 18

    def __init__(self):
        self._seen: set = set()

    def _remember(self, key) -> None:
        if len(self._seen) >= self.cache_limit:
            self._seen.clear()
        self._seen.add(key)


class MacScheme(_VerifiedCache):
    """Keyed BLAKE2b (or SHAKE-256 for long tags) truncated to ``sig_len`` bytes."""

    name = "mac"

    def __init__(self, sig_len: int = DEFAULT_SIG_LEN):
        super().__init__()
        if sig_len < 16:
            raise ValueError("sig_len below 16 bytes is not supported")
        self.sig_len = sig_len

    def keygen(self, seed: int, process_id: int) -> KeyPair:
        key = _seed_material(b"qofab/mac", seed, process_id)
        return KeyPair(process_id, key, key)

    def _tag(self, key: bytes, message: bytes) -> bytes:
        if self.sig_len <= 64:
            return hashlib.blake2b(message, key=key, digest_size=self.sig_len).digest()
        return hashlib.shake_256(key + message).digest(self.sig_len)

    def sign(self, key: KeyPair, message: bytes) -> bytes:
        return self._tag(key.signing_key, message)

    def verify(self, verify_key: bytes, message: bytes, sig: bytes) -> bool:
        if len(sig) != self.sig_len:
            return False
        key = (verify_key, message, sig)
        if key in self._seen:
            return True
        ok = hmac.compare_digest(self._tag(verify_key, message), sig)
        if ok:
            self._remember(key)
        return ok


@lru_cache(maxsize=4096)
def _public_key(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


class Ed25519Scheme(_VerifiedCache):
    name = "ed25519"
    sig_len = 64

    def keygen(self, seed: int, process_id: int) -> KeyPair:
        sk = Ed25519PrivateKey.from_private_bytes(
            _seed_material(b"qofab/ed25519", seed, process_id))
        vk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return KeyPair(process_id, sk.private_bytes_raw(), vk)

    def sign(self, key: KeyPair, message: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(key.signing_key).sign(message)

    def verify(self, verify_key: bytes, message: bytes, sig: bytes) -> bool:
        if len(sig) != self.sig_len or len(verify_key) != 32:
            return False
        key = (verify_key, message, sig)
        if key in self._seen:
            return True
        try:
            _public_key(verify_key).verify(sig, message)
        except (InvalidSignature, ValueError):
            return False
        self._remember(key)
        return True


def make_scheme(name: str = "mac", sig_len: int = DEFAULT_SIG_LEN):
    if name == "mac":
        return MacScheme(sig_len)
    if name == "ed25519":
        if sig_len != 64:
            raise ValueError("ed25519 signatures are always 64 bytes")
        return Ed25519Scheme()
    raise ValueError(f"unknown signature scheme {name!r}")

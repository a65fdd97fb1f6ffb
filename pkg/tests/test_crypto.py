import os
import random
from pathlib import Path

import pytest

from qofab.crypto import (ECHO_TAG, STATUS_TAG, Ed25519Scheme, MacScheme, digest, echo_body,
                          make_scheme, status_body)

GOLDEN = Path(__file__).parent / "golden"


def test_keygen_is_deterministic(scheme):
    assert scheme.keygen(7, 1) == scheme.keygen(7, 1)


def test_keygen_distinct_ids_and_seeds(scheme):
    a, b, c = scheme.keygen(7, 1), scheme.keygen(7, 2), scheme.keygen(8, 1)
    assert a.verify_key != b.verify_key
    assert a.verify_key != c.verify_key


def test_sign_verify_round_trip(scheme):
    k = scheme.keygen(1, 3)
    msg = status_body(4, [1, 2, 3, 0])
    sig = scheme.sign(k, msg)
    assert len(sig) == scheme.sig_len == 64
    assert scheme.verify(k.verify_key, msg, sig)


def test_tampered_clock_fails(scheme):
    k = scheme.keygen(1, 1)
    sig = scheme.sign(k, status_body(1, [1, 2, 3]))
    assert not scheme.verify(k.verify_key, status_body(1, [1, 2, 4]), sig)


def test_wrong_signer_fails(scheme):
    k1, k2 = scheme.keygen(1, 1), scheme.keygen(1, 2)
    sig = scheme.sign(k1, b"hello")
    assert not scheme.verify(k2.verify_key, b"hello", sig)


def test_truncated_signature_fails(scheme):
    k = scheme.keygen(1, 1)
    sig = scheme.sign(k, b"x")
    assert not scheme.verify(k.verify_key, b"x", sig[:-1])


def test_empty_message_round_trip(scheme):
    k = scheme.keygen(2, 2)
    assert scheme.verify(k.verify_key, b"", scheme.sign(k, b""))


def test_single_bit_flips_are_caught(scheme):
    k = scheme.keygen(5, 1)
    msg = echo_body(2, 9, digest(b"p"))
    sig = scheme.sign(k, msg)
    for i in range(0, len(msg) * 8, 7):
        bad = bytearray(msg)
        bad[i // 8] ^= 1 << (i % 8)
        assert not scheme.verify(k.verify_key, bytes(bad), sig)
    for i in range(0, len(sig) * 8, 11):
        bad = bytearray(sig)
        bad[i // 8] ^= 1 << (i % 8)
        assert not scheme.verify(k.verify_key, msg, bytes(bad))


def test_random_pairs_never_verify():
    s = MacScheme()
    k = s.keygen(3, 1)
    rng = random.Random(99)
    for _ in range(100_000):
        msg = rng.randbytes(rng.randint(0, 40))
        sig = rng.randbytes(64)
        assert not s.verify(k.verify_key, msg, sig)


def test_random_pairs_never_verify_ed25519():
    s = Ed25519Scheme()
    k = s.keygen(3, 1)
    rng = random.Random(98)
    for _ in range(2_000):
        assert not s.verify(k.verify_key, rng.randbytes(20), rng.randbytes(64))


def test_cache_does_not_leak_across_keys():
    s = MacScheme()
    k1, k2 = s.keygen(1, 1), s.keygen(1, 2)
    sig = s.sign(k1, b"m")
    assert s.verify(k1.verify_key, b"m", sig)
    assert not s.verify(k2.verify_key, b"m", sig)


def test_configurable_signature_length():
    for length in (16, 32, 64, 96):
        s = MacScheme(length)
        k = s.keygen(1, 1)
        sig = s.sign(k, b"abc")
        assert len(sig) == length and s.verify(k.verify_key, b"abc", sig)
    with pytest.raises(ValueError):
        MacScheme(8)
    with pytest.raises(ValueError):
        make_scheme("ed25519", 32)
    with pytest.raises(ValueError):
        make_scheme("rsa")


def test_digest_basics():
    assert digest(b"x") == digest(b"x")
    assert len(digest(b"x")) == 32


def test_digest_no_collision_on_appended_zero():
    rng = random.Random(4)
    seen = set()
    for _ in range(10_000):
        x = rng.randbytes(rng.randint(0, 24))
        assert digest(x) != digest(x + b"\x00")
        seen.add(digest(x + b"\x01\x02"))
    assert len(seen) > 9_000


def test_digest_of_empty_is_pinned():
    assert digest(b"").hex() == (GOLDEN / "digest_empty.txt").read_text().strip()


def test_status_body_layout():
    body = status_body(2, [1, 0, 5])
    assert body[0] == STATUS_TAG
    assert body == bytes([1]) + (2).to_bytes(8, "big") + (3).to_bytes(2, "big") + b"".join(
        v.to_bytes(8, "big") for v in (1, 0, 5))
    # semantically equal clocks encode identically
    assert status_body(2, (1, 0, 5)) == body


def test_echo_body_layout():
    d = digest(b"z")
    body = echo_body(3, 7, d)
    assert body[0] == ECHO_TAG and body[1:3] == b"\x00\x03" and body[-32:] == d
    assert len(body) == 1 + 2 + 8 + 32
    with pytest.raises(ValueError):
        echo_body(1, 1, b"short")

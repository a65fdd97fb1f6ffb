"""Bit-exact wire encodings for channel and protocol messages.

Layouts (all integers big-endian)::

    SEND    0x10 | sender u16 | label u64 | len u32 | payload
    ECHO    0x11 | echoer u16 | sender u16 | label u64 | digest[32] | sig
    FINAL   0x12 | sender u16 | label u64 | len u32 | payload
                 | count u16 | (signer u16 | sig)*
    STATUS  0x20 | round u64 | n u16 | vc u64*n | sig
    MISSING 0x21 | round u64 | k u16 | ind u64
    RESEND  0x22 | round u64 | k u16 | proof

A resend proof is ``sender u16 | start u64 | count u32`` followed by
``count`` entries of ``len u32 | payload | label u64 | digest[32] |
count u16 | (signer u16 | sig)*``.

Signatures have a fixed length per deployment, so decoders take ``sig_len``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Tuple, Union

from .crypto import DIGEST_LEN

SEND_TAG = 0x10
ECHO_TAG = 0x11
FINAL_TAG = 0x12
STATUS_TAG = 0x20
MISSING_TAG = 0x21
RESEND_TAG = 0x22

Signatures = Tuple[Tuple[int, bytes], ...]


class WireError(ValueError):
    """Raised for bytes that do not parse as a well-formed message."""


@dataclass(frozen=True)
class Certificate:
    sender: int
    label: int
    payload_digest: bytes
    signatures: Signatures


@dataclass(frozen=True)
class ResendProof:
    sender: int
    start_index: int
    entries: Tuple[Tuple[bytes, Certificate], ...]


@dataclass(frozen=True)
class Send:
    sender: int
    label: int
    payload: bytes


@dataclass(frozen=True)
class Echo:
    echoer: int
    sender: int
    label: int
    digest: bytes
    signature: bytes


@dataclass(frozen=True)
class Final:
    sender: int
    label: int
    payload: bytes
    signatures: Signatures


@dataclass(frozen=True)
class Status:
    round: int
    vc: Tuple[int, ...]
    signature: bytes


@dataclass(frozen=True)
class Missing:
    round: int
    k: int
    ind: int


@dataclass(frozen=True)
class Resend:
    round: int
    k: int
    proof: ResendProof


Message = Union[Send, Echo, Final, Status, Missing, Resend]

KIND_NAMES = {
    Send: "SEND", Echo: "ECHO", Final: "FINAL",
    Status: "STATUS", Missing: "MISSING", Resend: "RESEND",
}


def kind_of(msg: Message) -> str:
    return KIND_NAMES[type(msg)]


def _sigs(sigs: Signatures) -> bytes:
    out = [struct.pack(">H", len(sigs))]
    for signer, sig in sigs:
        out.append(struct.pack(">H", signer))
        out.append(sig)
    return b"".join(out)


def encode_proof(proof: ResendProof) -> bytes:
    out = [struct.pack(">HQI", proof.sender, proof.start_index, len(proof.entries))]
    for payload, cert in proof.entries:
        out.append(struct.pack(">I", len(payload)))
        out.append(payload)
        out.append(struct.pack(">Q", cert.label))
        out.append(cert.payload_digest)
        out.append(_sigs(cert.signatures))
    return b"".join(out)


def encode(msg: Message) -> bytes:
    t = type(msg)
    if t is Send:
        return struct.pack(">BHQI", SEND_TAG, msg.sender, msg.label, len(msg.payload)) + msg.payload
    if t is Echo:
        return (struct.pack(">BHHQ", ECHO_TAG, msg.echoer, msg.sender, msg.label)
                + msg.digest + msg.signature)
    if t is Final:
        return (struct.pack(">BHQI", FINAL_TAG, msg.sender, msg.label, len(msg.payload))
                + msg.payload + _sigs(msg.signatures))
    if t is Status:
        return (struct.pack(f">BQH{len(msg.vc)}Q", STATUS_TAG, msg.round, len(msg.vc), *msg.vc)
                + msg.signature)
    if t is Missing:
        return struct.pack(">BQHQ", MISSING_TAG, msg.round, msg.k, msg.ind)
    if t is Resend:
        return struct.pack(">BQH", RESEND_TAG, msg.round, msg.k) + encode_proof(msg.proof)
    raise TypeError(f"not a wire message: {msg!r}")


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.data):
            raise WireError("truncated message")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def sigs(self, sig_len: int) -> Signatures:
        (count,) = self.unpack(">H")
        out = []
        for _ in range(count):
            (signer,) = self.unpack(">H")
            out.append((signer, self.take(sig_len)))
        return tuple(out)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise WireError("trailing bytes")


def _read_proof(rd: _Reader, sig_len: int) -> ResendProof:
    sender, start, count = rd.unpack(">HQI")
    entries = []
    for _ in range(count):
        (length,) = rd.unpack(">I")
        payload = rd.take(length)
        (label,) = rd.unpack(">Q")
        dig = rd.take(DIGEST_LEN)
        cert = Certificate(sender, label, dig, rd.sigs(sig_len))
        entries.append((payload, cert))
    return ResendProof(sender, start, tuple(entries))


def decode_proof(data: bytes, sig_len: int) -> ResendProof:
    rd = _Reader(data)
    proof = _read_proof(rd, sig_len)
    rd.done()
    return proof


def decode(data: bytes, sig_len: int) -> Message:
    if not data:
        raise WireError("empty message")
    rd = _Reader(data, 1)
    tag = data[0]
    if tag == SEND_TAG:
        sender, label, length = rd.unpack(">HQI")
        msg = Send(sender, label, rd.take(length))
    elif tag == ECHO_TAG:
        echoer, sender, label = rd.unpack(">HHQ")
        msg = Echo(echoer, sender, label, rd.take(DIGEST_LEN), rd.take(sig_len))
    elif tag == FINAL_TAG:
        sender, label, length = rd.unpack(">HQI")
        payload = rd.take(length)
        msg = Final(sender, label, payload, rd.sigs(sig_len))
    elif tag == STATUS_TAG:
        round_, n = rd.unpack(">QH")
        vc = rd.unpack(f">{n}Q")
        msg = Status(round_, tuple(vc), rd.take(sig_len))
    elif tag == MISSING_TAG:
        msg = Missing(*rd.unpack(">QHQ"))
    elif tag == RESEND_TAG:
        round_, k = rd.unpack(">QH")
        msg = Resend(round_, k, _read_proof(rd, sig_len))
    else:
        raise WireError(f"unknown tag 0x{tag:02x}")
    rd.done()
    return msg

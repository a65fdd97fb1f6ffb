"""Byzantine FIFO consistent broadcast channel.

Every sender runs a sequence of signed-echo consistent broadcast instances,
one active at a time, labelled 1, 2, 3, ...:

1. the sender sends ``SEND(label, payload)`` to all processes;
2. each process signs the echo body for the first payload digest it sees
   for ``(sender, label)`` and returns an ``ECHO`` to the sender;
3. with ``q = ceil((n+f+1)/2)`` valid echoes the sender sends ``FINAL``,
   which carries the signatures and is therefore a transferable
   delivery certificate.

Any two quorums intersect in at least ``f+1`` processes, so two
certificates for different payloads with the same label cannot both exist
while at most ``f`` processes are faulty.  Certificates are retained after
delivery so they can back resend proofs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

from .crypto import KeyPair, digest, echo_body
from .wire import Certificate, Echo, Final, Message, ResendProof, Send

Delivery = Tuple[int, int, bytes]      # (sender, label, payload)
Outgoing = List[Tuple[int, Message]]   # (destination, message)


class ProofUnavailable(Exception):
    """The local process does not hold certificates for the requested window."""


def quorum(n: int, f: int) -> int:
    return (n + f + 2) // 2


def verify_certificate(cert: Certificate, verify_keys: Mapping[int, bytes], n: int, f: int,
                       scheme) -> bool:
    if len(cert.signatures) < quorum(n, f):
        return False
    body = echo_body(cert.sender, cert.label, cert.payload_digest)
    seen = set()
    for signer, sig in cert.signatures:
        if signer in seen or signer not in verify_keys:
            return False
        seen.add(signer)
        if not scheme.verify(verify_keys[signer], body, sig):
            return False
    return True


def bcch_verify_proof(proof: ResendProof, verify_keys: Mapping[int, bytes], n: int, f: int,
                      scheme) -> bool:
    """True iff every entry is certified, labels run consecutively from
    ``start_index`` and each certificate names the digest of its payload."""
    if proof.start_index < 1 or proof.sender not in verify_keys:
        return False
    for offset, (payload, cert) in enumerate(proof.entries):
        if cert.sender != proof.sender or cert.label != proof.start_index + offset:
            return False
        if digest(payload) != cert.payload_digest:
            return False
        if not verify_certificate(cert, verify_keys, n, f, scheme):
            return False
    return True


def bcch_get_length(proof: ResendProof) -> int:
    return len(proof.entries)


def bcch_get_messages(proof: ResendProof) -> List[bytes]:
    return [payload for payload, _ in proof.entries]


@dataclass
class _Instance:
    label: int
    payload: bytes
    digest: bytes
    echoes: Dict[int, bytes] = field(default_factory=dict)


class BcchChannel:
    """One process's endpoint of the channel.

    Handlers are deterministic and return ``(deliveries, outgoing)``;
    the caller owns the network.
    """

    def __init__(self, pid: int, n: int, f: int, scheme, keypair: KeyPair,
                 verify_keys: Mapping[int, bytes],
                 on_drop: Optional[Callable[..., None]] = None):
        self.pid = pid
        self.n = n
        self.f = f
        self.q = quorum(n, f)
        self.scheme = scheme
        self.keypair = keypair
        self.verify_keys = verify_keys
        self.on_drop = on_drop or (lambda reason, **info: None)
        self._queue: deque = deque()
        self._last_label = 0
        self._active: Optional[_Instance] = None
        self._echoed: Dict[Tuple[int, int], bytes] = {}
        self._next = {j: 1 for j in range(1, n + 1)}
        self._pending: Dict[int, Dict[int, Tuple[bytes, Certificate]]] = {
            j: {} for j in range(1, n + 1)}
        self._log: Dict[int, List[Tuple[bytes, Certificate]]] = {
            j: [] for j in range(1, n + 1)}

    # -- sending side -------------------------------------------------

    def broadcast(self, payload: bytes) -> Outgoing:
        self._queue.append(payload)
        if self._active is None:
            return self._activate()
        return []

    def _activate(self) -> Outgoing:
        if not self._queue:
            return []
        payload = self._queue.popleft()
        self._last_label += 1
        self._active = _Instance(self._last_label, payload, digest(payload))
        return self._send_instance(self._active)

    def _send_instance(self, inst: _Instance) -> Outgoing:
        msg = Send(self.pid, inst.label, inst.payload)
        return [(j, msg) for j in range(1, self.n + 1)]

    def _on_echo(self, src: int, msg: Echo) -> Outgoing:
        inst = self._active
        if msg.sender != self.pid or src != msg.echoer:
            self.on_drop("echo_misrouted", src=src, label=msg.label)
            return []
        if inst is None or msg.label != inst.label or msg.digest != inst.digest:
            return []  # late echo for a completed instance
        if src in inst.echoes:
            return []
        body = echo_body(self.pid, inst.label, inst.digest)
        if not self.scheme.verify(self.verify_keys[src], body, msg.signature):
            self.on_drop("bad_echo_signature", src=src, label=msg.label)
            return []
        inst.echoes[src] = msg.signature
        if len(inst.echoes) < self.q:
            return []
        sigs = tuple(sorted(inst.echoes.items()))
        final = Final(self.pid, inst.label, inst.payload, sigs)
        out: Outgoing = [(j, final) for j in range(1, self.n + 1)]
        self._active = None
        return out + self._activate()

    # -- receiving side -----------------------------------------------

    def _echo_for(self, sender: int, label: int, dig: bytes) -> Echo:
        sig = self.scheme.sign(self.keypair, echo_body(sender, label, dig))
        return Echo(self.pid, sender, label, dig, sig)

    def _on_send(self, src: int, msg: Send) -> Outgoing:
        if src != msg.sender or msg.label < 1:
            self.on_drop("bad_send", src=src, label=msg.label)
            return []
        key = (msg.sender, msg.label)
        dig = digest(msg.payload)
        prev = self._echoed.get(key)
        if prev is not None:
            if prev != dig:
                self.on_drop("conflicting_send", src=src, label=msg.label)
            return []
        self._echoed[key] = dig
        return [(msg.sender, self._echo_for(msg.sender, msg.label, dig))]

    def on_wire(self, src: int, msg: Message) -> Tuple[List[Delivery], Outgoing]:
        if isinstance(msg, Send):
            return [], self._on_send(src, msg)
        if isinstance(msg, Echo):
            return [], self._on_echo(src, msg)
        if isinstance(msg, Final):
            if msg.sender not in self._next or msg.label < 1:
                self.on_drop("bad_final", src=src, label=msg.label)
                return [], []
            cert = Certificate(msg.sender, msg.label, digest(msg.payload), msg.signatures)
            if not verify_certificate(cert, self.verify_keys, self.n, self.f, self.scheme):
                self.on_drop("bad_certificate", src=src, sender=msg.sender, label=msg.label)
                return [], []
            return self._accept(msg.sender, msg.label, msg.payload, cert), []
        raise TypeError(f"not a channel message: {type(msg).__name__}")

    def _accept(self, sender: int, label: int, payload: bytes,
                cert: Certificate) -> List[Delivery]:
        nxt = self._next[sender]
        if label < nxt:
            held = self._log[sender][label - 1][1]
            if held.payload_digest != cert.payload_digest:
                # unreachable with <= f faults; kept visible for overload runs
                self.on_drop("conflicting_certificate", sender=sender, label=label)
            return []
        if label > nxt:
            self._pending[sender].setdefault(label, (payload, cert))
            return []
        out = []
        pending = self._pending[sender]
        while True:
            self._log[sender].append((payload, cert))
            out.append((sender, label, payload))
            label += 1
            if label not in pending:
                break
            payload, cert = pending.pop(label)
        self._next[sender] = label
        return out

    # -- proofs -------------------------------------------------------

    def delivered_count(self, sender: int) -> int:
        return self._next[sender] - 1

    def bcch_create_proof(self, sender: int, start: int, end: int) -> ResendProof:
        """Proof for labels ``start..end`` (inclusive) of ``sender``."""
        if start < 1:
            raise ValueError("labels start at 1")
        if end < start:
            return ResendProof(sender, start, ())
        if end > self.delivered_count(sender):
            raise ProofUnavailable(f"labels up to {end} of p{sender} not delivered")
        return ResendProof(sender, start, tuple(self._log[sender][start - 1:end]))

    def bcch_verify_proof(self, proof: ResendProof) -> bool:
        return bcch_verify_proof(proof, self.verify_keys, self.n, self.f, self.scheme)

    def adopt(self, proof: ResendProof) -> List[Delivery]:
        """Feed the certificates of an already verified proof into the channel."""
        out: List[Delivery] = []
        for payload, cert in proof.entries:
            out.extend(self._accept(proof.sender, cert.label, payload, cert))
        return out

    def payload_at(self, sender: int, label: int) -> bytes:
        return self._log[sender][label - 1][0]


__all__ = [
    "BcchChannel", "ProofUnavailable", "quorum", "verify_certificate",
    "bcch_verify_proof", "bcch_get_length", "bcch_get_messages",
]

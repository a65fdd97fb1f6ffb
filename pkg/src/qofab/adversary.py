"""Scripted Byzantine behaviours.

Each strategy is a subclass of :class:`OrderFairProcess` that overrides
one part of the protocol and otherwise behaves correctly, so the faulty
process keeps the run moving while it lies.  Adversaries take their
randomness from a generator handed out by the simulator.
"""

from __future__ import annotations

import random
from typing import Dict, List, Optional, Sequence, Tuple

from .bcch import BcchChannel, Outgoing, _Instance
from .core import OrderFairProcess
from .crypto import digest, echo_body, status_body
from .vbc import Proposal, VbcInstance
from .wire import Certificate, Echo, Final, Missing, Resend, ResendProof, Send, Status

STRATEGIES = ("crash", "equivocate_bcch", "forge_status", "withhold_status",
              "skew_order", "vbc_bias")


class ByzantineMixin:
    strategy = "byzantine"

    def setup(self, rng: random.Random, params: dict, payload_pool: Sequence[bytes]) -> None:
        self.rng = rng
        self.params = dict(params)
        self.payload_pool = list(payload_pool)

    def fault(self, action: str, **info) -> None:
        self.env.record("FAULT_ACTION", pid=self.pid, strategy=self.strategy,
                        action=action, **info)


class CrashProcess(ByzantineMixin, OrderFairProcess):
    """Correct until tick ``crash_at``; silent afterwards."""

    strategy = "crash"

    def setup(self, rng, params, payload_pool):
        super().setup(rng, params, payload_pool)
        self.crash_at = int(params.get("t", 0))
        self._announced = False

    def crashed(self, tick: int) -> bool:
        if tick < self.crash_at:
            return False
        if not self._announced:
            self._announced = True
            self.fault("crash", at=self.crash_at)
        return True


class EquivocatingChannel(BcchChannel):
    """Sends two different payloads under one label and echoes both itself.

    ``split`` (a bitmask over the other processes in id order) fixes who
    gets the real payload; otherwise the split is drawn at random.
    """

    def configure(self, owner: "EquivocateProcess") -> None:
        self.owner = owner
        self._tally: Dict[bytes, Dict[int, bytes]] = {}
        self._alt: Optional[Tuple[bytes, bytes]] = None

    def _send_instance(self, inst: _Instance) -> Outgoing:
        owner = self.owner
        rng = owner.rng
        others = [j for j in range(1, self.n + 1) if j != self.pid]
        choices = [p for p in owner.payload_pool if p != inst.payload]
        alt = rng.choice(choices) if choices else inst.payload + b"'"
        split = owner.params.get("split")
        group_a = []
        for bit, j in enumerate(others):
            take = (int(split) >> bit) & 1 if split is not None else rng.random() < 0.5
            if take:
                group_a.append(j)
        self._alt = (alt, digest(alt))
        self._tally = {inst.digest: {}, self._alt[1]: {}}
        for dig, payload in ((inst.digest, inst.payload), (self._alt[1], alt)):
            self._tally[dig][self.pid] = self.scheme.sign(
                self.keypair, echo_body(self.pid, inst.label, dig))
            self._echoed[(self.pid, inst.label)] = inst.digest
        owner.fault("equivocate", label=inst.label, real=inst.digest.hex(),
                    alt=self._alt[1].hex(), group_a=group_a)
        out: Outgoing = []
        for j in others:
            payload = inst.payload if j in group_a else alt
            out.append((j, Send(self.pid, inst.label, payload)))
        return out

    def _on_echo(self, src: int, msg: Echo) -> Outgoing:
        inst = self._active
        if inst is None or msg.sender != self.pid or msg.label != inst.label:
            return []
        votes = self._tally.get(msg.digest)
        if votes is None or src in votes or src != msg.echoer:
            return []
        body = echo_body(self.pid, inst.label, msg.digest)
        if not self.scheme.verify(self.verify_keys[src], body, msg.signature):
            return []
        votes[src] = msg.signature
        if len(votes) < self.q:
            return []
        payload = inst.payload if msg.digest == inst.digest else self._alt[0]
        final = Final(self.pid, inst.label, payload, tuple(sorted(votes.items())))
        rng = self.owner.rng
        targets = [j for j in range(1, self.n + 1) if j == self.pid or rng.random() < 0.5]
        self.owner.fault("partial_final", label=inst.label, digest=msg.digest.hex(),
                         targets=targets)
        self._active = None
        return [(j, final) for j in targets] + self._activate()


class EquivocateProcess(ByzantineMixin, OrderFairProcess):
    """Equivocates inside its own channel and answers MISSING with forged proofs."""

    strategy = "equivocate_bcch"
    channel_class = EquivocatingChannel

    def setup(self, rng, params, payload_pool):
        super().setup(rng, params, payload_pool)
        self.channel.configure(self)
        self.forged: List[str] = []

    def forge_proof(self, k: int, start: int, count: int) -> ResendProof:
        f = self.f
        entries = []
        for offset in range(max(1, count)):
            label = start + offset
            payload = b"forged:%d:%d:%d" % (self.pid, k, label)
            dig = digest(payload)
            sigs = [(self.pid, self.scheme.sign(self.keypair, echo_body(k, label, dig)))]
            others = [j for j in range(1, self.n + 1) if j != self.pid]
            for j in others[:f - 1]:
                sigs.append((j, bytes(self.rng.getrandbits(8) for _ in range(self.scheme.sig_len))))
            entries.append((payload, Certificate(k, label, dig, tuple(sorted(sigs)))))
            self.forged.append(dig.hex())
        return ResendProof(k, start, tuple(entries))

    def on_missing(self, src: int, msg: Missing) -> None:
        if 1 <= msg.k <= self.n and msg.round <= self.r:
            proof = self.forge_proof(msg.k, msg.ind + 1, 1)
            self.fault("forged_proof", to=src, sender=msg.k, start=msg.ind + 1,
                       digests=[e[1].payload_digest.hex() for e in proof.entries],
                       signatures=len(proof.entries[0][1].signatures))
            self.env.send(src, Resend(msg.round, msg.k, proof))
        super().on_missing(src, msg)


class ForgeStatusProcess(ByzantineMixin, OrderFairProcess):
    """Signs a lying vector clock, chosen independently per recipient."""

    strategy = "forge_status"

    def status_for(self, dest: int) -> Status:
        spread = int(self.params.get("spread", 3))
        vc = tuple(max(0, v + self.rng.randint(-spread, spread)) for v in self.vc)
        self.fault("forged_status", to=dest, round=self.r, vc=list(vc))
        return Status(self.r, vc, self.scheme.sign(self.keypair, status_body(self.r, vc)))


class WithholdStatusProcess(ByzantineMixin, OrderFairProcess):
    """Takes part in the channel but never reports a vector clock."""

    strategy = "withhold_status"

    def send_status(self) -> None:
        self.reported = list(self.vc)
        self.fault("withheld_status", round=self.r)


class SkewOrderProcess(ByzantineMixin, OrderFairProcess):
    """Behaves correctly; the simulator broadcasts its schedule in reverse order."""

    strategy = "skew_order"


class VbcBiasProcess(ByzantineMixin, OrderFairProcess):
    """Proposes the stalest valid matrix it can build and steers the decision to it."""

    strategy = "vbc_bias"

    def make_proposal(self) -> Proposal:
        n, f = self.n, self.f
        zero = tuple([0] * n)
        rows: List[Tuple[int, ...]] = [zero] * n
        sigs: List[Optional[bytes]] = [None] * n
        rows[self.pid - 1] = zero
        sigs[self.pid - 1] = self.scheme.sign(self.keypair, status_body(self.r, zero))
        held = [j for j in range(1, n + 1) if j != self.pid and self.sigma[j - 1] is not None]
        held.sort(key=lambda j: (sum(self.L[j - 1]), j))
        for j in held[:n - f - 1]:
            rows[j - 1] = tuple(self.L[j - 1])
            sigs[j - 1] = self.sigma[j - 1]
        self.fault("biased_proposal", round=self.r)
        return Proposal(self.r, tuple(rows), tuple(sigs))


def bias_chooser(byzantine: Sequence[int]):
    """Decision hook: a Byzantine proposal if one is valid, else the stalest one."""
    bad = frozenset(byzantine)

    def choose(inst: VbcInstance, candidates) -> Optional[int]:
        for pid, _, _ in candidates:
            if pid in bad:
                return pid
        return min(candidates, key=lambda c: (sum(map(sum, c[1].rows)), c[0]))[0]

    return choose


PROCESS_CLASSES = {
    "crash": CrashProcess,
    "equivocate_bcch": EquivocateProcess,
    "forge_status": ForgeStatusProcess,
    "withhold_status": WithholdStatusProcess,
    "skew_order": SkewOrderProcess,
    "vbc_bias": VbcBiasProcess,
}

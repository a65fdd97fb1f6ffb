"""Validated Byzantine consensus, one instance per ordering round.

The consensus itself is an *ideal* functionality hosted by the simulator:
it waits until ``n - f`` correct processes have proposed, then decides the
predicate-valid proposal that arrived first (ties: lowest proposer id).  An
optional ``chooser`` lets an adversary pick any other valid proposal, which
models a malicious leader in a real protocol.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .crypto import status_body

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Proposal:
    """The matrix ``L`` of reported vector clocks plus one optional signature per row."""

    round: int
    rows: Tuple[Tuple[int, ...], ...]
    sigs: Tuple[Optional[bytes], ...]

    @property
    def n(self) -> int:
        return len(self.rows)

    def encoded_size(self) -> int:
        """``len(self.encode())`` without building the bytes."""
        n = len(self.rows)
        return 10 + 8 * n * n + n + sum(len(s) for s in self.sigs if s is not None)

    def encode(self) -> bytes:
        n = len(self.rows)
        out = [struct.pack(">QH", self.round, n)]
        for row in self.rows:
            out.append(struct.pack(f">{n}Q", *row))
        for sig in self.sigs:
            if sig is None:
                out.append(b"\x00")
            else:
                out.append(b"\x01" + sig)
        return b"".join(out)

    @classmethod
    def decode(cls, data: bytes, sig_len: int) -> "Proposal":
        round_, n = struct.unpack_from(">QH", data, 0)
        pos = 10
        rows = []
        for _ in range(n):
            rows.append(tuple(struct.unpack_from(f">{n}Q", data, pos)))
            pos += 8 * n
        sigs: List[Optional[bytes]] = []
        for _ in range(n):
            flag = data[pos]
            pos += 1
            if flag:
                sigs.append(bytes(data[pos:pos + sig_len]))
                pos += sig_len
            else:
                sigs.append(None)
        if pos != len(data):
            raise ValueError("trailing bytes in proposal")
        return cls(round_, tuple(rows), tuple(sigs))


def signed_rows(p: Proposal, verify_keys: Mapping[int, bytes], n: int, scheme) -> List[int]:
    """1-based ids ``j`` whose row carries a valid STATUS signature by ``p_j``."""
    if len(p.rows) != n or len(p.sigs) != n:
        return []
    good = []
    for j in range(1, n + 1):
        sig = p.sigs[j - 1]
        row = p.rows[j - 1]
        if sig is None or len(row) != n:
            continue
        if scheme.verify(verify_keys[j], status_body(p.round, row), sig):
            good.append(j)
    return good


def predicate_valid(p: Proposal, verify_keys: Mapping[int, bytes], n: int, f: int,
                    scheme) -> bool:
    """External validity: at least ``n - f`` rows are validly signed by their owner."""
    return len(signed_rows(p, verify_keys, n, scheme)) >= n - f


@dataclass
class VbcInstance:
    round: int
    proposals: List[Tuple[int, Proposal, int, bool]] = field(default_factory=list)
    decided: Optional[Tuple[int, Proposal]] = None

    def proposers(self) -> List[int]:
        return [pid for pid, _, _, _ in self.proposals]


Chooser = Callable[[VbcInstance, Sequence[Tuple[int, Proposal, int]]], Optional[int]]


class IdealVbc:
    def __init__(self, n: int, f: int, verify_keys: Mapping[int, bytes], scheme,
                 correct: Sequence[int], chooser: Optional[Chooser] = None):
        self.n = n
        self.f = f
        self.verify_keys = verify_keys
        self.scheme = scheme
        self.correct = frozenset(correct)
        self.chooser = chooser
        self.instances: Dict[int, VbcInstance] = {}

    def instance(self, round_: int) -> VbcInstance:
        inst = self.instances.get(round_)
        if inst is None:
            inst = self.instances[round_] = VbcInstance(round_)
        return inst

    def vbc_propose(self, round_: int, proposer: int, proposal: Proposal, tick: int) -> bool:
        """Register a proposal; returns False for duplicates and late arrivals."""
        inst = self.instance(round_)
        if inst.decided is not None:
            return False
        if proposer in inst.proposers():
            log.info("vbc round %d: duplicate proposal from p%d ignored", round_, proposer)
            return False
        valid = proposal.round == round_ and predicate_valid(
            proposal, self.verify_keys, self.n, self.f, self.scheme)
        inst.proposals.append((proposer, proposal, tick, valid))
        return True

    def ready(self, round_: int) -> bool:
        inst = self.instance(round_)
        if inst.decided is not None:
            return False
        correct = sum(1 for pid, _, _, _ in inst.proposals if pid in self.correct)
        return correct >= self.n - self.f and any(v for _, _, _, v in inst.proposals)

    def ideal_decide(self, round_: int) -> Tuple[int, Proposal]:
        """Fix the decision of ``round_``; returns ``(proposer, proposal)``."""
        inst = self.instance(round_)
        if inst.decided is not None:
            return inst.decided
        candidates = [(pid, p, t) for pid, p, t, v in inst.proposals if v]
        if not candidates:
            raise RuntimeError(f"round {round_} has no valid proposal")
        pick = None
        if self.chooser is not None:
            wanted = self.chooser(inst, candidates)
            pick = next((c for c in candidates if c[0] == wanted), None)
        if pick is None:
            pick = min(candidates, key=lambda c: (c[2], c[0]))
        inst.decided = (pick[0], pick[1])
        return inst.decided

"""Per-process state machine of the quick order-fair atomic broadcast protocol.

A process talks to the outside world only through an *environment* object::

    env.now                       current tick
    env.send(dest, msg)           point-to-point wire message
    env.propose(round, proposal)  hand a proposal to the round's consensus
    env.record(kind, **fields)    append a trace event
    env.record_stats              whether ORDER_STATS events are wanted

The simulator implements it; unit tests use a recording stub.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

from .bcch import BcchChannel, Delivery
from .crypto import KeyPair, digest, status_body
from .fair_graph import order_round
from .vbc import Proposal, signed_rows
from .wire import Echo, Final, Message, Missing, Resend, Send, Status

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    f: int
    kappa: int = 0
    K: int = 1

    def __post_init__(self):
        if self.n <= 3 * self.f:
            raise ValueError(f"need n > 3f, got n={self.n}, f={self.f}")
        if self.kappa < 0 or self.K < 1:
            raise ValueError("need kappa >= 0 and K >= 1")


def compute_cut(rows: Sequence[Sequence[int]], f: int) -> List[int]:
    """``cut[j]`` = largest ``s`` with at least ``f+1`` rows reporting ``>= s`` in column ``j``.

    That is the ``(f+1)``-st largest entry of the column.
    """
    n = len(rows)
    if n <= f:
        return [0] * len(rows[0]) if rows else []
    cols = len(rows[0])
    return [sorted((row[j] for row in rows), reverse=True)[f] for j in range(cols)]


class OrderFairProcess:
    channel_class = BcchChannel

    def __init__(self, pid: int, config: ProtocolConfig, scheme, keypair: KeyPair,
                 verify_keys: Mapping[int, bytes], env):
        self.pid = pid
        self.config = config
        self.n = n = config.n
        self.f = config.f
        self.scheme = scheme
        self.keypair = keypair
        self.verify_keys = verify_keys
        self.env = env
        self.channel = self.channel_class(pid, n, config.f, scheme, keypair, verify_keys,
                                          on_drop=self._drop)
        self.r = 1
        self.inround = False
        self.msgs: Dict[int, List[bytes]] = {j: [] for j in range(1, n + 1)}
        self.vc = [0] * n
        self.L = [[0] * n for _ in range(n)]
        self.sigma: List[Optional[bytes]] = [None] * n
        self.cut = [0] * n
        self.reported = [0] * n
        self.delivered: set = set()
        self.payloads: Dict[bytes, bytes] = {}
        self.proposed = False
        self.decided = False
        self.cuts: Dict[int, List[int]] = {}
        self.broadcast_count = 0
        self._early: Dict[int, List] = defaultdict(list)
        self._await_cut: List = []
        self._status: Optional[Status] = None

    # -- helpers ----------------------------------------------------------

    def _drop(self, reason: str, **info) -> None:
        log.info("p%d drop %s %s", self.pid, reason, info)
        self.env.record("DROP", pid=self.pid, reason=reason, **info)

    def _send_all(self, msg: Message) -> None:
        for j in range(1, self.n + 1):
            self.env.send(j, msg)

    def _send_out(self, out) -> None:
        for dest, msg in out:
            self.env.send(dest, msg)

    def new_payloads(self) -> int:
        """Payloads beyond the cut that no STATUS of ours has reported yet."""
        return sum(max(0, v - max(c, s)) for v, c, s in zip(self.vc, self.cut, self.reported))

    # -- broadcast path -----------------------------------------------------

    def of_broadcast(self, payload: bytes) -> None:
        self.broadcast_count += 1
        self.env.record("OF_BROADCAST", pid=self.pid, digest=digest(payload).hex(),
                        seq=self.broadcast_count, payload=payload.hex())
        self._send_out(self.channel.broadcast(payload))

    def on_message(self, src: int, msg: Message) -> None:
        t = type(msg)
        if t is Send or t is Echo or t is Final:
            deliveries, out = self.channel.on_wire(src, msg)
            self._send_out(out)
            self._deliver_all(deliveries, "bcch")
        elif t is Status:
            self.on_status(src, msg)
        elif t is Missing:
            self.on_missing(src, msg)
        elif t is Resend:
            self.on_resend(src, msg)
        else:
            raise TypeError(type(msg).__name__)

    def _deliver_all(self, deliveries: List[Delivery], via: str) -> None:
        if not deliveries:
            return
        for j, label, payload in deliveries:
            self.on_bcch_deliver(j, label, payload, via)
        self._progress()

    def on_bcch_deliver(self, j: int, label: int, payload: bytes, via: str = "bcch") -> None:
        """Fill position ``label`` of ``msgs[j]``; a position already filled is left alone."""
        have = self.vc[j - 1]
        d = digest(payload)
        if label <= have:
            if self.msgs[j][label - 1] != d:
                self._drop("conflicting_fill", sender=j, label=label)
            return
        if label != have + 1:
            raise AssertionError(f"p{self.pid}: gap in log of p{j} ({have} -> {label})")
        self.msgs[j].append(d)
        self.payloads.setdefault(d, payload)
        self.vc[j - 1] = label
        self.env.record("BCCH_DELIVER", pid=self.pid, sender=j, label=label,
                        digest=d.hex(), via=via)

    def _progress(self) -> None:
        self.maybe_start_round()
        self.maybe_finish_round()

    # -- round start and status exchange ---------------------------------

    def maybe_start_round(self, force: bool = False) -> None:
        if self.inround or self.decided:
            return
        new = self.new_payloads()
        if new >= self.config.K or (force and new > 0):
            self.inround = True
            self.send_status()

    def status_for(self, dest: int) -> Status:
        """The STATUS sent to ``dest``; the same for everyone unless overridden."""
        cached = self._status
        if cached is None or cached.round != self.r or list(cached.vc) != self.vc:
            vc = tuple(self.vc)
            cached = self._status = Status(
                self.r, vc, self.scheme.sign(self.keypair, status_body(self.r, vc)))
        return cached

    def send_status(self) -> None:
        self.reported = list(self.vc)
        self.env.record("STATUS", pid=self.pid, round=self.r, vc=list(self.vc))
        for j in range(1, self.n + 1):
            self.env.send(j, self.status_for(j))

    def on_idle(self) -> None:
        """Batch timeout: the host calls this when the network is quiet."""
        self.maybe_start_round(force=True)

    def on_status(self, src: int, msg: Status) -> None:
        if msg.round < self.r:
            return
        if msg.round > self.r:
            self._early[msg.round].append((self.on_status, src, msg))
            return
        if len(msg.vc) != self.n or not self.scheme.verify(
                self.verify_keys[src], status_body(msg.round, msg.vc), msg.signature):
            self._drop("bad_status", src=src, round=msg.round)
            return
        self.L[src - 1] = list(msg.vc)
        self.sigma[src - 1] = msg.signature
        if not self.inround and not self.decided:
            # join a round someone else started, so it can gather n-f reports
            self.inround = True
            self.send_status()
        self.maybe_propose()

    def maybe_propose(self) -> None:
        if self.proposed or self.decided:
            return
        if sum(s is not None for s in self.sigma) < self.n - self.f:
            return
        proposal = self.make_proposal()
        self.proposed = True
        self.sigma = [None] * self.n
        self.env.record("VBC_PROPOSE", pid=self.pid, round=self.r,
                        size=proposal.encoded_size())
        self.env.propose(self.r, proposal)

    def make_proposal(self) -> Proposal:
        return Proposal(self.r, tuple(tuple(row) for row in self.L), tuple(self.sigma))

    # -- decision, cut and missing payloads ----------------------------------

    def on_vbc_decide(self, round_: int, proposal: Proposal) -> None:
        if round_ < self.r or (round_ == self.r and self.decided):
            return
        if round_ > self.r:
            self._early[round_].append((self.on_vbc_decide, round_, proposal))
            return
        signed = set(signed_rows(proposal, self.verify_keys, self.n, self.scheme))
        if proposal.round != round_ or len(signed) < self.n - self.f:
            self._drop("invalid_decision", round=round_)
            return
        rows = [list(proposal.rows[k - 1]) if k in signed else [0] * self.n
                for k in range(1, self.n + 1)]
        fresh = compute_cut(rows, self.f)
        self.cut = [max(a, b) for a, b in zip(self.cut, fresh)]
        self.cuts[self.r] = list(self.cut)
        self.decided = True
        self.env.record("VBC_DECIDE", pid=self.pid, round=self.r, cut=list(self.cut))
        for j in range(1, self.n + 1):
            if self.vc[j - 1] < self.cut[j - 1]:
                miss = Missing(self.r, j, self.vc[j - 1])
                for k in range(1, self.n + 1):
                    if k != self.pid:
                        self.env.send(k, miss)
        waiting, self._await_cut = self._await_cut, []
        for src, msg in waiting:
            self.on_missing(src, msg)
        self._progress()

    def on_missing(self, src: int, msg: Missing) -> None:
        if msg.round > self.r:
            self._early[msg.round].append((self.on_missing, src, msg))
            return
        if msg.round == self.r and not self.decided:
            self._await_cut.append((src, msg))
            return
        cut = self.cuts.get(msg.round)
        if cut is None or not 1 <= msg.k <= self.n:
            return
        upto = cut[msg.k - 1]
        if self.vc[msg.k - 1] >= upto and msg.ind < upto:
            proof = self.channel.bcch_create_proof(msg.k, msg.ind + 1, upto)
            self.env.send(src, Resend(msg.round, msg.k, proof))

    def on_resend(self, src: int, msg: Resend) -> None:
        k = msg.k
        if msg.round != self.r or not self.decided or not 1 <= k <= self.n:
            return
        if self.vc[k - 1] >= self.cut[k - 1]:
            return
        proof = msg.proof
        if proof.sender != k or not self.channel.bcch_verify_proof(proof):
            self._drop("bad_proof", src=src, sender=k, round=msg.round)
            return
        if proof.start_index > self.vc[k - 1] + 1:
            self._drop("misaligned_proof", src=src, sender=k, round=msg.round)
            return
        last = proof.start_index + len(proof.entries) - 1
        deliveries = self.channel.adopt(proof)
        for j, label, payload in deliveries:
            self.on_bcch_deliver(j, label, payload, "resend" if label <= last else "bcch")
        self._progress()

    # -- ordering ------------------------------------------------------------

    def maybe_finish_round(self) -> None:
        if not self.decided:
            return
        if any(v < c for v, c in zip(self.vc, self.cut)):
            return
        logs = [self.msgs[j] for j in range(1, self.n + 1)]
        cfg = self.config
        stats, _, _, batches = order_round(logs, self.cut, self.delivered, cfg.n, cfg.f, cfg.kappa)
        if self.env.record_stats:
            index = {m: i for i, m in enumerate(stats.V)}
            self.env.record(
                "ORDER_STATS", pid=self.pid, round=self.r, cut=list(self.cut),
                V=[m.hex() for m in stats.V], C=[stats.C[m] for m in stats.V],
                M=sorted([index[a], index[b], c] for (a, b), c in stats.M.items()))
        for i, batch in enumerate(batches):
            self.env.record("OF_DELIVER_BATCH", pid=self.pid, round=self.r, batch=i,
                            digests=sorted(m.hex() for m in batch))
            self.delivered |= batch
        self.env.record("ROUND_END", pid=self.pid, round=self.r, cut=list(self.cut),
                        batches=len(batches))
        self.L = [[0] * self.n for _ in range(self.n)]
        self.sigma = [None] * self.n
        self.inround = False
        self.proposed = False
        self.decided = False
        self.r += 1
        self.maybe_start_round()
        for handler, *args in self._early.pop(self.r, []):
            handler(*args)

"""Post-hoc property checks over a trace.

Nothing here imports the protocol modules: ground truth, before-counts
and the fairness rule are recomputed from the recorded events alone.
Only correct processes (those outside the scenario's Byzantine set) are
held to the properties.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Set, Tuple

Pair = Tuple[str, str]
Position = Tuple[int, int]

VIOLATION_CLASSES = (
    "fairness", "duplication", "agreement", "total_order", "weak_validity",
    "bcch_consistency", "bcch_fifo", "bcch_integrity", "forged_proof",
    "order_stats", "edge_bound", "cut_monotonic", "batch_edges",
)


@dataclass(frozen=True)
class Violation:
    cls: str
    detail: str

    def __str__(self) -> str:
        return f"{self.cls}: {self.detail}"


@dataclass
class Report:
    violations: List[Violation] = field(default_factory=list)
    info: Dict[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def classes(self) -> Set[str]:
        return {v.cls for v in self.violations}

    def lines(self) -> List[str]:
        out = [str(v) for v in self.violations]
        for key in sorted(self.info):
            out.append(f"info {key}: {self.info[key]}")
        out.append("clean" if self.ok else f"{len(self.violations)} violation(s)")
        return out


class TraceView:
    """Indexes the events of one trace once, for all checks."""

    def __init__(self, header: dict, events: Iterable[dict]):
        self.header = header
        self.events = list(events)
        self.n = int(header["n"])
        self.f = int(header["f"])
        self.kappa = int(header.get("kappa", 0))
        self.byzantine = set(header.get("byzantine", []))
        self.correct = [p for p in range(1, self.n + 1) if p not in self.byzantine]
        self.by_kind: Dict[str, List[dict]] = defaultdict(list)
        for ev in self.events:
            self.by_kind[ev["kind"]].append(ev)
        self.end = self.events[-1] if self.events and self.events[-1]["kind"] == "END" else None

    @classmethod
    def of(cls, trace) -> "TraceView":
        if isinstance(trace, TraceView):
            return trace
        return cls(trace.header, trace.events)

    def quiescent(self) -> bool:
        return bool(self.end and self.end.get("quiescent"))

    def batches(self, pid: int) -> List[Tuple[Position, frozenset]]:
        return [((ev["round"], ev["batch"]), frozenset(ev["digests"]))
                for ev in self.by_kind["OF_DELIVER_BATCH"] if ev["pid"] == pid]


# -- ground truth -------------------------------------------------------------

def broadcast_orders(view: TraceView) -> Dict[int, List[str]]:
    orders: Dict[int, List[str]] = {p: [] for p in view.correct}
    for ev in view.by_kind["OF_BROADCAST"]:
        pid = ev["pid"]
        if pid in orders and ev["digest"] not in orders[pid]:
            orders[pid].append(ev["digest"])
    return orders


def compute_b(trace) -> Dict[Pair, int]:
    """``b[(x, y)]``: correct processes that broadcast ``x`` before ``y``.

    Pairs where a process broadcast only one of the two do not count for it.
    """
    view = TraceView.of(trace)
    b: Dict[Pair, int] = defaultdict(int)
    for order in broadcast_orders(view).values():
        for i, x in enumerate(order):
            for y in order[i + 1:]:
                b[(x, y)] += 1
    return dict(b)


def _positions(view: TraceView, pid: int) -> Dict[str, Position]:
    pos: Dict[str, Position] = {}
    for where, batch in view.batches(pid):
        for d in batch:
            pos.setdefault(d, where)
    return pos


def strict_pairs(b: Dict[Pair, int], f: int, kappa: int) -> List[Pair]:
    """Pairs ``(x, y)`` with ``b(x,y) > b(y,x) + 2f + kappa``."""
    keys = {k for pair in b for k in pair}
    out = []
    for x in sorted(keys):
        for y in sorted(keys):
            if x != y and (x, y) in b and b[(x, y)] > b.get((y, x), 0) + 2 * f + kappa:
                out.append((x, y))
    return out


# -- delivery properties ---------------------------------------------------------

def check_fairness(trace, n: Optional[int] = None, f: Optional[int] = None,
                   kappa: Optional[int] = None) -> List[Violation]:
    """Flag ``y`` delivered in an earlier batch than ``x`` (or without ``x``)
    while ``x`` leads ``y`` by more than ``2f + kappa`` correct processes."""
    view = TraceView.of(trace)
    f = view.f if f is None else f
    kappa = view.kappa if kappa is None else kappa
    b = compute_b(view)
    found = []
    pairs = strict_pairs(b, f, kappa)
    for pid in view.correct:
        pos = _positions(view, pid)
        for x, y in pairs:
            if y not in pos:
                continue
            if x not in pos or pos[y] < pos[x]:
                found.append(Violation("fairness", f"p{pid} delivered {y[:8]} at {pos[y]} before "
                                       f"{x[:8]} at {pos.get(x, 'never')} (b={b[(x, y)]}:"
                                       f"{b.get((y, x), 0)})"))
    return found


def check_no_duplication(trace) -> List[Violation]:
    view = TraceView.of(trace)
    found = []
    for pid in view.correct:
        seen: Set[str] = set()
        for where, batch in view.batches(pid):
            for d in sorted(batch):
                if d in seen:
                    found.append(Violation("duplication", f"p{pid} delivered {d[:8]} again at {where}"))
                seen.add(d)
    return found


def _round_ends(view: TraceView) -> Dict[int, Dict[int, dict]]:
    ends: Dict[int, Dict[int, dict]] = defaultdict(dict)
    for ev in view.by_kind["ROUND_END"]:
        if ev["pid"] in view.correct:
            ends[ev["pid"]][ev["round"]] = ev
    return ends


def check_agreement(trace) -> List[Violation]:
    """Rounds finished by every correct process carry the same cut and batches."""
    view = TraceView.of(trace)
    ends = _round_ends(view)
    per_round: Dict[int, Dict[int, list]] = defaultdict(dict)
    for pid in view.correct:
        for (rnd, _), batch in view.batches(pid):
            per_round[rnd].setdefault(pid, []).append(batch)
    found = []
    if not view.correct:
        return found
    finished = set.intersection(*(set(ends.get(p, {})) for p in view.correct))
    for rnd in sorted(finished):
        ref = view.correct[0]
        for pid in view.correct[1:]:
            if ends[pid][rnd]["cut"] != ends[ref][rnd]["cut"]:
                found.append(Violation("agreement", f"round {rnd}: cut of p{pid} differs from p{ref}"))
            if per_round[rnd].get(pid, []) != per_round[rnd].get(ref, []):
                found.append(Violation("agreement",
                                       f"round {rnd}: batches of p{pid} differ from p{ref}"))
    if view.quiescent():
        counts = {p: len(ends.get(p, {})) for p in view.correct}
        if len(set(counts.values())) > 1 and not view.byzantine:
            found.append(Violation("agreement", f"quiescent run with unequal round counts {counts}"))
    return found


def check_total_order(trace) -> List[Violation]:
    """Batch sequences of correct processes agree on their common prefix."""
    view = TraceView.of(trace)
    seqs = {p: [batch for _, batch in view.batches(p)] for p in view.correct}
    found = []
    for p, q in combinations(view.correct, 2):
        a, b = seqs[p], seqs[q]
        for i in range(min(len(a), len(b))):
            if a[i] != b[i]:
                found.append(Violation("total_order", f"p{p} and p{q} diverge at batch #{i}"))
                break
    return found


def scheduled_everywhere(view: TraceView) -> Set[str]:
    """Digests of payloads that every correct process is scheduled to broadcast."""
    schedule = view.header.get("schedule", {})
    wanted = None
    for pid in view.correct:
        mine = {hashlib.sha256(bytes.fromhex(p)).hexdigest()
                for _, p in schedule.get(str(pid), [])}
        wanted = mine if wanted is None else wanted & mine
    return wanted or set()


def check_weak_validity(trace) -> List[Violation]:
    """Fault-free runs only: every payload broadcast by all processes is delivered everywhere."""
    view = TraceView.of(trace)
    if view.byzantine:
        return []
    wanted = scheduled_everywhere(view)
    found = []
    for pid in view.correct:
        got = set(_positions(view, pid))
        missing = wanted - got
        if missing:
            found.append(Violation("weak_validity",
                                   f"p{pid} never delivered {len(missing)} payload(s)"))
    return found


def delivery_coverage(trace) -> Dict[int, float]:
    view = TraceView.of(trace)
    wanted = scheduled_everywhere(view)
    if not wanted:
        return {p: 1.0 for p in view.correct}
    return {p: len(wanted & set(_positions(view, p))) / len(wanted) for p in view.correct}


# -- channel properties -------------------------------------------------------

def check_bcch(trace) -> List[Violation]:
    """Consistency, FIFO and (for correct senders) integrity of the channel log."""
    view = TraceView.of(trace)
    found = []
    held: Dict[Tuple[int, int], Dict[str, int]] = defaultdict(dict)
    last: Dict[Tuple[int, int], int] = defaultdict(int)
    sent: Dict[int, List[str]] = defaultdict(list)
    for ev in view.by_kind["OF_BROADCAST"]:
        sent[ev["pid"]].append(ev["digest"])
    for ev in view.by_kind["BCCH_DELIVER"]:
        pid, k, label, d = ev["pid"], ev["sender"], ev["label"], ev["digest"]
        if pid not in view.correct:
            continue
        held[(k, label)].setdefault(d, pid)
        if label != last[(pid, k)] + 1:
            found.append(Violation("bcch_fifo", f"p{pid} got label {label} of p{k} after "
                                   f"{last[(pid, k)]}"))
        last[(pid, k)] = label
        if k in view.correct:
            if label > len(sent[k]) or sent[k][label - 1] != d:
                found.append(Violation("bcch_integrity",
                                       f"p{pid} delivered ({k},{label}) never broadcast by p{k}"))
    for (k, label), digests in sorted(held.items()):
        if len(digests) > 1:
            found.append(Violation("bcch_consistency",
                                   f"({k},{label}) delivered as {len(digests)} distinct payloads"))
    forged = set()
    for ev in view.by_kind["FAULT_ACTION"]:
        if ev.get("action") == "forged_proof":
            forged.update(ev["digests"])
    for ev in view.by_kind["BCCH_DELIVER"]:
        if ev["pid"] in view.correct and ev["digest"] in forged:
            found.append(Violation("forged_proof",
                                   f"p{ev['pid']} accepted forged entry ({ev['sender']},{ev['label']})"))
    return found


def forged_proof_stats(trace) -> Tuple[int, int]:
    """(forged proofs sent, forged proofs rejected by correct processes)."""
    view = TraceView.of(trace)
    sent = sum(1 for ev in view.by_kind["FAULT_ACTION"] if ev.get("action") == "forged_proof"
               and ev.get("to") in view.correct)
    rejected = sum(1 for ev in view.by_kind["DROP"] if ev.get("reason") == "bad_proof"
                   and ev["pid"] in view.correct)
    return sent, rejected


# -- ordering-phase recomputation ---------------------------------------------

def _dense_counts(logs: Dict[int, List[str]], cut: List[int], skip: Set[str]):
    M: Dict[Pair, int] = defaultdict(int)
    C: Dict[str, int] = defaultdict(int)
    for j, log in logs.items():
        prefix: List[str] = []
        for d in log[:cut[j - 1]]:
            if d not in skip and d not in prefix:
                prefix.append(d)
        for i, x in enumerate(prefix):
            C[x] += 1
            for y in prefix[i + 1:]:
                M[(x, y)] += 1
    return M, C


def _has_edge(M: Dict[Pair, int], x: str, y: str, n: int, f: int, kappa: int) -> bool:
    fwd, back = M.get((x, y), 0), M.get((y, x), 0)
    return fwd > back - f + kappa or n - f - back > back - f + kappa


def replay_rounds(trace):
    """Per correct process and round: the logs, cut and recomputed counts.

    Yields ``(pid, round, cut, logs, delivered_before, M, C)`` where the
    logs are rebuilt from channel deliveries recorded before the round ended.
    """
    view = TraceView.of(trace)
    logs = {p: {j: [] for j in range(1, view.n + 1)} for p in view.correct}
    delivered = {p: set() for p in view.correct}
    fresh = {p: set() for p in view.correct}
    for ev in view.events:
        kind = ev["kind"]
        pid = ev.get("pid")
        if pid not in logs:
            continue
        if kind == "BCCH_DELIVER":
            logs[pid][ev["sender"]].append(ev["digest"])
        elif kind == "ROUND_END":
            cut = ev["cut"]
            snap = {j: list(v) for j, v in logs[pid].items()}
            M, C = _dense_counts(snap, cut, delivered[pid])
            yield pid, ev["round"], cut, snap, set(delivered[pid]), M, C
            delivered[pid] |= fresh[pid]
            fresh[pid] = set()
        elif kind == "OF_DELIVER_BATCH":
            fresh[pid].update(ev["digests"])


def check_order_stats(trace) -> List[Violation]:
    """Recorded ORDER_STATS must equal the counts recomputed from the channel log."""
    view = TraceView.of(trace)
    recorded = {(ev["pid"], ev["round"]): ev for ev in view.by_kind["ORDER_STATS"]}
    found = []
    if not recorded:
        return found
    for pid, rnd, cut, _, _, M, C in replay_rounds(view):
        ev = recorded.get((pid, rnd))
        if ev is None:
            found.append(Violation("order_stats", f"p{pid} round {rnd}: stats missing"))
            continue
        V = ev["V"]
        got_C = dict(zip(V, ev["C"]))
        got_M = {(V[i], V[j]): c for i, j, c in ev["M"]}
        if got_C != dict(C) or got_M != {k: v for k, v in M.items() if v}:
            found.append(Violation("order_stats", f"p{pid} round {rnd}: recorded M/C differ"))
    return found


def check_batch_edges(trace) -> List[Violation]:
    """Batches of a round never run against a recomputed edge, and they meet the stability bar."""
    view = TraceView.of(trace)
    n, f, kappa = view.n, view.f, view.kappa
    batches: Dict[Tuple[int, int], List[frozenset]] = defaultdict(list)
    for pid in view.correct:
        for (rnd, _), batch in view.batches(pid):
            batches[(pid, rnd)].append(batch)
    found = []
    for pid, rnd, _, _, _, M, C in replay_rounds(view):
        out = batches.get((pid, rnd), [])
        index = {d: i for i, batch in enumerate(out) for d in batch}
        for d, i in index.items():
            if 2 * C.get(d, 0) < n + f - kappa:
                found.append(Violation("batch_edges", f"p{pid} round {rnd}: unstable {d[:8]} delivered"))
        for x in C:
            for y in index:
                if x == y or not _has_edge(M, x, y, n, f, kappa):
                    continue
                if x not in index or index[x] > index[y]:
                    found.append(Violation("batch_edges", f"p{pid} round {rnd}: edge "
                                           f"{x[:8]}->{y[:8]} violated"))
    return found


def check_cut_monotonic(trace) -> List[Violation]:
    view = TraceView.of(trace)
    found = []
    for pid, rounds in _round_ends(view).items():
        prev = None
        for rnd in sorted(rounds):
            cut = rounds[rnd]["cut"]
            if prev is not None and any(a < b for a, b in zip(cut, prev)):
                found.append(Violation("cut_monotonic", f"p{pid} round {rnd}: cut shrank"))
            prev = cut
    return found


def edge_bound_check(trace) -> Tuple[int, List[Violation], int]:
    """Edge bound M[x][y] > M[y][x] - f + kappa at every graph build.

    A pair is checked when ``b(x,y) > b(y,x) + 2f + kappa``, neither is
    delivered yet, and both lie inside the cut prefix of every correct
    process's log.  Returns ``(pairs checked, counterexamples, partial)``
    where ``partial`` counts pairs with fewer than all correct prefixes
    but at least ``n - f`` joint appearances that miss the inequality
    (reported for information only).
    """
    view = TraceView.of(trace)
    f, kappa, n = view.f, view.kappa, view.n
    pairs = strict_pairs(compute_b(view), f, kappa)
    checked, found, partial = 0, [], 0
    if not pairs:
        return 0, [], 0
    for pid, rnd, cut, logs, done, M, _ in replay_rounds(view):
        prefixes = {j: set(logs[j][:cut[j - 1]]) for j in logs}
        for x, y in pairs:
            if x in done or y in done:
                continue
            joint = [j for j in prefixes if x in prefixes[j] and y in prefixes[j]]
            ok = M.get((x, y), 0) > M.get((y, x), 0) - f + kappa
            if all(j in joint for j in view.correct):
                checked += 1
                if not ok:
                    found.append(Violation("edge_bound", f"p{pid} round {rnd}: M[{x[:8]}][{y[:8]}]="
                                           f"{M.get((x, y), 0)} vs {M.get((y, x), 0)}"))
            elif len(joint) >= n - f and not ok:
                partial += 1
    return checked, found, partial


def late_edges(trace) -> int:
    """Rounds in which some undelivered message would get an edge into an
    already delivered one when counts include delivered messages."""
    view = TraceView.of(trace)
    n, f, kappa = view.n, view.f, view.kappa
    hits = 0
    for pid, rnd, cut, logs, done, _, _ in replay_rounds(view):
        if not done:
            continue
        M, C = _dense_counts(logs, cut, set())
        fresh = [d for d in C if d not in done]
        if any(_has_edge(M, y, x, n, f, kappa) and M.get((x, y), 0) + M.get((y, x), 0) > 0
               for x in done if x in C for y in fresh):
            hits += 1
    return hits


# -- complexity ---------------------------------------------------------------

def count_messages(trace) -> Dict[str, object]:
    """Message and byte totals per kind, amortised over delivered payloads."""
    view = TraceView.of(trace)
    if view.by_kind["WIRE_SEND"]:
        msgs: Dict[str, int] = defaultdict(int)
        size: Dict[str, int] = defaultdict(int)
        per_round: Dict[int, int] = defaultdict(int)
        for ev in view.by_kind["WIRE_SEND"]:
            msgs[ev["msg"]] += 1
            size[ev["msg"]] += ev["size"] or 0
            per_round[ev.get("round", 0)] += 1
    else:
        end = view.end or {}
        msgs = dict(end.get("messages", {}))
        size = dict(end.get("bytes", {}))
        per_round = {}
    delivered: Set[str] = set()
    for pid in view.correct:
        delivered |= set(_positions(view, pid))
    count = max(1, len(delivered))
    total_msgs = sum(msgs.values())
    total_bytes = sum(size.values())
    return {
        "payloads": len(delivered),
        "messages": dict(sorted(msgs.items())),
        "bytes": dict(sorted(size.items())),
        "total_messages": total_msgs,
        "total_bytes": total_bytes,
        "messages_per_payload": total_msgs / count,
        "bytes_per_payload": total_bytes / count,
        "messages_per_payload_by_kind": {k: v / count for k, v in sorted(msgs.items())},
        "rounds": dict(sorted(per_round.items())),
    }


# -- driver -------------------------------------------------------------------

def check_trace(trace, *, stats: bool = True) -> Report:
    view = TraceView.of(trace)
    rep = Report()
    v = rep.violations
    v += check_no_duplication(view)
    v += check_total_order(view)
    v += check_agreement(view)
    v += check_fairness(view)
    v += check_bcch(view)
    v += check_cut_monotonic(view)
    if view.quiescent():
        v += check_weak_validity(view)
    elif not view.byzantine:
        v.append(Violation("weak_validity", "fault-free run did not reach quiescence"))
    if stats:
        v += check_order_stats(view)
        v += check_batch_edges(view)
        checked, found, partial = edge_bound_check(view)
        v += found
        rep.info["edge_bound_pairs"] = checked
        rep.info["edge_bound_partial_misses"] = partial
    if view.byzantine:
        cov = delivery_coverage(view)
        rep.info["coverage_min"] = round(min(cov.values()), 3) if cov else 1.0
    return rep

"""Deterministic discrete-event simulator for a group of processes.

Virtual time is an integer tick.  Every random choice (link delays,
consensus latency, adversary coins) comes from one ``random.Random``
seeded by the scenario, and simultaneous events are ordered by
``(tick, sender id, per-sender counter)`` with the engine itself as
sender 0.  Links are reliable and FIFO: a message never arrives before
an earlier message on the same ordered pair of processes.

The simulator also hosts the ideal consensus: it collects proposals and,
once the decision rule fires, delivers the same decision to every
process after a drawn latency.

When the network goes quiet (no message or decision in flight) every
live process gets ``on_idle()``, which models a batching timeout.
"""

from __future__ import annotations

import functools
import heapq
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .adversary import PROCESS_CLASSES, STRATEGIES, bias_chooser
from .core import OrderFairProcess, ProtocolConfig
from .crypto import digest, make_scheme
from .vbc import IdealVbc
from .wire import KIND_NAMES, encode

log = logging.getLogger(__name__)

TRACE_FORMAT = "qofab-trace"
SCENARIO_FORMAT = "qofab-scenario"
FORMAT_VERSION = 1
ENGINE = 0


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    n: int
    f: int
    kappa: int = 0
    K: int = 1
    seed: int = 0
    name: str = ""
    byzantine: List[int] = field(default_factory=list)
    adversary: Optional[str] = None
    adversary_params: Dict[str, Any] = field(default_factory=dict)
    delay: Dict[str, Any] = field(default_factory=lambda: {"model": "fixed", "d": 1})
    vbc_latency: Tuple[int, int] = (1, 1)
    schedule: Dict[int, List[Tuple[int, bytes]]] = field(default_factory=dict)
    scheme: str = "mac"
    sig_len: int = 64
    max_ticks: int = 100_000
    overload: bool = False
    record_wire: bool = False
    record_stats: bool = True
    count_bytes: bool = True

    def validate(self) -> None:
        if self.n < 1 or self.f < 0 or self.n <= 3 * self.f:
            raise ScenarioError(f"need n > 3f, got n={self.n} f={self.f}")
        if self.kappa < 0 or self.K < 1:
            raise ScenarioError("need kappa >= 0 and K >= 1")
        if len(set(self.byzantine)) != len(self.byzantine):
            raise ScenarioError("duplicate byzantine ids")
        if any(not 1 <= p <= self.n for p in self.byzantine):
            raise ScenarioError("byzantine id out of range")
        if len(self.byzantine) > self.f and not self.overload:
            raise ScenarioError("more byzantine processes than f (mark the scenario 'overload')")
        if self.byzantine and self.adversary not in STRATEGIES:
            raise ScenarioError(f"unknown adversary {self.adversary!r}")
        model = self.delay.get("model")
        if model not in ("fixed", "uniform", "eventual"):
            raise ScenarioError(f"unknown delay model {model!r}")
        lo, hi = self.vbc_latency
        if not 0 <= lo <= hi:
            raise ScenarioError("bad vbc latency range")
        for pid, items in self.schedule.items():
            if not 1 <= pid <= self.n:
                raise ScenarioError(f"schedule for unknown process {pid}")
            if any(t < 0 for t, _ in items):
                raise ScenarioError("negative injection tick")

    def correct(self) -> List[int]:
        bad = set(self.byzantine)
        return [p for p in range(1, self.n + 1) if p not in bad]

    def payloads(self) -> List[bytes]:
        seen: Dict[bytes, None] = {}
        for pid in sorted(self.schedule):
            for _, payload in self.schedule[pid]:
                seen.setdefault(payload, None)
        return list(seen)

    # -- serialisation ------------------------------------------------------

    def config_record(self) -> Dict[str, Any]:
        d = asdict(self)
        d.pop("schedule")
        d["vbc_latency"] = list(self.vbc_latency)
        d["byzantine"] = sorted(self.byzantine)
        return d

    def header(self) -> Dict[str, Any]:
        rec = self.config_record()
        rec["schedule"] = {str(pid): [[t, p.hex()] for t, p in self.schedule[pid]]
                           for pid in sorted(self.schedule)}
        return rec

    def to_jsonl(self) -> str:
        lines = [dict(record="config", format=SCENARIO_FORMAT, version=FORMAT_VERSION,
                      **self.config_record())]
        for pid in sorted(self.schedule):
            for t, payload in self.schedule[pid]:
                lines.append({"record": "inject", "pid": pid, "tick": t,
                              "payload": payload.hex()})
        return "".join(json.dumps(x, sort_keys=True) + "\n" for x in lines)

    @classmethod
    def from_jsonl(cls, text: str) -> "Scenario":
        config = None
        schedule: Dict[int, List[Tuple[int, bytes]]] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"line {lineno}: {exc}") from None
            kind = rec.pop("record", None)
            if kind == "config":
                if rec.pop("format", SCENARIO_FORMAT) != SCENARIO_FORMAT:
                    raise ScenarioError("not a scenario file")
                if rec.pop("version", FORMAT_VERSION) != FORMAT_VERSION:
                    raise ScenarioError("unsupported scenario version")
                config = rec
            elif kind == "inject":
                schedule.setdefault(int(rec["pid"]), []).append(
                    (int(rec["tick"]), bytes.fromhex(rec["payload"])))
            else:
                raise ScenarioError(f"line {lineno}: unknown record {kind!r}")
        if config is None:
            raise ScenarioError("missing config record")
        known = set(cls.__dataclass_fields__)
        extra = set(config) - known
        if extra:
            raise ScenarioError(f"unknown config keys {sorted(extra)}")
        if "vbc_latency" in config:
            config["vbc_latency"] = tuple(config["vbc_latency"])
        sc = cls(schedule=schedule, **config)
        sc.validate()
        return sc


@dataclass
class Trace:
    header: Dict[str, Any]
    events: List[Dict[str, Any]]

    @property
    def end(self) -> Dict[str, Any]:
        return self.events[-1] if self.events and self.events[-1]["kind"] == "END" else {}

    def lines(self):
        yield json.dumps({"format": TRACE_FORMAT, "version": FORMAT_VERSION,
                          "scenario": self.header}, sort_keys=True, separators=(",", ":"))
        for ev in self.events:
            yield json.dumps(ev, sort_keys=True, separators=(",", ":"))

    def to_jsonl(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty trace")
        head = json.loads(lines[0])
        if head.get("format") != TRACE_FORMAT or head.get("version") != FORMAT_VERSION:
            raise ValueError("not a version-1 trace")
        return cls(head["scenario"], [json.loads(ln) for ln in lines[1:]])


class _Env:
    """The view of the simulator one process gets."""

    def __init__(self, sim: "Simulation", pid: int):
        self.sim = sim
        self.pid = pid
        self.record_stats = sim.scenario.record_stats
        self.send = functools.partial(sim.send, pid)
        self.record = sim.record

    @property
    def now(self) -> int:
        return self.sim.now

    def propose(self, round_: int, proposal) -> None:
        self.sim.propose(self.pid, round_, proposal)



class Simulation:
    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = sc = scenario
        self.rng = random.Random(sc.seed)
        self.now = 0
        self.events: List[Dict[str, Any]] = []
        self._queue: list = []
        self._counters = [0] * (sc.n + 1)
        self._last_arrival: Dict[Tuple[int, int], int] = {}
        self._in_flight = 0
        self.msg_count: Dict[str, int] = {}
        self.byte_count: Dict[str, int] = {}
        self._wire = sc.record_wire
        self._sized = sc.count_bytes or sc.record_wire
        self.scheme = make_scheme(sc.scheme, sc.sig_len)
        keys = {p: self.scheme.keygen(sc.seed, p) for p in range(1, sc.n + 1)}
        self.verify_keys = {p: k.verify_key for p, k in keys.items()}
        self.config = ProtocolConfig(sc.n, sc.f, sc.kappa, sc.K)
        byz = set(sc.byzantine)
        chooser = bias_chooser(sorted(byz)) if byz and sc.adversary == "vbc_bias" else None
        self.vbc = IdealVbc(sc.n, sc.f, self.verify_keys, self.scheme, sc.correct(), chooser)
        self._decide_scheduled: set = set()
        pool = sc.payloads()
        self.processes: Dict[int, OrderFairProcess] = {}
        for p in range(1, sc.n + 1):
            cls = PROCESS_CLASSES[sc.adversary] if p in byz else OrderFairProcess
            proc = cls(p, self.config, self.scheme, keys[p], self.verify_keys, _Env(self, p))
            if p in byz:
                proc.setup(random.Random(self.rng.getrandbits(64)), sc.adversary_params, pool)
            self.processes[p] = proc
        self._crashable = {p: proc for p, proc in self.processes.items()
                           if hasattr(proc, "crashed")}
        if not self._crashable:
            self._silent = lambda pid: False
        self._delay = self._delay_model()
        for pid in sorted(sc.schedule):
            items = sorted(sc.schedule[pid], key=lambda x: x[0])
            if pid in byz and sc.adversary == "skew_order":
                payloads = [payload for _, payload in items][::-1]
                items = [(t, payload) for (t, _), payload in zip(items, payloads)]
                self.record_at(0, "FAULT_ACTION", pid=pid, strategy="skew_order",
                               action="reversed_schedule")
            for t, payload in items:
                self._push(t, ENGINE, self._inject, pid, payload)

    # -- plumbing -------------------------------------------------------------

    def _push(self, tick: int, sender: int, fn, *args) -> None:
        self._counters[sender] += 1
        heapq.heappush(self._queue, (tick, sender, self._counters[sender], fn, args))

    def record_at(self, tick: int, kind: str, **fields) -> None:
        fields["tick"] = tick
        fields["kind"] = kind
        self.events.append(fields)

    def record(self, kind: str, **fields) -> None:
        fields["tick"] = self.now
        fields["kind"] = kind
        self.events.append(fields)

    def _silent(self, pid: int) -> bool:
        proc = self._crashable.get(pid)
        return proc is not None and proc.crashed(self.now)

    def _delay_model(self):
        d = self.scenario.delay
        model = d["model"]
        uniform = self.rng.random

        def randint(lo: int, hi: int) -> int:
            return lo + int(uniform() * (hi - lo + 1))
        if model == "fixed":
            fixed = int(d.get("d", 1))
            return lambda: fixed
        if model == "uniform":
            lo, hi = int(d.get("min", 1)), int(d.get("max", 1))
            return lambda: randint(lo, hi)
        gst, dmax = int(d.get("gst", 0)), int(d.get("dmax", 1))
        pre_max = int(d.get("pre_max", dmax))

        def eventual() -> int:
            # before GST anything up to pre_max, but nothing lands after GST + dmax
            if self.now >= gst:
                return randint(1, dmax)
            return min(randint(1, pre_max), gst + dmax - self.now)
        return eventual

    def send(self, src: int, dest: int, msg) -> None:
        if self._silent(src):
            return
        kind = KIND_NAMES[type(msg)]
        count = self.msg_count
        count[kind] = count.get(kind, 0) + 1
        size = None
        if self._sized:
            size = len(encode(msg))
            self.byte_count[kind] = self.byte_count.get(kind, 0) + size
        link = (src, dest)
        arrival = self.now + self._delay()
        prev = self._last_arrival.get(link, 0)
        if prev > arrival:
            arrival = prev
        self._last_arrival[link] = arrival
        seq = None
        if self._wire:
            seq = count[kind]
            rnd = getattr(msg, "round", None) or self.processes[src].r
            self.record("WIRE_SEND", pid=src, dest=dest, msg=kind, size=size, seq=seq, round=rnd)
        self._in_flight += 1
        self._counters[src] += 1
        heapq.heappush(self._queue, (arrival, src, self._counters[src], self._receive,
                                     (src, dest, msg, kind, size, seq)))

    def _receive(self, src, dest, msg, kind, size, seq) -> None:
        self._in_flight -= 1
        if self._wire:
            self.record("WIRE_RECV", pid=dest, src=src, msg=kind, size=size, seq=seq)
        if self._silent(dest):
            return
        self.processes[dest].on_message(src, msg)

    def _inject(self, pid: int, payload: bytes) -> None:
        if self._silent(pid):
            return
        self.processes[pid].of_broadcast(payload)

    def propose(self, pid: int, round_: int, proposal) -> None:
        if self._silent(pid):
            return
        self.vbc.vbc_propose(round_, pid, proposal, self.now)
        if round_ not in self._decide_scheduled and self.vbc.ready(round_):
            self._decide_scheduled.add(round_)
            lo, hi = self.scenario.vbc_latency
            self._in_flight += 1
            self._push(self.now + self.rng.randint(lo, hi), ENGINE, self._decide, round_)

    def _decide(self, round_: int) -> None:
        self._in_flight -= 1
        proposer, proposal = self.vbc.ideal_decide(round_)
        if self.vbc.chooser is not None:
            self.record("FAULT_ACTION", pid=proposer, strategy="vbc_bias",
                        action="steered_decision", round=round_)
        for pid in range(1, self.scenario.n + 1):
            if not self._silent(pid):
                self.processes[pid].on_vbc_decide(round_, proposal)

    def _idle(self) -> None:
        for pid in range(1, self.scenario.n + 1):
            if not self._silent(pid):
                self.processes[pid].on_idle()

    # -- main loop ------------------------------------------------------------

    def run(self) -> Trace:
        sc = self.scenario
        truncated = False
        while self._queue:
            if self._queue[0][0] > sc.max_ticks:
                truncated = True
                break
            tick, _, _, fn, args = heapq.heappop(self._queue)
            self.now = tick
            fn(*args)
            if self._in_flight == 0:
                self._idle()
        quiescent = not truncated and not self._queue
        self.record("END", quiescent=quiescent, truncated=truncated,
                    messages=dict(sorted(self.msg_count.items())),
                    bytes=dict(sorted(self.byte_count.items())),
                    rounds={str(p): self.processes[p].r - 1 for p in sc.correct()},
                    liveness_failure=self._liveness_failure(quiescent))
        log.info("%s: %d events, %d messages, stopped at tick %d%s", sc.name or "scenario",
                 len(self.events), sum(self.msg_count.values()), self.now,
                 " (truncated)" if truncated else "")
        return Trace(sc.header(), self.events)

    def _liveness_failure(self, quiescent: bool) -> bool:
        """Fault-free run that stopped with a payload every process broadcast still undelivered."""
        sc = self.scenario
        if sc.byzantine:
            return False
        wanted = None
        for pid in range(1, sc.n + 1):
            mine = {digest(p) for _, p in sc.schedule.get(pid, [])}
            wanted = mine if wanted is None else wanted & mine
        return any(not wanted <= proc.delivered for proc in self.processes.values())


def run(scenario: Scenario) -> Trace:
    return Simulation(scenario).run()

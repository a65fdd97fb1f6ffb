"""Built-in scenarios: the Condorcet example, random fuzz cases, canonical
golden cases and the complexity workload."""

from __future__ import annotations

import random
from typing import Dict, List, Optional, Tuple

from .adversary import STRATEGIES
from .simnet import Scenario

FUZZ_ADVERSARIES = ("crash", "equivocate_bcch", "forge_status", "skew_order", "vbc_bias")

PAYLOAD_A = b"m_a"
PAYLOAD_B = b"m_b"
PAYLOAD_C = b"m_c"


def example1() -> Scenario:
    """Four processes, p4 Byzantine and silent, three payloads in a Condorcet cycle.

    The first round closes while p2 and p3 have only part of their
    schedules out; the second round sees every log in full.
    """
    a, b, c = PAYLOAD_A, PAYLOAD_B, PAYLOAD_C
    schedule = {
        1: [(0, b), (0, c), (0, a)],
        2: [(0, c), (0, a), (200, b)],
        3: [(0, a), (200, b), (200, c)],
    }
    return Scenario(n=4, f=1, kappa=0, K=100, seed=1, name="example1", byzantine=[4],
                    adversary="withhold_status", schedule=schedule,
                    delay={"model": "fixed", "d": 1}, vbc_latency=(2, 2), max_ticks=10_000)


def fault_counts(n: int) -> int:
    return (n - 1) // 3


def kappas(n: int) -> List[int]:
    f = fault_counts(n)
    return sorted({0, 1, f})


def fuzz_scenario(n: int, f: int, kappa: int, seed: int, adversary: Optional[str] = None,
                  n_payloads: Optional[int] = None, scheme: str = "mac") -> Scenario:
    """Random schedule in which every process broadcasts every payload.

    Each process draws its own broadcast order and injection ticks, so
    orders disagree often enough to produce both fairness edges and
    Condorcet cycles.  With an adversary, ``f`` random processes are faulty.
    """
    rng = random.Random(f"fuzz/{n}/{f}/{kappa}/{seed}/{adversary}")
    count = n_payloads if n_payloads is not None else rng.randint(2, 4)
    payloads = [b"tx-%d-%d" % (seed, i) for i in range(count)]
    horizon = rng.choice((5, 20, 60))
    # a shared "true" order that processes mostly follow, with local noise
    base = payloads[:]
    rng.shuffle(base)
    schedule: Dict[int, List[Tuple[int, bytes]]] = {}
    for pid in range(1, n + 1):
        order = base[:]
        for i in range(len(order) - 1):
            if rng.random() < 0.3:
                order[i], order[i + 1] = order[i + 1], order[i]
        ticks = sorted(rng.randint(0, horizon) for _ in order)
        schedule[pid] = list(zip(ticks, order))
    byzantine: List[int] = []
    params: dict = {}
    if adversary is not None:
        if adversary not in STRATEGIES:
            raise ValueError(f"unknown adversary {adversary!r}")
        byzantine = sorted(rng.sample(range(1, n + 1), f))
        if adversary == "crash":
            params = {"t": rng.randint(0, horizon + 40)}
    delay_kind = rng.choice(("fixed", "uniform", "eventual"))
    if delay_kind == "fixed":
        delay = {"model": "fixed", "d": rng.randint(1, 3)}
    elif delay_kind == "uniform":
        delay = {"model": "uniform", "min": 1, "max": rng.randint(2, 8)}
    else:
        delay = {"model": "eventual", "gst": rng.randint(5, 60), "pre_max": 40, "dmax": 3}
    lo = rng.randint(1, 4)
    return Scenario(n=n, f=f, kappa=kappa, K=1, seed=seed, name=f"fuzz-{adversary or 'none'}",
                    byzantine=byzantine, adversary=adversary, adversary_params=params,
                    delay=delay, vbc_latency=(lo, lo + rng.randint(0, 6)), schedule=schedule,
                    scheme=scheme, max_ticks=50_000, record_stats=True, count_bytes=False)


def split_scenario(seed: int, split: int) -> Scenario:
    """n=4 with p4 equivocating under a fixed split of the other three processes."""
    sc = fuzz_scenario(4, 1, 0, seed, None)
    sc.byzantine = [4]
    sc.adversary = "equivocate_bcch"
    sc.adversary_params = {"split": split}
    sc.name = f"split-{split}"
    return sc


def complexity_scenario(n: int, payloads: int, seed: int = 0) -> Scenario:
    """Fault-free load: ``payloads`` per process, every process broadcasts all of them, ``K = n``."""
    f = fault_counts(n)
    rng = random.Random(f"complexity/{n}/{payloads}/{seed}")
    txs = [b"load-%d-%d" % (n, i) for i in range(payloads * n)]
    schedule = {}
    for pid in range(1, n + 1):
        ticks = sorted(rng.randint(0, 10 * len(txs)) for _ in txs)
        schedule[pid] = list(zip(ticks, txs))
    return Scenario(n=n, f=f, kappa=0, K=n, seed=seed, name=f"complexity-{n}",
                    delay={"model": "uniform", "min": 1, "max": 4}, vbc_latency=(2, 6),
                    schedule=schedule, max_ticks=10_000_000, record_stats=False)


def canonical() -> Dict[str, Scenario]:
    """Small scenarios whose traces are pinned as golden files."""
    one = Scenario(n=4, f=1, seed=3, name="single-payload",
                   schedule={p: [(0, b"only")] for p in range(1, 5)},
                   record_wire=True)
    cycle = example1()
    fair = Scenario(n=4, f=1, seed=5, name="unanimous-order",
                    schedule={p: [(0, b"x"), (1, b"y"), (2, b"z")] for p in range(1, 5)},
                    delay={"model": "uniform", "min": 1, "max": 5}, vbc_latency=(1, 3))
    equiv = split_scenario(11, 0b011)
    equiv.name = "equivocation"
    crash = fuzz_scenario(7, 2, 1, 17, "crash")
    crash.name = "crash-n7"
    return {sc.name: sc for sc in (one, cycle, fair, equiv, crash)}

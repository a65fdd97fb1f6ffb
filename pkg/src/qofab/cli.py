"""Command line driver: ``qofab run | example1 | fuzz | complexity | check``.

Exit codes: 0 clean, 2 property violations, 1 usage or configuration error.
Logging level comes from ``QF_LOG_LEVEL`` (error, info, debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import List, Optional, Sequence

from .checker import check_trace, count_messages
from .crypto import digest
from .scenarios import FUZZ_ADVERSARIES, complexity_scenario, example1, fuzz_scenario
from .simnet import Scenario, ScenarioError, Simulation, Trace

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


def _setup_logging() -> None:
    name = os.environ.get("QF_LOG_LEVEL", "error").lower()
    if name not in LOG_LEVELS:
        raise UsageError(f"QF_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s")


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


# -- Condorcet example --------------------------------------------------------

def example1_report(trace: Trace):
    """Rounds of p1 as ``(round, cut, M in a,b,c order, C, batches)``."""
    order = [digest(x).hex() for x in (b"m_a", b"m_b", b"m_c")]
    rounds = []
    batches = {}
    for ev in trace.events:
        if ev.get("pid") != 1:
            continue
        if ev["kind"] == "OF_DELIVER_BATCH":
            batches.setdefault(ev["round"], []).append(ev["digests"])
        elif ev["kind"] == "ORDER_STATS":
            V = ev["V"]
            M = {(V[i], V[j]): c for i, j, c in ev["M"]}
            C = dict(zip(V, ev["C"]))
            rounds.append({
                "round": ev["round"], "cut": ev["cut"],
                "M": [[M.get((a, b), 0) for b in order] for a in order],
                "C": [C.get(a, 0) for a in order],
            })
    for rec in rounds:
        rec["batches"] = batches.get(rec["round"], [])
    return order, rounds


def example1_verdict(trace: Trace) -> List[str]:
    """Problems with the Condorcet example run; empty when it matches exactly."""
    order, rounds = example1_report(trace)
    problems = []
    first = next((r for r in rounds if r["cut"] == [3, 2, 1, 0]), None)
    if first is None:
        problems.append("no round with cut [3, 2, 1, 0]")
    else:
        if first["M"] != [[0, 0, 0], [1, 0, 1], [2, 0, 0]]:
            problems.append(f"round {first['round']} M = {first['M']}")
        if first["C"][1] != 1:
            problems.append(f"round {first['round']} C[m_b] = {first['C'][1]}")
        if first["batches"]:
            problems.append(f"round {first['round']} delivered {len(first['batches'])} batch(es)")
    later = [r for r in rounds if first is not None and r["round"] > first["round"]
             and r["M"] == [[0, 2, 1], [1, 0, 2], [2, 1, 0]]]
    if not later:
        problems.append("no later round with M = [[0,2,1],[1,0,2],[2,1,0]]")
    elif later[0]["batches"] != [sorted(order)]:
        problems.append(f"round {later[0]['round']} batches = {later[0]['batches']}")
    return problems


def cmd_example1(args) -> int:
    start = time.perf_counter()
    trace = Simulation(example1()).run()
    elapsed = time.perf_counter() - start
    _, rounds = example1_report(trace)
    for rec in rounds:
        print(f"round {rec['round']}: cut={rec['cut']} M={rec['M']} C={rec['C']} "
              f"batches={len(rec['batches'])}")
    problems = example1_verdict(trace)
    report = check_trace(trace)
    problems += [str(v) for v in report.violations]
    if args.trace:
        _write(args.trace, trace.to_jsonl())
    print(f"elapsed {elapsed:.3f}s")
    for p in problems:
        print(f"FAIL {p}")
    print("example1 OK" if not problems else "example1 FAILED")
    return EXIT_OK if not problems else EXIT_VIOLATION


# -- run / check ----------------------------------------------------------------

def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def cmd_run(args) -> int:
    try:
        scenario = Scenario.from_jsonl(_read_text(args.scenario))
    except (ScenarioError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad scenario: {exc}") from None
    trace = Simulation(scenario).run()
    _write(args.trace, trace.to_jsonl())
    end = trace.end
    print(f"wrote {len(trace.events)} events to {args.trace} "
          f"(quiescent={end.get('quiescent')}, liveness_failure={end.get('liveness_failure')})")
    if not args.check:
        return EXIT_OK
    return _print_report(check_trace(trace))


def _print_report(report) -> int:
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_check(args) -> int:
    try:
        trace = Trace.from_jsonl(_read_text(args.trace))
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad trace: {exc}") from None
    code = _print_report(check_trace(trace))
    if args.complexity:
        print(json.dumps(count_messages(trace), sort_keys=True, indent=2))
    return code


# -- fuzz -----------------------------------------------------------------------

def cmd_fuzz(args) -> int:
    f = args.f if args.f is not None else (args.n - 1) // 3
    if args.n <= 3 * f:
        raise UsageError("need n > 3f")
    if args.adversary not in (None, "none") and args.adversary not in FUZZ_ADVERSARIES:
        raise UsageError(f"--adversary must be one of none, {', '.join(FUZZ_ADVERSARIES)}")
    adversary = None if args.adversary in (None, "none") else args.adversary
    bad = 0
    start = time.perf_counter()
    for seed in range(args.seed, args.seed + args.runs):
        trace = Simulation(fuzz_scenario(args.n, f, args.kappa, seed, adversary)).run()
        report = check_trace(trace)
        if not report.ok:
            bad += 1
            print(f"seed {seed}: " + "; ".join(str(v) for v in report.violations[:5]))
    elapsed = time.perf_counter() - start
    print(f"fuzz n={args.n} f={f} kappa={args.kappa} adversary={adversary or 'none'}: "
          f"{args.runs} runs, {bad} with violations, {elapsed:.1f}s")
    return EXIT_OK if bad == 0 else EXIT_VIOLATION


# -- complexity -------------------------------------------------------------------

def complexity_rows(sizes: Sequence[int], payloads: int, batch_k: Optional[str] = "n"):
    rows = []
    for n in sizes:
        sc = complexity_scenario(n, payloads)
        if batch_k not in (None, "n"):
            sc.K = int(batch_k)
        trace = Simulation(sc).run()
        stats = count_messages(trace)
        stats["n"] = n
        stats["K"] = sc.K
        stats["clean"] = check_trace(trace, stats=False).ok
        rows.append(stats)
    return rows


def cmd_complexity(args) -> int:
    try:
        sizes = [int(x) for x in args.sizes.split(",") if x]
    except ValueError:
        raise UsageError("--sizes takes a comma separated list of integers") from None
    if args.batch_k != "n":
        try:
            int(args.batch_k)
        except ValueError:
            raise UsageError("--batch-k takes 'n' or an integer") from None
    rows = complexity_rows(sizes, args.payloads, args.batch_k)
    base = None
    for row in rows:
        n = row["n"]
        per = row["messages_per_payload"]
        if base is None:
            base = per / (n * n)
        kinds = ", ".join(f"{k}={v:.1f}" for k, v in row["messages_per_payload_by_kind"].items())
        print(f"n={n} K={row['K']} payloads={row['payloads']} msgs/payload={per:.1f} "
              f"bytes/payload={row['bytes_per_payload']:.0f} c={per / (n * n):.3f} "
              f"ratio={per / (n * n) / base:.2f} [{kinds}]")
    return EXIT_OK if all(r["clean"] for r in rows) else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qofab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario file")
    r.add_argument("--scenario", required=True)
    r.add_argument("--trace", required=True)
    r.add_argument("--check", action="store_true")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("example1", help="reproduce the four-process Condorcet example")
    e.add_argument("--trace", help="also write the trace here")
    e.set_defaults(func=cmd_example1)

    fz = sub.add_parser("fuzz", help="random scenarios, each checked")
    fz.add_argument("--n", type=int, required=True)
    fz.add_argument("--f", type=int)
    fz.add_argument("--kappa", type=int, default=0)
    fz.add_argument("--runs", type=int, default=100)
    fz.add_argument("--seed", type=int, default=0)
    fz.add_argument("--adversary", default="none")
    fz.set_defaults(func=cmd_fuzz)

    c = sub.add_parser("complexity", help="amortised message counts for several n")
    c.add_argument("--sizes", default="4,7,10")
    c.add_argument("--batch-k", default="n")
    c.add_argument("--payloads", type=int, default=8)
    c.set_defaults(func=cmd_complexity)

    k = sub.add_parser("check", help="check a trace file")
    k.add_argument("--trace", required=True)
    k.add_argument("--complexity", action="store_true")
    k.set_defaults(func=cmd_check)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        _setup_logging()
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

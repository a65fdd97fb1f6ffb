import json

import pytest

from qofab.crypto import digest
from qofab.scenarios import canonical, example1, fuzz_scenario
from qofab.simnet import Scenario, ScenarioError, Simulation, Trace, run


def single(**kw):
    base = dict(n=4, f=1, seed=2, schedule={1: [(0, b"p")]}, record_wire=True)
    base.update(kw)
    return Scenario(**base)


def delivered_by(trace, pid):
    out = []
    for ev in trace.events:
        if ev["kind"] == "OF_DELIVER_BATCH" and ev["pid"] == pid:
            out.extend(ev["digests"])
    return out


def test_same_seed_same_bytes():
    for sc in (fuzz_scenario(7, 2, 1, 9, "forge_status"), example1()):
        a = Simulation(sc).run().to_jsonl()
        b = Simulation(Scenario.from_jsonl(sc.to_jsonl())).run().to_jsonl()
        assert a == b


def test_different_seed_differs():
    a = run(fuzz_scenario(4, 1, 0, 1)).to_jsonl()
    b = run(fuzz_scenario(4, 1, 0, 2)).to_jsonl()
    assert a != b


def test_single_broadcaster_is_not_enough():
    # one process's log never reaches the stability threshold
    trace = run(single())
    assert all(delivered_by(trace, pid) == [] for pid in range(1, 5))
    assert trace.end["quiescent"] and not trace.end["liveness_failure"]


def test_single_payload_reaches_everyone():
    trace = run(single(schedule={p: [(0, b"p")] for p in range(1, 5)}))
    want = [digest(b"p").hex()]
    for pid in range(1, 5):
        assert delivered_by(trace, pid) == want
    end = trace.end
    assert end["quiescent"] and not end["truncated"] and not end["liveness_failure"]


def test_fifo_per_link():
    trace = run(single(delay={"model": "uniform", "min": 1, "max": 9},
                          schedule={p: [(0, b"a"), (0, b"b"), (3, b"c")] for p in range(1, 5)}))
    sent, recv = {}, {}
    for ev in trace.events:
        if ev["kind"] == "WIRE_SEND":
            sent.setdefault((ev["pid"], ev["dest"]), []).append((ev["msg"], ev["seq"]))
        elif ev["kind"] == "WIRE_RECV":
            recv.setdefault((ev["src"], ev["pid"]), []).append((ev["msg"], ev["seq"]))
    assert sent and sent == recv


def test_eventual_delay_bound():
    gst, dmax = 30, 3
    sc = fuzz_scenario(4, 1, 0, 4)
    sc.delay = {"model": "eventual", "gst": gst, "pre_max": 50, "dmax": dmax}
    sc.record_wire = True
    trace = run(sc)
    pending = {}
    for ev in trace.events:
        if ev["kind"] == "WIRE_SEND":
            pending[(ev["msg"], ev["seq"])] = ev["tick"]
        elif ev["kind"] == "WIRE_RECV":
            sent_at = pending.pop((ev["msg"], ev["seq"]))
            assert ev["tick"] <= max(gst, sent_at) + dmax
    assert not pending


def test_scenario_round_trip():
    for sc in canonical().values():
        again = Scenario.from_jsonl(sc.to_jsonl())
        assert again == sc


def test_trace_round_trip():
    trace = run(example1())
    again = Trace.from_jsonl(trace.to_jsonl())
    assert again.events == trace.events and again.header == trace.header
    head = json.loads(trace.to_jsonl().splitlines()[0])
    assert head["format"] == "qofab-trace" and head["version"] == 1


@pytest.mark.parametrize("kw", [
    dict(n=3, f=1),
    dict(K=0),
    dict(byzantine=[5], adversary="crash"),
    dict(byzantine=[1, 1], adversary="crash"),
    dict(byzantine=[1], adversary="nonsense"),
    dict(delay={"model": "warp"}),
    dict(vbc_latency=(3, 1)),
    dict(schedule={9: [(0, b"x")]}),
    dict(schedule={1: [(-1, b"x")]}),
    dict(n=4, f=1, byzantine=[1, 2], adversary="crash"),
])
def test_validation_errors(kw):
    with pytest.raises(ScenarioError):
        Simulation(single(**kw))


@pytest.mark.parametrize("text", [
    "",
    '{"record": "inject", "pid": 1, "tick": 0, "payload": "00"}\n',
    '{"record": "config", "n": 4, "f": 1, "bogus": 1}\n',
    '{"record": "config", "format": "other", "n": 4, "f": 1}\n',
    '{"record": "mystery"}\n',
    "not json\n",
])
def test_bad_scenario_files(text):
    with pytest.raises(ScenarioError):
        Scenario.from_jsonl(text)


def test_overload_allows_extra_faults():
    sc = single(byzantine=[1, 2], adversary="crash", overload=True,
                schedule={p: [(0, b"x")] for p in range(1, 5)})
    trace = run(sc)
    assert trace.end["kind"] == "END"


def test_crash_silences_process():
    sc = single(byzantine=[4], adversary="crash", adversary_params={"t": 0},
                schedule={p: [(0, b"x")] for p in range(1, 5)})
    trace = run(sc)
    assert not any(ev["kind"] == "WIRE_SEND" and ev["pid"] == 4 for ev in trace.events)
    for pid in (1, 2, 3):
        assert delivered_by(trace, pid) == [digest(b"x").hex()]


def test_truncation_reported():
    sc = fuzz_scenario(4, 1, 0, 3)
    sc.max_ticks = 2
    sc.schedule = {1: [(0, b"a")], 2: [(50, b"b")]}
    end = run(sc).end
    assert end["truncated"] and not end["quiescent"]

import os
import subprocess
import sys

import pytest

from qofab.cli import main
from qofab.scenarios import canonical, example1
from qofab.simnet import Trace, run


def test_example1_exit_zero(capsys, tmp_path):
    out = tmp_path / "ex1.jsonl"
    assert main(["example1", "--trace", str(out)]) == 0
    text = capsys.readouterr().out
    assert "example1 OK" in text
    assert "cut=[3, 2, 1, 0] M=[[0, 0, 0], [1, 0, 1], [2, 0, 0]]" in text
    assert Trace.from_jsonl(out.read_text()).events


def test_run_and_check(tmp_path, capsys):
    sc_path, tr_path = tmp_path / "s.jsonl", tmp_path / "t.jsonl"
    sc_path.write_text(canonical()["crash-n7"].to_jsonl())
    assert main(["run", "--scenario", str(sc_path), "--trace", str(tr_path), "--check"]) == 0
    assert main(["check", "--trace", str(tr_path), "--complexity"]) == 0
    out = capsys.readouterr().out
    assert "clean" in out and '"total_messages"' in out


def test_check_reports_violation(tmp_path, capsys):
    trace = run(example1())
    for ev in trace.events:
        if ev["kind"] == "OF_DELIVER_BATCH" and ev["pid"] == 2:
            ev["digests"] = ev["digests"][:1]
    path = tmp_path / "bad.jsonl"
    path.write_text(trace.to_jsonl())
    assert main(["check", "--trace", str(path)]) == 2
    assert "violation" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["run", "--scenario", "/nonexistent.jsonl", "--trace", "/tmp/x"],
    ["check", "--trace", "/nonexistent.jsonl"],
    ["fuzz", "--n", "4", "--f", "2"],
    ["fuzz", "--n", "4", "--adversary", "gremlin"],
    ["complexity", "--sizes", "4,x"],
    ["complexity", "--batch-k", "many"],
    ["no-such-command"],
    [],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1


def test_bad_scenario_file(tmp_path):
    path = tmp_path / "s.jsonl"
    path.write_text('{"record": "config", "n": 3, "f": 1}\n')
    assert main(["run", "--scenario", str(path), "--trace", str(tmp_path / "t")]) == 1
    path.write_text("garbage\n")
    assert main(["run", "--scenario", str(path), "--trace", str(tmp_path / "t")]) == 1


def test_fuzz_small(capsys):
    assert main(["fuzz", "--n", "4", "--runs", "5", "--adversary", "vbc_bias"]) == 0
    assert "5 runs, 0 with violations" in capsys.readouterr().out


def test_complexity_small(capsys):
    assert main(["complexity", "--sizes", "4", "--payloads", "2"]) == 0
    assert "c=" in capsys.readouterr().out


def test_log_level_env(monkeypatch, capsys):
    monkeypatch.setenv("QF_LOG_LEVEL", "chatty")
    assert main(["example1"]) == 1
    assert "QF_LOG_LEVEL" in capsys.readouterr().err
    proc = subprocess.run([sys.executable, "-m", "qofab", "example1"], capture_output=True,
                          text=True, timeout=60, env={**os.environ, "QF_LOG_LEVEL": "info"})
    assert proc.returncode == 0 and "INFO qofab.simnet: example1:" in proc.stderr


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qofab", "example1"],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0 and "example1 OK" in proc.stdout

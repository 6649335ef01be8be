import json
from pathlib import Path

import pytest

from vpcn.cli import BAD_INPUT, LIMIT, MISMATCH, OK, USAGE, run

ROOT = Path(__file__).resolve().parents[1]
INST = ROOT / "instances"


def test_optimize_prints_summary(capsys, tmp_path):
    out = tmp_path / "sol.json"
    assert run(["optimize", str(INST / "two_node.json"), "--out", str(out)]) == OK
    text = capsys.readouterr().out
    assert "status: optimal" in text and "objective: 40" in text
    assert json.loads(out.read_text())["objective"] == 40


def test_optimize_empty_demand(capsys):
    assert run(["optimize", str(INST / "empty_demand.json")]) == OK
    assert "objective: 0" in capsys.readouterr().out


def test_overrides(capsys):
    assert run(["optimize", str(INST / "relay_or_vc.json"), "--budget", "2"]) == OK
    assert "objective: 0" in capsys.readouterr().out


def test_oracle_command(capsys):
    assert run(["oracle", str(INST / "line_level1.json")]) == OK
    assert capsys.readouterr().out == "objective: 17\n"


def test_check_bundled_corpus(capsys):
    assert run(["check", str(INST)]) == OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == len(list(INST.glob("*.json")))
    assert all(line.endswith(" ok") for line in lines)


@pytest.mark.parametrize("fmt", ["lp", "mps"])
def test_emit_matches_golden(fmt, tmp_path):
    out = tmp_path / f"m.{fmt}"
    assert run(["emit", str(INST / "two_node.json"), "--format", fmt, "--out", str(out)]) == OK
    assert out.read_text() == (ROOT / "tests" / "golden" / f"two_node.{fmt}").read_text()


def test_validate(capsys):
    assert run(["validate", str(INST / "line_level1.json")]) == OK
    assert capsys.readouterr().out == "valid\n"


def test_replay_round_trip(tmp_path, capsys):
    sol = tmp_path / "sol.json"
    assert run(["optimize", str(INST / "line_level1.json"), "--out", str(sol)]) == OK
    report = tmp_path / "replay.json"
    assert run(["replay", str(INST / "line_level1.json"), str(sol), "--order", "reverse",
                "--out", str(report)]) == OK
    assert json.loads(report.read_text())["clean"] is True


def test_replay_divergence_exit_code(tmp_path):
    sol = tmp_path / "sol.json"
    assert run(["optimize", str(INST / "two_node.json"), "--out", str(sol)]) == OK
    doc = json.loads(sol.read_text())
    doc["transactions"][0]["path"] = [["A", "B", "vc"]]
    sol.write_text(json.dumps(doc))
    assert run(["replay", str(INST / "two_node.json"), str(sol), "--out", str(tmp_path / "r")]) == MISMATCH


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["emit", "x.json"], ["optimize"],
                                  ["optimize", "x.json", "--budget", "lots"]])
def test_usage_errors(argv):
    assert run(argv) == USAGE


def test_bad_input(tmp_path):
    assert run(["optimize", str(tmp_path / "missing.json")]) == BAD_INPUT
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert run(["validate", str(broken)]) == BAD_INPUT
    negative = tmp_path / "neg.json"
    negative.write_text(json.dumps({"nodes": ["A"], "payment_channels": [], "budget": -3}))
    assert run(["optimize", str(negative)]) == BAD_INPUT


def test_limits():
    assert run(["optimize", str(INST / "generated" / "seed000.json"), "--node-limit", "1"]) == LIMIT
    big = {"nodes": list("ABCDEF"), "payment_channels": [], "budget": 0}
    path = ROOT / "tests" / "_tmp_big.json"
    try:
        path.write_text(json.dumps(big))
        assert run(["oracle", str(path)]) == LIMIT
    finally:
        path.unlink()


def test_check_reports_limit(capsys):
    assert run(["check", str(INST / "generated" / "seed000.json"), "--node-limit", "1"]) == LIMIT

from fractions import Fraction
from pathlib import Path

import pytest

from vpcn.corpus import random_instance
from vpcn.ingest import load_instance
from vpcn.milp.builder import build_model
from vpcn.milp.emit import (DUMMY, LINE_WIDTH, FormatError, differences, emit_lp, emit_mps, equivalent,
                            parse_lp, parse_mps)
from vpcn.milp.model import MilpModel

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "tests" / "golden"


@pytest.mark.parametrize("name", ["two_node", "empty_demand"])
@pytest.mark.parametrize("fmt, emit", [("lp", emit_lp), ("mps", emit_mps)])
def test_golden_files(name, fmt, emit):
    m = build_model(load_instance(ROOT / "instances" / f"{name}.json"))
    assert emit(m) == (GOLDEN / f"{name}.{fmt}").read_text()


def test_two_node_lp_content():
    text = (GOLDEN / "two_node.lp").read_text()
    assert " obj: 40 x_0_1_0\n" in text
    assert " Ge#15: 40 pt_0_1_0_1_0 <= 100\n" in text
    assert "Binary\n" in text and text.endswith("End\n")


def test_empty_objective_uses_placeholder():
    text = (GOLDEN / "empty_demand.lp").read_text()
    assert f" obj: 0 {DUMMY}\n" in text and f" {DUMMY} = 0\n" in text
    again = parse_lp(text)
    assert again.objective == [] and all(v.name != DUMMY for v in again.vars)


def test_lines_are_wrapped():
    for seed in range(10):
        for line in emit_lp(build_model(random_instance(seed))).splitlines():
            assert len(line) <= LINE_WIDTH or " " not in line.strip()


@pytest.mark.parametrize("seed", range(0, 200, 7))
def test_round_trip_corpus(seed):
    m = build_model(random_instance(seed))
    assert equivalent(m, parse_lp(emit_lp(m))), differences(m, parse_lp(emit_lp(m)))
    assert equivalent(m, parse_mps(emit_mps(m))), differences(m, parse_mps(emit_mps(m)))


def test_round_trip_fractional_and_negative():
    m = MilpModel()
    x, y = m.add_var("x", ub=7), m.add_var("y", binary=True)
    m.add_constraint([(Fraction(1, 4), x), (-3, y)], ">=", -2, "C2")
    m.add_constraint([], "<=", 0, "Ga")
    m.set_objective([(2, x), (-1, y)])
    for text, parse in ((emit_lp(m), parse_lp), (emit_mps(m), parse_mps)):
        again = parse(text)
        assert equivalent(m, again), differences(m, again)
        assert again.vars[0].ub == 7 and again.vars[1].binary


def test_differences_are_reported():
    a = build_model(random_instance(3))
    b = parse_lp(emit_lp(a))
    b.constraints.pop()
    assert not equivalent(a, b) and differences(a, b)


@pytest.mark.parametrize("text", ["", "Maximize\n obj: x\nSubject To\n c#0: x <=\nEnd\n",
                                  "Maximize\n obj: 2 x\nBounds\n x <= y\nEnd\n"])
def test_malformed_lp(text):
    with pytest.raises(FormatError):
        parse_lp(text)


def test_malformed_mps():
    with pytest.raises(FormatError):
        parse_mps("NAME X\nROWS\n Q  R1\nENDATA\n")


def test_highs_agrees_on_objective(tmp_path):
    highspy = pytest.importorskip("highspy")
    from vpcn.milp.solve import solve
    for seed in (0, 6, 29):
        m = build_model(random_instance(seed))
        ours = solve(m).objective
        for suffix, text in ((".lp", emit_lp(m)), (".mps", emit_mps(m))):
            path = tmp_path / f"m{seed}{suffix}"
            path.write_text(text)
            h = highspy.Highs()
            h.setOptionValue("output_flag", False)
            h.readModel(str(path))
            h.run()
            assert round(h.getInfo().objective_function_value) == ours

from dataclasses import replace
from itertools import combinations

import pytest

from vpcn.corpus import random_instance
from vpcn.ingest import instance_from_dict
from vpcn.milp.builder import (TAGS, InstanceTooLarge, ModelOptions, build_model, required_tags,
                               validate_model)
from vpcn.milp.model import MilpModel

NAMES = "ABCDEF"


def grid_instance(n, M, T, channels="path"):
    nodes = list(NAMES[:n])
    pairs = list(zip(nodes, nodes[1:])) if channels == "path" else list(combinations(nodes, 2))
    demand = [{"source": nodes[0], "receiver": nodes[-1], "amount": 5 + t} for t in range(T)]
    return instance_from_dict({
        "nodes": nodes,
        "payment_channels": [{"endpoints": list(p), "balance_1": 30, "balance_2": 10} for p in pairs],
        "vc_defaults": {"creation_cost": 1},
        "demand": demand, "budget": 4, "max_level": M,
    })


def closed_form(n, M, T):
    """Variable counts written out independently of the builder."""
    M = max(0, min(M, n - 2))
    per_level = n * (n - 1) * (n - 2)
    return {"pt": T * n * (n - 1), "vt": T * n * (n - 1), "x": T, "vc0": per_level,
            "levels": 3 * M * per_level, "caps": per_level + 3 * M * per_level}


def counts(m):
    return {"pt": m.count("pt"), "vt": m.count("vt"), "x": m.count("x"), "vc0": m.count("vc0"),
            "levels": m.count("vcPV", "vcVP", "vcVV"),
            "caps": m.count("cap0", "capPV", "capVP", "capVV")}


def test_listed_example_counts():
    m = build_model(grid_instance(3, 1, 2))
    assert counts(m) == {"pt": 12, "vt": 12, "x": 2, "vc0": 6, "levels": 18, "caps": 24}


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("M", [0, 1, 2, 3])
@pytest.mark.parametrize("T", [0, 1, 3])
def test_count_grid(n, M, T):
    m = build_model(grid_instance(n, M, T))
    assert counts(m) == closed_form(n, M, T)
    assert len(m.vars) == sum(closed_form(n, M, T).values())
    assert validate_model(m) == []


def test_two_nodes_have_no_vc_variables():
    m = build_model(grid_instance(2, 3, 1))
    assert counts(m)["caps"] == 0 and counts(m)["vc0"] == 0
    assert not any(t.startswith("L") for t in m.tags())


def test_empty_demand_has_empty_objective():
    m = build_model(grid_instance(3, 1, 0))
    assert m.objective == []
    assert m.objective_value({v.id: 1 for v in m.vars}) == 0


def test_objective_is_amount_times_success():
    inst = grid_instance(3, 1, 3)
    m = build_model(inst)
    assert sorted((m.vars[v].kind, c) for c, v in m.objective) == [("x", 5), ("x", 6), ("x", 7)]


def test_all_zero_assignment_is_feasible():
    for seed in range(30):
        m = build_model(random_instance(seed))
        assert m.violations({v.id: 0 for v in m.vars}) == []


def test_build_is_deterministic():
    inst = random_instance(11)
    a, b = build_model(inst), build_model(inst)
    assert [v.name for v in a.vars] == [v.name for v in b.vars]
    assert [(c.name, c.terms, c.sense, c.rhs) for c in a.constraints] == \
        [(c.name, c.terms, c.sense, c.rhs) for c in b.constraints]


def test_constraint_tags_are_closed():
    m = build_model(grid_instance(4, 2, 2, channels="full"))
    assert m.tags() <= TAGS
    assert required_tags(m) <= m.tags()
    assert all(c.name.startswith(c.tag + "#") for c in m.constraints)


def test_variable_guard():
    with pytest.raises(InstanceTooLarge):
        build_model(grid_instance(4, 1, 3), ModelOptions(max_vars=50))


# -- validation mutations ------------------------------------------------------

def without(m: MilpModel, keep) -> MilpModel:
    return replace(m, constraints=[c for c in m.constraints if keep(c)], _arrays=None)


@pytest.mark.parametrize("tag", sorted(TAGS))
def test_dropping_any_family_is_reported(tag):
    m = build_model(grid_instance(4, 2, 2, channels="path"))
    if tag not in m.tags():
        pytest.skip(f"{tag} is vacuous here")
    problems = validate_model(without(m, lambda c: c.tag != tag))
    assert any(tag in p for p in problems), problems


def test_unpinned_missing_channel_reported():
    m = build_model(grid_instance(3, 1, 1))
    # A and C share no payment channel; drop the row pinning pt(A->C)
    target = m.var("pt", 0, 2, 0, 2, 0)
    mutated = without(m, lambda c: not (c.tag == "C1" and c.terms == ((1, target),)))
    problems = validate_model(mutated)
    assert problems == ["pt_0_2_0_2_0 uses a missing payment channel without a C1 row"]


def test_missing_flow_row_reported():
    m = build_model(grid_instance(3, 1, 1))
    victim = next(c for c in m.constraints if c.tag == "C4")
    problems = validate_model(without(m, lambda c: c is not victim))
    assert len(problems) == 1 and "flow conservation for node" in problems[0]


def test_uncharged_creation_cost_reported():
    m = build_model(grid_instance(3, 0, 1))
    vc = m.var("vc0", 0, 2, 1)
    budget = next(c for c in m.constraints if c.tag == "C2")
    stripped = replace(budget, terms=tuple(t for t in budget.terms if t[1] != vc))
    mutated = replace(m, constraints=[stripped if c is budget else c for c in m.constraints])
    assert validate_model(mutated) == ["creation cost of vc0_0_2_1 not charged in C2"]


def test_bad_references_reported():
    m = build_model(grid_instance(2, 0, 1))
    m.add_constraint([(1, len(m.vars) + 3)], "<=", 1, "C1")
    m.add_constraint([(1, 0)], "<=", 1, "bogus")
    m.objective.append((1, 0))
    problems = validate_model(m)
    assert any("undeclared variable" in p for p in problems)
    assert any("unknown tag 'bogus'" in p for p in problems)
    assert any("non-success variable" in p for p in problems)

import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from vpcn.corpus import random_instance
from vpcn.ingest import (ParseError, ValidationError, derive_ilp_constants, dump_instance, instance_from_dict,
                         parse_instance)


def doc(**overrides):
    base = {
        "nodes": ["A", "B"],
        "payment_channels": [{"endpoints": ["A", "B"], "balance_1": 100, "balance_2": 50,
                              "base_fee_1": 2, "prop_fee_ppm_1": 10_000}],
        "demand": [{"source": "A", "receiver": "B", "amount": 40}],
        "budget": 5,
    }
    base.update(overrides)
    return base


def test_minimal_document():
    inst = parse_instance(json.dumps(doc()))
    assert inst.nodes == ("A", "B")
    assert len(inst.network.payment_channels) == 1
    assert list(inst.demand.entries) == [("A", "B")]
    assert inst.max_level == 1 and inst.budget == 5
    # funding comes from the ledger, which is left empty
    assert set(inst.network.ledger.values()) == {0}


def test_transactions_keep_input_order():
    demand = [{"source": "B", "receiver": "A", "amount": 3},
              {"source": "A", "receiver": "B", "amount": 4},
              {"source": "B", "receiver": "A", "amount": 5}]
    inst = instance_from_dict(doc(demand=demand))
    assert [(t.seq, t.amount) for t in inst.demand.transactions()] == [(0, 3), (1, 4), (2, 5)]
    assert [t.amount for t in inst.demand.entries["B", "A"]] == [3, 5]
    assert inst.demand.total() == 12


@pytest.mark.parametrize("bad, error", [
    ({"demand": [{"source": "A", "receiver": "B", "amount": 0}]}, ValidationError),
    ({"demand": [{"source": "A", "receiver": "A", "amount": 1}]}, ValidationError),
    ({"demand": [{"source": "A", "receiver": "Z", "amount": 1}]}, ValidationError),
    ({"payment_channels": [{"endpoints": ["A", "Q"], "balance_1": 1, "balance_2": 1}]}, ValidationError),
    ({"payment_channels": [{"endpoints": ["A", "B"], "balance_1": 1, "balance_2": 1},
                           {"endpoints": ["B", "A"], "balance_1": 1, "balance_2": 1}]}, ValidationError),
    ({"payment_channels": [{"endpoints": ["A", "B"], "balance_1": -1, "balance_2": 1}]}, ValidationError),
    ({"budget": -1}, ValidationError),
    ({"max_level": -1}, ValidationError),
    ({"nodes": ["A", "A"]}, ValidationError),
    ({"vc_defaults": {"creation_cost": -2}}, ValidationError),
    ({"budget": 1.5}, ParseError),
    ({"budget": True}, ParseError),
    ({"payment_channels": {}}, ParseError),
    ({"demand": [{"source": 1, "receiver": "B", "amount": 1}]}, ParseError),
    ({"payment_channels": [{"endpoints": ["A"], "balance_1": 1, "balance_2": 1}]}, ParseError),
])
def test_invalid_documents(bad, error):
    with pytest.raises(error):
        instance_from_dict(doc(**bad))


def test_missing_sections_and_bad_json():
    for key in ("nodes", "payment_channels", "budget"):
        d = doc()
        del d[key]
        with pytest.raises(ParseError):
            instance_from_dict(d)
    with pytest.raises(ParseError):
        parse_instance("{not json")
    with pytest.raises(ParseError):
        parse_instance("[]")


def test_constants_from_channel():
    c = derive_ilp_constants(instance_from_dict(doc(nodes=["A", "B", "C"])))
    assert c.pc_exists["A", "B"] == c.pc_exists["B", "A"] == 1
    assert c.pc_exists["A", "C"] == 0
    assert (c.pcap["A", "B"], c.pcap["B", "A"]) == (100, 50)
    assert c.max_cap == 100
    assert c.pc_base_fee["A", "B", "C"] == 2
    assert c.pc_prop_fee["A", "B", "C"] == Fraction(1, 100)
    assert c.pc_fee("A", "B", "C", 40) == 2 + 1


def test_last_hop_fees_are_zero():
    inst = instance_from_dict(doc(nodes=["A", "B", "C"], vc_defaults={"base_fee_1": 4, "prop_fee_ppm_1": 5}))
    c = derive_ilp_constants(inst)
    for i in inst.nodes:
        for r in inst.nodes:
            if i == r:
                continue
            assert c.pc_base_fee[i, r, r] == c.vc_base_fee[i, r, r] == 0
            assert c.pc_prop_fee[i, r, r] == c.vc_prop_fee[i, r, r] == 0
            assert c.pc_fee(i, r, r, 20) == c.vc_fee(i, r, r, 20) == 0
    assert c.vc_fee("A", "C", "B", 20) == 4 + 1


def test_overrides_are_directional():
    inst = instance_from_dict(doc(nodes=["A", "B", "C"], vc_defaults={"creation_cost": 3},
                                  vc_overrides=[{"endpoints": ["A", "C"], "creation_cost": 1}]))
    c = derive_ilp_constants(inst)
    assert c.vc_creation_cost["A", "C"] == 1
    assert c.vc_creation_cost["C", "A"] == 3


def test_no_channels_max_cap_zero():
    c = derive_ilp_constants(instance_from_dict(doc(payment_channels=[])))
    assert c.max_cap == 0


def test_params_override():
    inst = instance_from_dict(doc())
    assert inst.with_params(budget=9).budget == 9
    assert inst.with_params(max_level=0).max_level == 0
    assert inst.with_params() == inst


@given(st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_round_trip(seed):
    inst = random_instance(seed)
    again = parse_instance(dump_instance(inst))
    assert again == inst
    assert dump_instance(again) == dump_instance(inst)

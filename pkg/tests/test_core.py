import pytest
from hypothesis import given, settings, strategies as st

from ops import run_sequence
from vpcn.core import (ChannelInUse, DuplicateChannel, FeeParams, InsufficientChannelFunds,
                       InsufficientOnChainFunds, InvalidArgument, NoSharedIntermediary, NoSuchChannel,
                       NotAPath, Vpcn, close_pc, close_vc, collateral_weight, compute_hop_amounts, open_pc,
                       open_vc, pay, pc_id, total_value, update_channel, vc_id)

AB, BC, CD = pc_id("A", "B"), pc_id("B", "C"), pc_id("C", "D")


def net_with(*channels, ledger=None):
    """Network funded exactly for ``(u1, u2, b1, b2, fees1)`` channels."""
    need = dict(ledger or {})
    for u1, u2, b1, b2, *_ in channels:
        need[u1] = need.get(u1, 0) + b1
        need[u2] = need.get(u2, 0) + b2
    net = Vpcn.create(need)
    for u1, u2, b1, b2, *rest in channels:
        net = open_pc(net, u1, u2, b1, b2, *(rest or []))
    return net


def balances(net, cid):
    ch = net.channel(cid)
    return ch.balance_1, ch.balance_2


# -- payment channels -----------------------------------------------------------

def test_open_pc_moves_funds_from_ledger():
    net = open_pc(Vpcn.create({"A": 100, "B": 50}), "A", "B", 60, 50)
    assert balances(net, AB) == (60, 50)
    assert dict(net.ledger) == {"A": 40, "B": 0}


def test_open_pc_zero_funding():
    net = open_pc(Vpcn.create({"A": 100, "B": 50}), "A", "B", 0, 0)
    assert balances(net, AB) == (0, 0)
    assert dict(net.ledger) == {"A": 100, "B": 50}


def test_open_pc_insufficient_on_chain():
    with pytest.raises(InsufficientOnChainFunds):
        open_pc(Vpcn.create({"A": 10, "B": 50}), "A", "B", 60, 50)


def test_open_pc_duplicate_in_either_orientation():
    net = net_with(("A", "B", 1, 1), ledger={"A": 5, "B": 5})
    with pytest.raises(DuplicateChannel):
        open_pc(net, "B", "A", 1, 1)


def test_close_pc_returns_balances():
    net = open_pc(Vpcn.create({"A": 100, "B": 50}), "A", "B", 60, 50)
    net = close_pc(net, AB)
    assert dict(net.ledger) == {"A": 100, "B": 50}
    assert not net.payment_channels


def test_close_pc_unknown():
    with pytest.raises(NoSuchChannel):
        close_pc(Vpcn.create({"A": 1, "B": 1}), AB)


def test_close_pc_backing_a_vc():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20))
    net = open_vc(net, AB, BC, 30, 10)
    with pytest.raises(ChannelInUse):
        close_pc(net, AB)


# -- virtual channels -----------------------------------------------------------

def test_open_vc_example():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20))
    net = open_vc(net, AB, BC, 30, 10, f_create=2)
    assert balances(net, AB) == (68, 42)
    assert balances(net, BC) == (50, 10)
    vc = net.channel(vc_id("A", "C"))
    assert (vc.balance_1, vc.balance_2, vc.level) == (30, 10, 0)
    assert vc.parents == (AB, BC, "B")


def test_open_vc_zero():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20))
    after = open_vc(net, AB, BC, 0, 0)
    assert balances(after, AB) == (100, 50) and balances(after, BC) == (80, 20)
    assert balances(after, vc_id("A", "C")) == (0, 0)


def test_open_vc_insufficient():
    net = net_with(("A", "B", 5, 50), ("B", "C", 80, 20))
    with pytest.raises(InsufficientChannelFunds):
        open_vc(net, AB, BC, 30, 0)


def test_open_vc_needs_shared_node():
    net = net_with(("A", "B", 5, 5), ("C", "D", 5, 5))
    with pytest.raises(NoSharedIntermediary):
        open_vc(net, AB, CD, 1, 1)


def test_open_vc_duplicate_and_opposite_direction():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20))
    net = open_vc(net, AB, BC, 10, 0)
    with pytest.raises(DuplicateChannel):
        open_vc(net, AB, BC, 1, 0)
    # the opposite direction is a separate channel
    net = open_vc(net, BC, AB, 5, 0)
    assert balances(net, vc_id("C", "A")) == (5, 0)


def test_vc_over_vc_has_level_one_and_summed_weight():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20), ("C", "D", 40, 40))
    net = open_vc(net, AB, BC, 30, 0)
    net = open_vc(net, vc_id("A", "C"), CD, 20, 0)
    top = net.channel(vc_id("A", "D"))
    assert top.level == 1
    assert collateral_weight(net, top.id) == 3
    assert balances(net, vc_id("A", "C")) == (10, 0)


def test_close_vc_example_keeps_creation_fee_with_intermediary():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20))
    net = close_vc(open_vc(net, AB, BC, 30, 10, f_create=2), vc_id("A", "C"))
    assert balances(net, AB) == (98, 52)
    assert balances(net, BC) == (80, 20)


def test_close_vc_after_payment():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20))
    net = open_vc(net, AB, BC, 30, 10)
    net = update_channel(net, vc_id("A", "C"), 10)
    assert balances(net, vc_id("A", "C")) == (20, 20)
    net = close_vc(net, vc_id("A", "C"))
    assert balances(net, AB) == (70 + 20, 40 + 20)
    assert balances(net, BC) == (50 + 20, 10 + 20)


def test_close_vc_unknown_and_in_use():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20), ("C", "D", 40, 40))
    with pytest.raises(NoSuchChannel):
        close_vc(net, vc_id("A", "C"))
    net = open_vc(open_vc(net, AB, BC, 30, 0), vc_id("A", "C"), CD, 5, 0)
    with pytest.raises(ChannelInUse):
        close_vc(net, vc_id("A", "C"))


# -- updates and payments ------------------------------------------------------

@pytest.mark.parametrize("v, expected", [(10, (50, 60)), (0, (60, 50))])
def test_update_channel(v, expected):
    net = net_with(("A", "B", 60, 50))
    assert balances(update_channel(net, AB, v), AB) == expected


def test_update_channel_overdraw():
    with pytest.raises(InsufficientChannelFunds):
        update_channel(net_with(("A", "B", 60, 50)), AB, 61)


@pytest.mark.parametrize("fees, v, expected", [
    ([FeeParams(7, 900_000)], 100, [100]),
    ([FeeParams(1, 10_000), FeeParams()], 20, [20, 18]),
    ([FeeParams(1, 0), FeeParams(1, 0), FeeParams()], 5, [5, 4, 3]),
    ([FeeParams(0, 1)], 1, [1]),
    ([FeeParams(0, 1), FeeParams()], 1, [1, 0]),     # 1 ppm of 1 rounds up to 1
    ([FeeParams(5, 0), FeeParams()], 3, [3, -2]),    # negative values are reported
])
def test_compute_hop_amounts(fees, v, expected):
    assert compute_hop_amounts(fees, v) == expected


def test_compute_hop_amounts_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        compute_hop_amounts([], 5)
    with pytest.raises(InvalidArgument):
        compute_hop_amounts([FeeParams()], 0)


def test_pay_two_hops_example():
    net = net_with(("A", "B", 100, 50, FeeParams(1, 10_000)), ("B", "C", 80, 20))
    net = pay(net, [AB, BC], 20)
    assert balances(net, AB) == (80, 70)
    assert balances(net, BC) == (62, 38)


def test_pay_exact_balance():
    net = pay(net_with(("A", "B", 60, 5)), [AB], 60)
    assert balances(net, AB) == (0, 65)


def test_pay_reverse_direction_uses_sender_side():
    # A's side charges 9 but B sends, so the first hop is free
    net = net_with(("A", "B", 40, 30, FeeParams(9, 0)), ("A", "C", 20, 0))
    net = pay(net, [AB, pc_id("A", "C")], 10, sender="B")
    assert balances(net, AB) == (50, 20)
    assert balances(net, pc_id("A", "C")) == (10, 10)


def test_pay_failure_is_atomic():
    net = net_with(("A", "B", 100, 50), ("B", "C", 5, 20))
    with pytest.raises(InsufficientChannelFunds):
        pay(net, [AB, BC], 20)
    assert balances(net, AB) == (100, 50)


def test_pay_fees_exceeding_amount():
    net = net_with(("A", "B", 100, 50, FeeParams(30, 0)), ("B", "C", 80, 20))
    with pytest.raises(InsufficientChannelFunds):
        pay(net, [AB, BC], 20)


def test_pay_not_a_path():
    net = net_with(("A", "B", 10, 10), ("C", "D", 10, 10))
    with pytest.raises(NotAPath):
        pay(net, [AB, CD], 1)


def test_pay_through_virtual_channel_conserves_value():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20))
    net = open_vc(net, AB, BC, 30, 10)
    before = total_value(net)
    net = pay(net, [vc_id("A", "C")], 25)
    assert balances(net, vc_id("A", "C")) == (5, 35)
    assert total_value(net) == before


def test_round_trips():
    ledger = {"A": 100, "B": 50}
    net = Vpcn.create(ledger)
    assert close_pc(open_pc(net, "A", "B", 70, 20), AB) == net

    base = net_with(("A", "B", 100, 50), ("B", "C", 80, 20))
    back = close_vc(open_vc(base, AB, BC, 30, 10, f_create=4), vc_id("A", "C"))
    assert balances(back, AB) == (96, 54)
    assert balances(back, BC) == balances(base, BC)


def test_total_value_counts_collateral():
    net = net_with(("A", "B", 100, 50), ("B", "C", 80, 20), ledger={"D": 7})
    assert total_value(net) == 257
    net = open_vc(net, AB, BC, 30, 10, f_create=2)
    assert total_value(net) == 257


@given(st.data())
@settings(max_examples=400, deadline=None)
def test_random_sequences_conserve_value(data):
    run_sequence(data.draw)

"""Execute an optimized placement on the channel state machine.

Virtual channels are opened lowest level first with the whole capacity on the
source side.  Successful transactions are then paid along their solution
paths.  Creation costs come out of an external budget wallet unless
``on_channel_fees`` asks for the intermediary to be paid inside the first
parent channel instead.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

from vpcn.core import (ChannelId, Vpcn, VpcnError, compute_hop_amounts, open_vc, orient_path,
                       pay, total_value, vc_id)
from vpcn.ingest import Instance, Transaction
from vpcn.milp.solve import OPTIMAL, PC, Solution


class ReplayDivergence(Exception):
    """An operation the solution relies on was rejected by the state machine."""

    def __init__(self, report: "ReplayReport"):
        super().__init__("; ".join(report.divergences))
        self.report = report


@dataclass
class PaymentRecord:
    seq: int
    source: str
    receiver: str
    amount: int
    delivered: int = 0
    fees: int = 0
    ok: bool = False


@dataclass
class ReplayReport:
    order: str
    payments: list[PaymentRecord] = field(default_factory=list)
    opened: list[str] = field(default_factory=list)
    divergences: list[str] = field(default_factory=list)
    wallet_before: int = 0
    wallet_after: int = 0
    value_before: int = 0
    value_after: int = 0
    final: Optional[Vpcn] = None

    @property
    def clean(self) -> bool:
        return not self.divergences

    @property
    def total_fees(self) -> int:
        return sum(p.fees for p in self.payments if p.ok)

    @property
    def total_delivered(self) -> int:
        return sum(p.delivered for p in self.payments if p.ok)

    def to_dict(self) -> dict[str, Any]:
        channels = []
        if self.final is not None:
            for ch in self.final.channels():
                channels.append({"kind": ch.kind, "endpoints": [ch.id.u1, ch.id.u2],
                                 "balance_1": ch.balance_1, "balance_2": ch.balance_2})
        return {
            "order": self.order,
            "clean": self.clean,
            "opened": self.opened,
            "payments": [vars(p) for p in self.payments],
            "total_fees": self.total_fees,
            "total_delivered": self.total_delivered,
            "wallet_before": self.wallet_before,
            "wallet_after": self.wallet_after,
            "value_before": self.value_before,
            "value_after": self.value_after,
            "divergences": self.divergences,
            "channels": channels,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _parent_ids(net: Vpcn, i: str, j: str, k: str, family: str) -> tuple[ChannelId, ChannelId]:
    left_virtual = family in ("VP", "VV")
    right_virtual = family in ("PV", "VV")
    left = vc_id(i, k) if left_virtual else net.find_payment_channel(i, k)
    right = vc_id(k, j) if right_virtual else net.find_payment_channel(k, j)
    return left, right


def _hop_ids(net: Vpcn, path) -> list[ChannelId]:
    return [net.find_payment_channel(a, b) if kind == PC else vc_id(a, b) for a, b, kind in path]


def replay_solution(inst: Instance, sol: Solution, order: str = "seq",
                    on_channel_fees: bool = False, strict: bool = True) -> ReplayReport:
    """Replay ``sol`` on ``inst``'s network.

    ``order`` is ``"seq"`` or ``"reverse"``.  With ``strict`` a divergence raises
    :class:`ReplayDivergence`; otherwise it is only recorded in the report.
    """
    if sol.status != OPTIMAL:
        raise ValueError(f"can only replay optimal solutions, got {sol.status!r}")
    if order not in ("seq", "reverse"):
        raise ValueError(f"unknown order {order!r}")
    net = inst.network
    report = ReplayReport(order=order, wallet_before=inst.budget, value_before=total_value(net))
    wallet = inst.budget

    for vc in sorted(sol.vcs, key=lambda v: (v.level, v.source, v.target)):
        terms = inst.vc_terms(vc.source, vc.target)
        label = f"vc {vc.source}->{vc.target} via {vc.via} ({vc.family}, level {vc.level})"
        try:
            p1, p2 = _parent_ids(net, vc.source, vc.target, vc.via, vc.family)
            if p1 is None or p2 is None:
                raise VpcnError("missing payment channel parent")
            net = open_vc(net, p1, p2, vc.capacity, 0, terms.fees_1, terms.fees_2,
                          f_create=terms.creation_cost if on_channel_fees else 0)
        except VpcnError as exc:
            report.divergences.append(f"opening {label} failed: {exc}")
            continue
        if not on_channel_fees:
            wallet -= terms.creation_cost
        report.opened.append(label)

    txs: list[Transaction] = sorted(inst.demand.transactions(), key=lambda t: t.seq)
    if order == "reverse":
        txs.reverse()
    for tx in txs:
        if not sol.success.get(tx.seq):
            continue
        rec = PaymentRecord(tx.seq, tx.source, tx.receiver, tx.amount)
        report.payments.append(rec)
        try:
            path = _hop_ids(net, sol.paths.get(tx.seq, []))
            if not path or None in path:
                raise VpcnError("solution path uses a channel that does not exist")
            hops = orient_path(net, path, tx.source)
            if hops[-1] != tx.receiver:
                raise VpcnError(f"path ends at {hops[-1]!r}, not {tx.receiver!r}")
            fees = [net.channel(cid).fees_of(u) for cid, u in zip(path, hops)]
            gammas = compute_hop_amounts(fees, tx.amount)
            net = pay(net, path, tx.amount, tx.source)
        except VpcnError as exc:
            report.divergences.append(f"payment seq={tx.seq} {tx.source}->{tx.receiver} "
                                      f"of {tx.amount} failed: {exc}")
            continue
        rec.ok = True
        rec.delivered = gammas[-1]
        rec.fees = tx.amount - gammas[-1]

    report.wallet_after = wallet
    report.value_after = total_value(net)
    report.final = net
    if report.value_after != report.value_before:
        report.divergences.append(f"system value changed from {report.value_before} to {report.value_after}")
    if strict and report.divergences:
        raise ReplayDivergence(report)
    return report

"""Virtual payment channel network state machine.

A :class:`Vpcn` is an immutable snapshot of nodes, payment channels, virtual
channels and the on-chain ledger.  Every operation takes a snapshot and returns
a new one; a failed operation raises and leaves its input untouched.

Amounts are integer base units.  Proportional fees are integer parts per
million and are rounded up when applied to an amount.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, Mapping, NamedTuple, Optional, Sequence

PAYMENT: Literal["payment"] = "payment"
VIRTUAL: Literal["virtual"] = "virtual"

PPM = 1_000_000

Address = str


class VpcnError(Exception):
    """Base class for rejected state transitions."""


class InsufficientOnChainFunds(VpcnError):
    pass


class InsufficientChannelFunds(VpcnError):
    pass


class DuplicateChannel(VpcnError):
    pass


class NoSuchChannel(VpcnError):
    pass


class ChannelInUse(VpcnError):
    pass


class NoSharedIntermediary(VpcnError):
    pass


class NotAPath(VpcnError):
    pass


class InvalidArgument(VpcnError, ValueError):
    pass


@dataclass(frozen=True)
class FeeParams:
    base_fee: int = 0
    prop_fee_ppm: int = 0

    def __post_init__(self):
        if self.base_fee < 0 or self.prop_fee_ppm < 0:
            raise InvalidArgument(f"negative fee parameters: {self}")

    def fee(self, amount: int) -> int:
        """Fee charged for forwarding ``amount``; the proportional part rounds up."""
        return self.base_fee + ceil_ppm(self.prop_fee_ppm, amount)


ZERO_FEES = FeeParams()


def ceil_ppm(ppm: int, amount: int) -> int:
    return -((-ppm * amount) // PPM)


class ChannelId(NamedTuple):
    u1: Address
    u2: Address
    kind: str

    def endpoints(self) -> tuple[Address, Address]:
        return (self.u1, self.u2)

    def other(self, node: Address) -> Address:
        if node == self.u1:
            return self.u2
        if node == self.u2:
            return self.u1
        raise NotAPath(f"{node!r} is not an endpoint of {self}")


def pc_id(u1: Address, u2: Address) -> ChannelId:
    return ChannelId(u1, u2, PAYMENT)


def vc_id(u1: Address, u2: Address) -> ChannelId:
    return ChannelId(u1, u2, VIRTUAL)


@dataclass(frozen=True)
class ChannelState:
    id: ChannelId
    balance_1: int
    balance_2: int
    fees_1: FeeParams = ZERO_FEES
    fees_2: FeeParams = ZERO_FEES
    # (parent1, parent2, intermediary); virtual channels only
    parents: Optional[tuple[ChannelId, ChannelId, Address]] = None
    level: int = 0

    def __post_init__(self):
        if self.id.u1 == self.id.u2:
            raise InvalidArgument(f"channel endpoints must differ: {self.id}")
        if self.balance_1 < 0 or self.balance_2 < 0:
            raise InvalidArgument(f"negative channel balance: {self}")
        if (self.parents is not None) != (self.id.kind == VIRTUAL):
            raise InvalidArgument("parents must be present exactly for virtual channels")

    @property
    def kind(self) -> str:
        return self.id.kind

    @property
    def total(self) -> int:
        return self.balance_1 + self.balance_2

    def balance_of(self, node: Address) -> int:
        if node == self.id.u1:
            return self.balance_1
        if node == self.id.u2:
            return self.balance_2
        raise NotAPath(f"{node!r} is not an endpoint of {self.id}")

    def fees_of(self, node: Address) -> FeeParams:
        if node == self.id.u1:
            return self.fees_1
        if node == self.id.u2:
            return self.fees_2
        raise NotAPath(f"{node!r} is not an endpoint of {self.id}")

    def shifted(self, deltas: Mapping[Address, int]) -> "ChannelState":
        """Copy with per-endpoint balance deltas applied."""
        b1 = self.balance_1 + deltas.get(self.id.u1, 0)
        b2 = self.balance_2 + deltas.get(self.id.u2, 0)
        if b1 < 0 or b2 < 0:
            raise InsufficientChannelFunds(f"{self.id} would go negative ({b1}, {b2})")
        return replace(self, balance_1=b1, balance_2=b2)


@dataclass(frozen=True)
class Vpcn:
    nodes: frozenset[Address] = frozenset()
    payment_channels: Mapping[ChannelId, ChannelState] = field(default_factory=dict)
    virtual_channels: Mapping[ChannelId, ChannelState] = field(default_factory=dict)
    ledger: Mapping[Address, int] = field(default_factory=dict)

    @classmethod
    def create(cls, ledger: Mapping[Address, int], nodes: Iterable[Address] = ()) -> "Vpcn":
        all_nodes = frozenset(nodes) | frozenset(ledger)
        for node in all_nodes:
            if not isinstance(node, str) or not node:
                raise InvalidArgument(f"invalid address {node!r}")
        for node, bal in ledger.items():
            if bal < 0:
                raise InvalidArgument(f"negative on-chain balance for {node!r}")
        return cls(nodes=all_nodes, ledger={u: ledger.get(u, 0) for u in sorted(all_nodes)})

    def channel(self, cid: ChannelId) -> ChannelState:
        table = self.payment_channels if cid.kind == PAYMENT else self.virtual_channels
        try:
            return table[cid]
        except KeyError:
            raise NoSuchChannel(f"no channel {cid}") from None

    def channels(self) -> list[ChannelState]:
        return [*self.payment_channels.values(), *self.virtual_channels.values()]

    def find_payment_channel(self, a: Address, b: Address) -> Optional[ChannelId]:
        for cid in (pc_id(a, b), pc_id(b, a)):
            if cid in self.payment_channels:
                return cid
        return None

    def children_of(self, cid: ChannelId) -> list[ChannelId]:
        return [
            vc.id for vc in self.virtual_channels.values()
            if vc.parents is not None and cid in vc.parents[:2]
        ]

    def _with(self, updated: Iterable[ChannelState] = (), removed: Iterable[ChannelId] = (),
              ledger: Optional[Mapping[Address, int]] = None) -> "Vpcn":
        pcs = dict(self.payment_channels)
        vcs = dict(self.virtual_channels)
        for cid in removed:
            (pcs if cid.kind == PAYMENT else vcs).pop(cid)
        for ch in updated:
            (pcs if ch.kind == PAYMENT else vcs)[ch.id] = ch
        return replace(self, payment_channels=pcs, virtual_channels=vcs,
                       ledger=self.ledger if ledger is None else ledger)


def collateral_weight(net: Vpcn, cid: ChannelId) -> int:
    """Number of payment channels whose funds back one unit held in ``cid``.

    Opening a virtual channel locks its balances in both parents, so a unit
    in a virtual channel stands for one unit in each parent.
    """
    ch = net.channel(cid)
    if ch.parents is None:
        return 1
    return collateral_weight(net, ch.parents[0]) + collateral_weight(net, ch.parents[1])


def total_value(net: Vpcn) -> int:
    """On-chain balances plus channel balances weighted by collateral."""
    value = sum(net.ledger.values())
    value += sum(ch.total for ch in net.payment_channels.values())
    value += sum(ch.total * collateral_weight(net, ch.id) for ch in net.virtual_channels.values())
    return value


def _check_amount(*amounts: int) -> None:
    for a in amounts:
        if not isinstance(a, int) or isinstance(a, bool) or a < 0:
            raise InvalidArgument(f"amounts must be non-negative integers, got {a!r}")


def open_pc(net: Vpcn, u1: Address, u2: Address, b1: int, b2: int,
            fees1: FeeParams = ZERO_FEES, fees2: FeeParams = ZERO_FEES) -> Vpcn:
    _check_amount(b1, b2)
    for u in (u1, u2):
        if u not in net.nodes:
            raise InvalidArgument(f"unknown node {u!r}")
    if u1 == u2:
        raise InvalidArgument("a channel needs two distinct endpoints")
    if net.find_payment_channel(u1, u2) is not None:
        raise DuplicateChannel(f"payment channel between {u1!r} and {u2!r} already exists")
    if net.ledger.get(u1, 0) < b1 or net.ledger.get(u2, 0) < b2:
        raise InsufficientOnChainFunds(f"cannot fund ({b1}, {b2}) from {u1!r}/{u2!r}")
    ledger = dict(net.ledger)
    ledger[u1] -= b1
    ledger[u2] -= b2
    ch = ChannelState(pc_id(u1, u2), b1, b2, fees1, fees2)
    return net._with(updated=[ch], ledger=ledger)


def close_pc(net: Vpcn, cid: ChannelId) -> Vpcn:
    if cid.kind != PAYMENT or cid not in net.payment_channels:
        raise NoSuchChannel(f"no payment channel {cid}")
    if net.children_of(cid):
        raise ChannelInUse(f"{cid} backs virtual channels {net.children_of(cid)}")
    ch = net.payment_channels[cid]
    ledger = dict(net.ledger)
    ledger[cid.u1] += ch.balance_1
    ledger[cid.u2] += ch.balance_2
    return net._with(removed=[cid], ledger=ledger)


def open_vc(net: Vpcn, parent1: ChannelId, parent2: ChannelId, b1: int, b2: int,
            fees1: FeeParams = ZERO_FEES, fees2: FeeParams = ZERO_FEES,
            f_create: int = 0) -> Vpcn:
    """Open a virtual channel u1 -- u2 over ``parent1`` (u1 -- uI) and ``parent2`` (uI -- u2).

    Parents may be payment or virtual channels.  u1 funds ``b1 + f_create`` on
    parent1, the intermediary matches ``b1`` on parent2 and ``b2`` on parent1,
    and u2 funds ``b2`` on parent2.  The intermediary keeps ``f_create``.
    """
    _check_amount(b1, b2, f_create)
    p1 = net.channel(parent1)
    p2 = net.channel(parent2)
    shared = set(parent1.endpoints()) & set(parent2.endpoints())
    if len(shared) != 1:
        raise NoSharedIntermediary(f"{parent1} and {parent2} do not share exactly one node")
    (ui,) = shared
    u1 = parent1.other(ui)
    u2 = parent2.other(ui)
    if vc_id(u1, u2) in net.virtual_channels:
        raise DuplicateChannel(f"virtual channel {u1!r} -> {u2!r} already exists")
    if (p1.balance_of(u1) < b1 + f_create or p1.balance_of(ui) < b2
            or p2.balance_of(ui) < b1 or p2.balance_of(u2) < b2):
        raise InsufficientChannelFunds(f"parents cannot fund virtual channel ({b1}, {b2})")
    new_p1 = p1.shifted({u1: -(b1 + f_create), ui: f_create - b2})
    new_p2 = p2.shifted({ui: -b1, u2: -b2})
    vc = ChannelState(vc_id(u1, u2), b1, b2, fees1, fees2,
                      parents=(parent1, parent2, ui),
                      level=1 + max(_level_for_parent(p1), _level_for_parent(p2)))
    return net._with(updated=[new_p1, new_p2, vc])


def _level_for_parent(ch: ChannelState) -> int:
    return -1 if ch.kind == PAYMENT else ch.level


def close_vc(net: Vpcn, cid: ChannelId) -> Vpcn:
    if cid.kind != VIRTUAL or cid not in net.virtual_channels:
        raise NoSuchChannel(f"no virtual channel {cid}")
    if net.children_of(cid):
        raise ChannelInUse(f"{cid} backs virtual channels {net.children_of(cid)}")
    vc = net.virtual_channels[cid]
    parent1, parent2, ui = vc.parents
    p1 = net.channel(parent1)
    p2 = net.channel(parent2)
    new_p1 = p1.shifted({cid.u1: vc.balance_1, ui: vc.balance_2})
    new_p2 = p2.shifted({ui: vc.balance_1, cid.u2: vc.balance_2})
    return net._with(updated=[new_p1, new_p2], removed=[cid])


def update_channel(net: Vpcn, cid: ChannelId, v: int) -> Vpcn:
    """Move ``v`` from the first endpoint to the second on channel ``cid``."""
    _check_amount(v)
    ch = net.channel(cid)
    if ch.balance_1 < v:
        raise InsufficientChannelFunds(f"{cid} holds {ch.balance_1} < {v}")
    return net._with(updated=[replace(ch, balance_1=ch.balance_1 - v, balance_2=ch.balance_2 + v)])


def compute_hop_amounts(path_fees: Sequence[FeeParams], v: int) -> list[int]:
    """Amount forwarded on each hop when paying ``v``.

    Hop ``i`` carries ``v`` minus the fees of hops ``0..i-1``; every fee is
    computed on the original amount ``v``.  Negative values are returned as is.
    """
    if not path_fees:
        raise InvalidArgument("empty path")
    if v <= 0:
        raise InvalidArgument(f"payment amount must be positive, got {v}")
    gammas = [v]
    for fees in path_fees[:-1]:
        gammas.append(gammas[-1] - fees.fee(v))
    return gammas


def orient_path(net: Vpcn, path: Sequence[ChannelId], sender: Optional[Address] = None) -> list[Address]:
    """Node sequence visited by ``path``; raises NotAPath if hops do not chain."""
    if not path:
        raise NotAPath("empty path")
    for cid in path:
        net.channel(cid)
    if sender is None:
        if len(path) == 1:
            sender = path[0].u1
        else:
            shared = set(path[0].endpoints()) & set(path[1].endpoints())
            if len(shared) != 1:
                raise NotAPath(f"{path[0]} and {path[1]} are not adjacent")
            sender = path[0].other(next(iter(shared)))
    nodes = [sender]
    for cid in path:
        if nodes[-1] not in cid.endpoints():
            raise NotAPath(f"{cid} does not continue from {nodes[-1]!r}")
        nodes.append(cid.other(nodes[-1]))
    return nodes


def pay(net: Vpcn, path: Sequence[ChannelId], v: int, sender: Optional[Address] = None) -> Vpcn:
    """Route ``v`` along ``path``; all hops succeed or none do."""
    _check_amount(v)
    nodes = orient_path(net, path, sender)
    hops = [net.channel(cid) for cid in path]
    gammas = compute_hop_amounts([ch.fees_of(u) for ch, u in zip(hops, nodes)], v)
    if gammas[-1] < 0:
        raise InsufficientChannelFunds(f"fees exceed payment of {v}")
    updated: dict[ChannelId, ChannelState] = {}
    for ch, src, dst, gamma in zip(hops, nodes, nodes[1:], gammas):
        ch = updated.get(ch.id, ch)
        if ch.balance_of(src) < gamma:
            raise InsufficientChannelFunds(f"{src!r} holds {ch.balance_of(src)} < {gamma} on {ch.id}")
        updated[ch.id] = ch.shifted({src: -gamma, dst: gamma})
    return net._with(updated=updated.values())

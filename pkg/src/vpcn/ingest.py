"""Problem instances: JSON documents, validation and ILP constants.

Instance document (UTF-8 JSON)::

    {
      "nodes": ["A", "B", "C"],
      "payment_channels": [
        {"endpoints": ["A", "B"], "balance_1": 100, "balance_2": 50,
         "base_fee_1": 1, "prop_fee_ppm_1": 10000, "base_fee_2": 0, "prop_fee_ppm_2": 0}
      ],
      "vc_defaults": {"base_fee_1": 0, "prop_fee_ppm_1": 0,
                      "base_fee_2": 0, "prop_fee_ppm_2": 0, "creation_cost": 3},
      "vc_overrides": [
        {"endpoints": ["A", "C"], "base_fee_1": 0, "prop_fee_ppm_1": 0,
         "base_fee_2": 0, "prop_fee_ppm_2": 0, "creation_cost": 1}
      ],
      "demand": [{"source": "A", "receiver": "C", "amount": 10}],
      "budget": 10,
      "max_level": 1
    }

Fee and cost fields default to 0, ``vc_defaults``/``vc_overrides``/``demand``
default to empty and ``max_level`` to 1.  ``nodes``, ``payment_channels`` and
``budget`` are required.  Virtual channel terms are directional: an override
for ``["A", "C"]`` prices the channel A -> C (``*_1`` is A's side).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Optional

from vpcn.core import PPM, FeeParams, Vpcn, ZERO_FEES, VpcnError, open_pc

Address = str


class InstanceError(Exception):
    pass


class ParseError(InstanceError):
    pass


class ValidationError(InstanceError):
    pass


@dataclass(frozen=True)
class Transaction:
    source: Address
    receiver: Address
    amount: int
    seq: int

    def __post_init__(self):
        if self.amount <= 0:
            raise ValidationError(f"transaction {self.seq} has non-positive amount {self.amount}")
        if self.source == self.receiver:
            raise ValidationError(f"transaction {self.seq} sends to itself")


@dataclass(frozen=True)
class DemandMatrix:
    entries: Mapping[tuple[Address, Address], tuple[Transaction, ...]] = field(default_factory=dict)

    @classmethod
    def from_transactions(cls, txs) -> "DemandMatrix":
        entries: dict[tuple[Address, Address], list[Transaction]] = {}
        for tx in sorted(txs, key=lambda t: t.seq):
            entries.setdefault((tx.source, tx.receiver), []).append(tx)
        return cls({k: tuple(v) for k, v in entries.items()})

    def transactions(self) -> list[Transaction]:
        return sorted((t for ts in self.entries.values() for t in ts), key=lambda t: t.seq)

    def __len__(self):
        return sum(len(ts) for ts in self.entries.values())

    def total(self) -> int:
        return sum(t.amount for t in self.transactions())


@dataclass(frozen=True)
class VcTerms:
    """Fees and creation cost of a directional virtual channel."""
    fees_1: FeeParams = ZERO_FEES
    fees_2: FeeParams = ZERO_FEES
    creation_cost: int = 0


@dataclass(frozen=True)
class Instance:
    network: Vpcn
    demand: DemandMatrix
    budget: int
    vc_defaults: VcTerms = VcTerms()
    vc_overrides: Mapping[tuple[Address, Address], VcTerms] = field(default_factory=dict)
    max_level: int = 1
    node_order: tuple[Address, ...] = ()

    @property
    def nodes(self) -> tuple[Address, ...]:
        return self.node_order or tuple(sorted(self.network.nodes))

    def vc_terms(self, i: Address, j: Address) -> VcTerms:
        return self.vc_overrides.get((i, j), self.vc_defaults)

    def with_params(self, budget: Optional[int] = None, max_level: Optional[int] = None) -> "Instance":
        return replace(
            self,
            budget=self.budget if budget is None else budget,
            max_level=self.max_level if max_level is None else max_level,
        )


@dataclass(frozen=True)
class IlpConstants:
    """Numeric constants of the placement ILP, keyed by node addresses."""
    pc_exists: dict[tuple[Address, Address], int]
    pcap: dict[tuple[Address, Address], int]
    pc_base_fee: dict[tuple[Address, Address, Address], int]
    pc_prop_fee: dict[tuple[Address, Address, Address], Fraction]
    vc_base_fee: dict[tuple[Address, Address, Address], int]
    vc_prop_fee: dict[tuple[Address, Address, Address], Fraction]
    vc_creation_cost: dict[tuple[Address, Address], int]
    max_cap: int
    # ppm rates as given, used to round proportional fees up per transaction
    pc_prop_ppm: dict[tuple[Address, Address, Address], int] = field(default_factory=dict)
    vc_prop_ppm: dict[tuple[Address, Address, Address], int] = field(default_factory=dict)

    def pc_fee(self, i: Address, j: Address, r: Address, amount: int) -> int:
        ppm = self.pc_prop_ppm[i, j, r]
        return self.pc_base_fee[i, j, r] + -((-ppm * amount) // PPM)

    def vc_fee(self, i: Address, j: Address, r: Address, amount: int) -> int:
        ppm = self.vc_prop_ppm[i, j, r]
        return self.vc_base_fee[i, j, r] + -((-ppm * amount) // PPM)


# -- parsing ---------------------------------------------------------------

def _int(doc: Mapping[str, Any], key: str, where: str, default: Optional[int] = None) -> int:
    if key not in doc:
        if default is None:
            raise ParseError(f"{where}: missing field {key!r}")
        return default
    value = doc[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise ParseError(f"{where}: field {key!r} must be an integer, got {value!r}")
    if value < 0:
        raise ValidationError(f"{where}: field {key!r} must be non-negative, got {value}")
    return value


def _obj(value: Any, where: str) -> Mapping[str, Any]:
    if not isinstance(value, dict):
        raise ParseError(f"{where}: expected an object")
    return value


def _list(doc: Mapping[str, Any], key: str, required: bool = False) -> list:
    if key not in doc:
        if required:
            raise ParseError(f"missing section {key!r}")
        return []
    value = doc[key]
    if not isinstance(value, list):
        raise ParseError(f"section {key!r} must be an array")
    return value


def _endpoints(entry: Mapping[str, Any], where: str, nodes: set[str]) -> tuple[str, str]:
    ends = entry.get("endpoints")
    if not isinstance(ends, list) or len(ends) != 2 or not all(isinstance(e, str) for e in ends):
        raise ParseError(f"{where}: 'endpoints' must be a pair of node names")
    a, b = ends
    for e in (a, b):
        if e not in nodes:
            raise ValidationError(f"{where}: unknown node {e!r}")
    if a == b:
        raise ValidationError(f"{where}: endpoints must differ")
    return a, b


def _vc_terms(entry: Mapping[str, Any], where: str) -> VcTerms:
    return VcTerms(
        FeeParams(_int(entry, "base_fee_1", where, 0), _int(entry, "prop_fee_ppm_1", where, 0)),
        FeeParams(_int(entry, "base_fee_2", where, 0), _int(entry, "prop_fee_ppm_2", where, 0)),
        _int(entry, "creation_cost", where, 0),
    )


def instance_from_dict(doc: Any) -> Instance:
    doc = _obj(doc, "instance")
    raw_nodes = _list(doc, "nodes", required=True)
    if not all(isinstance(u, str) and u for u in raw_nodes):
        raise ParseError("'nodes' must be non-empty strings")
    if len(set(raw_nodes)) != len(raw_nodes):
        raise ValidationError("duplicate node names")
    nodes = set(raw_nodes)

    channels = []
    seen_pairs: set[frozenset[str]] = set()
    for n, entry in enumerate(_list(doc, "payment_channels", required=True)):
        where = f"payment_channels[{n}]"
        entry = _obj(entry, where)
        a, b = _endpoints(entry, where, nodes)
        if frozenset((a, b)) in seen_pairs:
            raise ValidationError(f"{where}: duplicate channel between {a!r} and {b!r}")
        seen_pairs.add(frozenset((a, b)))
        channels.append((a, b, _int(entry, "balance_1", where), _int(entry, "balance_2", where),
                         FeeParams(_int(entry, "base_fee_1", where, 0), _int(entry, "prop_fee_ppm_1", where, 0)),
                         FeeParams(_int(entry, "base_fee_2", where, 0), _int(entry, "prop_fee_ppm_2", where, 0))))

    defaults = _vc_terms(_obj(doc.get("vc_defaults", {}), "vc_defaults"), "vc_defaults")
    overrides: dict[tuple[str, str], VcTerms] = {}
    for n, entry in enumerate(_list(doc, "vc_overrides")):
        where = f"vc_overrides[{n}]"
        entry = _obj(entry, where)
        pair = _endpoints(entry, where, nodes)
        if pair in overrides:
            raise ValidationError(f"{where}: duplicate override for {pair}")
        overrides[pair] = _vc_terms(entry, where)

    txs = []
    for n, entry in enumerate(_list(doc, "demand")):
        where = f"demand[{n}]"
        entry = _obj(entry, where)
        s, r = entry.get("source"), entry.get("receiver")
        if not isinstance(s, str) or not isinstance(r, str):
            raise ParseError(f"{where}: 'source' and 'receiver' must be node names")
        for u in (s, r):
            if u not in nodes:
                raise ValidationError(f"{where}: unknown node {u!r}")
        amount = _int(entry, "amount", where)
        txs.append(Transaction(s, r, amount, n))

    budget = _int(doc, "budget", "instance")
    max_level = _int(doc, "max_level", "instance", 1)

    ledger = {u: 0 for u in raw_nodes}
    for a, b, b1, b2, _, _ in channels:
        ledger[a] += b1
        ledger[b] += b2
    net = Vpcn.create(ledger, raw_nodes)
    try:
        for a, b, b1, b2, f1, f2 in channels:
            net = open_pc(net, a, b, b1, b2, f1, f2)
    except VpcnError as exc:
        raise ValidationError(str(exc)) from exc

    return Instance(net, DemandMatrix.from_transactions(txs), budget, defaults, overrides,
                    max_level, tuple(raw_nodes))


def parse_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed instance document: {exc}") from exc
    return instance_from_dict(doc)


def load_instance(path: str | Path) -> Instance:
    return parse_instance(Path(path).read_text(encoding="utf-8"))


def _fee_fields(f1: FeeParams, f2: FeeParams) -> dict[str, int]:
    return {"base_fee_1": f1.base_fee, "prop_fee_ppm_1": f1.prop_fee_ppm,
            "base_fee_2": f2.base_fee, "prop_fee_ppm_2": f2.prop_fee_ppm}


def _terms_dict(terms: VcTerms) -> dict[str, int]:
    return {**_fee_fields(terms.fees_1, terms.fees_2), "creation_cost": terms.creation_cost}


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    order = {u: n for n, u in enumerate(inst.nodes)}
    pcs = sorted(inst.network.payment_channels.values(),
                 key=lambda ch: (order[ch.id.u1], order[ch.id.u2]))
    return {
        "nodes": list(inst.nodes),
        "payment_channels": [
            {"endpoints": [ch.id.u1, ch.id.u2], "balance_1": ch.balance_1,
             "balance_2": ch.balance_2, **_fee_fields(ch.fees_1, ch.fees_2)}
            for ch in pcs
        ],
        "vc_defaults": _terms_dict(inst.vc_defaults),
        "vc_overrides": [
            {"endpoints": list(pair), **_terms_dict(terms)}
            for pair, terms in sorted(inst.vc_overrides.items(), key=lambda kv: (order[kv[0][0]], order[kv[0][1]]))
        ],
        "demand": [{"source": t.source, "receiver": t.receiver, "amount": t.amount}
                   for t in inst.demand.transactions()],
        "budget": inst.budget,
        "max_level": inst.max_level,
    }


def dump_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


# -- ILP constants -----------------------------------------------------------

def derive_ilp_constants(inst: Instance) -> IlpConstants:
    nodes = inst.nodes
    pairs = [(i, j) for i in nodes for j in nodes if i != j]
    pc_exists = {p: 0 for p in pairs}
    pcap = {p: 0 for p in pairs}
    pc_fees: dict[tuple[str, str], FeeParams] = {}
    for ch in inst.network.payment_channels.values():
        a, b = ch.id.u1, ch.id.u2
        pc_exists[a, b] = pc_exists[b, a] = 1
        pcap[a, b], pcap[b, a] = ch.balance_1, ch.balance_2
        pc_fees[a, b], pc_fees[b, a] = ch.fees_1, ch.fees_2

    pc_base, pc_prop, pc_ppm = {}, {}, {}
    vc_base, vc_prop, vc_ppm = {}, {}, {}
    for i, j in pairs:
        pf = pc_fees.get((i, j), ZERO_FEES)
        vf = inst.vc_terms(i, j).fees_1
        for r in nodes:
            last = j == r
            pc_base[i, j, r] = 0 if last else pf.base_fee
            pc_ppm[i, j, r] = 0 if last else pf.prop_fee_ppm
            pc_prop[i, j, r] = Fraction(pc_ppm[i, j, r], PPM)
            vc_base[i, j, r] = 0 if last else vf.base_fee
            vc_ppm[i, j, r] = 0 if last else vf.prop_fee_ppm
            vc_prop[i, j, r] = Fraction(vc_ppm[i, j, r], PPM)

    return IlpConstants(
        pc_exists=pc_exists,
        pcap=pcap,
        pc_base_fee=pc_base,
        pc_prop_fee=pc_prop,
        vc_base_fee=vc_base,
        vc_prop_fee=vc_prop,
        vc_creation_cost={(i, j): inst.vc_terms(i, j).creation_cost for i, j in pairs},
        max_cap=max(pcap.values(), default=0),
        pc_prop_ppm=pc_ppm,
        vc_prop_ppm=vc_ppm,
    )

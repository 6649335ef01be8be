"""Exhaustive optimizer for tiny placement instances.

The search never consults the ILP.  It enumerates which transactions succeed,
a simple path for each, and a construction for every virtual channel those
paths need (recursively through parents).  Virtual channels that no path
depends on only add cost, so leaving them out cannot lose the optimum.
Capacities are set to exactly what routed flow and child channels draw.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations, product
from typing import Iterator, Optional

from vpcn.ingest import IlpConstants, Instance, derive_ilp_constants
from vpcn.milp.builder import ModelOptions, effective_max_level
from vpcn.milp.solve import OPTIMAL, PC, VC, Solution, VcChoice


class EnvelopeExceeded(Exception):
    pass


@dataclass(frozen=True)
class OracleEnvelope:
    max_nodes: int = 4
    max_transactions: int = 3
    max_level: int = 1
    max_path_len: int = 4

    def __post_init__(self):
        if min(self.max_nodes, self.max_transactions, self.max_level, self.max_path_len) < 1:
            raise ValueError("envelope limits must be >= 1")

    def check(self, inst: Instance) -> None:
        if len(inst.nodes) > self.max_nodes:
            raise EnvelopeExceeded(f"{len(inst.nodes)} nodes > {self.max_nodes}")
        if len(inst.demand) > self.max_transactions:
            raise EnvelopeExceeded(f"{len(inst.demand)} transactions > {self.max_transactions}")
        if effective_max_level(inst) > self.max_level:
            raise EnvelopeExceeded(f"recursion level {effective_max_level(inst)} > {self.max_level}")


@dataclass(frozen=True)
class Construction:
    """A vc ``source -> target`` over ``via`` at level ``level`` from parents of ``family``."""
    source: str
    target: str
    via: str
    level: int
    family: str

    @cached_property
    def _parents(self) -> tuple[tuple, tuple]:
        i, j, k = self.source, self.target, self.via
        left, right = (i, k), (k, j)
        pcs = {"PP": (left, right), "PV": (left,), "VP": (right,), "VV": ()}[self.family]
        vcs = {"PP": (), "PV": (right,), "VP": (left,), "VV": (left, right)}[self.family]
        return pcs, vcs

    def vc_parents(self) -> tuple[tuple[str, str], ...]:
        return self._parents[1]

    def pc_parents(self) -> tuple[tuple[str, str], ...]:
        return self._parents[0]


def _constructions(inst: Instance, consts: IlpConstants) -> dict[tuple[str, str], list[Construction]]:
    """Every structurally possible construction per ordered pair, in search order."""
    nodes = inst.nodes
    M = effective_max_level(inst)
    pc = consts.pc_exists
    # lowest level at which a vc can exist on each pair
    lowest: dict[tuple[str, str], int] = {}
    options: dict[tuple[str, str], list[Construction]] = {}
    for q in range(M + 1):
        new = []
        for i in nodes:
            for j in nodes:
                if i == j:
                    continue
                for k in nodes:
                    if k in (i, j):
                        continue
                    below = lambda a, b: lowest.get((a, b), M + 1) < q
                    fams = []
                    if q == 0:
                        if pc[i, k] and pc[k, j]:
                            fams.append("PP")
                    else:
                        if pc[i, k] and below(k, j):
                            fams.append("PV")
                        if below(i, k) and pc[k, j]:
                            fams.append("VP")
                        if below(i, k) and below(k, j):
                            fams.append("VV")
                    for fam in fams:
                        new.append(Construction(i, j, k, q, fam))
        for c in new:
            options.setdefault((c.source, c.target), []).append(c)
            lowest.setdefault((c.source, c.target), q)
    return options


def _consistent(chosen: dict[tuple[str, str], Construction]) -> bool:
    for c in chosen.values():
        for parent in c.vc_parents():
            p = chosen.get(parent)
            if p is None or p.level >= c.level:
                return False
    return True


def enumerate_vc_sets(inst: Instance, envelope: OracleEnvelope = OracleEnvelope()) -> Iterator[frozenset[Construction]]:
    """Every admissible set of directional virtual channels (at most one per pair)."""
    envelope.check(inst)
    options = _constructions(inst, derive_ilp_constants(inst))
    pairs = sorted(options)

    def rec(pos: int, chosen: dict) -> Iterator[frozenset[Construction]]:
        if pos == len(pairs):
            if _consistent(chosen):
                yield frozenset(chosen.values())
            return
        pair = pairs[pos]
        yield from rec(pos + 1, chosen)
        for c in options[pair]:
            chosen[pair] = c
            yield from rec(pos + 1, chosen)
            del chosen[pair]

    yield from rec(0, {})


@dataclass
class _Partial:
    """Lower bounds carried through the closure search, used only for pruning."""
    cap: dict[tuple[str, str], int]
    pc_load: dict[tuple[str, str], int]
    slack: int


def _closures(needed: dict[tuple[str, str], int], options, chosen: dict,
              consts: Optional[IlpConstants] = None, part: Optional[_Partial] = None,
              reserve: bool = True) -> Iterator[dict]:
    """Assign a construction to every needed pair and, recursively, its vc parents.

    ``needed`` maps a pair to the highest level its construction may have.  With
    ``consts`` and ``part`` given, branches whose capacity or budget lower bounds
    already fail are cut.
    """
    for pair, c in chosen.items():
        if c.level > needed.get(pair, c.level):
            return
    todo = [p for p in needed if p not in chosen]
    if not todo:
        if _consistent(chosen):
            yield dict(chosen)
        return
    pair = min(todo)
    for c in options.get(pair, []):
        if c.level > needed[pair]:
            continue
        sub = part
        if part is not None:
            sub = _extend(part, pair, c, consts, reserve)
            if sub is None:
                continue
        chosen[pair] = c
        more = dict(needed)
        for parent in c.vc_parents():
            more[parent] = min(more.get(parent, c.level - 1), c.level - 1)
        yield from _closures(more, options, chosen, consts, sub, reserve)
        del chosen[pair]


def _extend(part: _Partial, pair, c: Construction, consts: IlpConstants, reserve: bool) -> Optional[_Partial]:
    slack = part.slack - consts.vc_creation_cost[pair]
    if slack < 0:
        return None
    low = part.cap.get(pair, 0)
    if low > consts.max_cap:
        return None
    pc_load = dict(part.pc_load)
    for parent in c.pc_parents():
        pc_load[parent] = pc_load.get(parent, 0) + low
        if pc_load[parent] > consts.pcap[parent]:
            return None
    cap = dict(part.cap)
    for parent in c.vc_parents():
        cap[parent] = cap.get(parent, 0) + low if reserve else max(cap.get(parent, 0), low)
    return _Partial(cap, pc_load, slack)


class _Evaluator:
    def __init__(self, inst: Instance, consts: IlpConstants, options: ModelOptions):
        self.inst = inst
        self.consts = consts
        self.reserve = options.reserve_parent_vc_capacity
        self.cap_fees = options.cap_fees_at_amount

    def hop_fee(self, hop: tuple[str, str, str], receiver: str, amount: int) -> int:
        a, b, kind = hop
        if kind == PC:
            return self.consts.pc_fee(a, b, receiver, amount)
        return self.consts.vc_fee(a, b, receiver, amount)

    def capacities(self, chosen: dict, flow: dict) -> Optional[dict]:
        need = {pair: flow.get(pair, 0) for pair in chosen}
        caps = {}
        for pair, c in sorted(chosen.items(), key=lambda kv: -kv[1].level):
            caps[pair] = need[pair]
            for parent in c.vc_parents():
                need[parent] = need[parent] + caps[pair] if self.reserve else max(need[parent], caps[pair])
        return caps

    def feasible(self, txs, paths, chosen: dict, fees: list[int]) -> Optional[dict]:
        consts = self.consts
        flow: dict[tuple[str, str], int] = {}
        pc_load: dict[tuple[str, str], int] = {}
        for tx, path in zip(txs, paths):
            for a, b, kind in path:
                table = flow if kind == VC else pc_load
                table[a, b] = table.get((a, b), 0) + tx.amount
        caps = self.capacities(chosen, flow)
        for pair, c in chosen.items():
            cap = caps[pair]
            if cap > consts.max_cap:
                return None
            for parent in c.pc_parents():
                if cap > consts.pcap[parent]:
                    return None
            for parent in c.vc_parents():
                if cap > caps[parent]:
                    return None
            children = sum(caps[p] for p, ch in chosen.items() if pair in ch.vc_parents())
            if flow.get(pair, 0) + (children if self.reserve else 0) > cap:
                return None
            for parent in c.pc_parents():
                pc_load[parent] = pc_load.get(parent, 0) + cap
        for pair, load in pc_load.items():
            if load > consts.pcap[pair]:
                return None
        creation = sum(consts.vc_creation_cost[pair] for pair in chosen)
        if creation + sum(fees) > self.inst.budget:
            return None
        return caps


def brute_force_optimize(inst: Instance, envelope: OracleEnvelope = OracleEnvelope(),
                         options: ModelOptions = ModelOptions(), audit: bool = True) -> Solution:
    """Maximum total amount of successful transactions, by exhaustive search."""
    envelope.check(inst)
    consts = derive_ilp_constants(inst)
    cons = _constructions(inst, consts)
    ev = _Evaluator(inst, consts, options)
    txs = inst.demand.transactions()

    edges: dict[str, list[tuple[str, str, str]]] = {}
    for (a, b), ok in sorted(consts.pc_exists.items()):
        if ok:
            edges.setdefault(a, []).append((a, b, PC))
    for a, b in sorted(cons):
        edges.setdefault(a, []).append((a, b, VC))
    for hops in edges.values():
        hops.sort(key=lambda h: (h[1], h[2]))

    def simple_paths(s: str, r: str) -> list[tuple[tuple[str, str, str], ...]]:
        out = []

        def walk(node, visited, path):
            if node == r:
                out.append(tuple(path))
                return
            if len(path) == envelope.max_path_len:
                return
            for hop in edges.get(node, []):
                if hop[1] not in visited:
                    walk(hop[1], visited | {hop[1]}, path + [hop])

        walk(s, {s}, [])
        return sorted(out, key=lambda p: (len(p), p))

    candidates = []
    for tx in txs:
        keep = []
        for path in simple_paths(tx.source, tx.receiver):
            fee = sum(ev.hop_fee(h, tx.receiver, tx.amount) for h in path)
            if fee > inst.budget or (ev.cap_fees and fee > tx.amount):
                continue
            if any(k == PC and consts.pcap[a, b] < tx.amount for a, b, k in path):
                continue
            keep.append((path, fee))
        candidates.append(keep)

    subsets = [s for size in range(len(txs), -1, -1) for s in combinations(range(len(txs)), size)]
    subsets.sort(key=lambda s: (-sum(txs[i].amount for i in s), s))

    for subset in subsets:
        sub_txs = [txs[i] for i in subset]
        for combo in product(*(candidates[i] for i in subset)):
            paths = [p for p, _ in combo]
            fees = [f for _, f in combo]
            if sum(fees) > inst.budget:
                continue
            load: dict[tuple[str, str], int] = {}
            overloaded = False
            for tx, path in zip(sub_txs, paths):
                for a, b, kind in path:
                    if kind == PC:
                        load[a, b] = load.get((a, b), 0) + tx.amount
                        overloaded |= load[a, b] > consts.pcap[a, b]
            if overloaded:
                continue
            top = effective_max_level(inst)
            needed = {(a, b): top for path in paths for a, b, kind in path if kind == VC}
            flow: dict[tuple[str, str], int] = {}
            for tx, path in zip(sub_txs, paths):
                for a, b, kind in path:
                    if kind == VC:
                        flow[a, b] = flow.get((a, b), 0) + tx.amount
            part = _Partial(flow, load, inst.budget - sum(fees))
            for chosen in _closures(needed, cons, {}, consts, part, ev.reserve):
                caps = ev.feasible(sub_txs, paths, chosen, fees)
                if caps is None:
                    continue
                sol = _make_solution(inst, txs, sub_txs, paths, fees, chosen, caps, consts)
                if audit:
                    _audit(inst, sol, options)
                return sol
    raise AssertionError("the empty selection is always feasible")


def _make_solution(inst, txs, sub_txs, paths, fees, chosen, caps, consts) -> Solution:
    sol = Solution(status=OPTIMAL)
    for (s, r) in inst.demand.entries:
        sol.routing_cost[s, r] = Fraction(0)
    for tx in txs:
        sol.success[tx.seq] = 0
    for tx, path, fee in zip(sub_txs, paths, fees):
        sol.success[tx.seq] = 1
        sol.paths[tx.seq] = list(path)
        sol.routing_cost[tx.source, tx.receiver] += fee
        sol.objective += tx.amount
    for pair, c in sorted(chosen.items(), key=lambda kv: (kv[1].level, kv[0])):
        sol.vcs.append(VcChoice(c.source, c.target, c.via, c.level, c.family, caps[pair]))
        sol.creation_cost += consts.vc_creation_cost[pair]
    return sol


def _audit(inst: Instance, sol: Solution, options: ModelOptions) -> None:
    from vpcn.milp.builder import build_model
    from vpcn.milp.solve import solution_values

    model = build_model(inst, options)
    bad = model.violations(solution_values(model, sol))
    if bad:
        raise AssertionError(f"oracle optimum violates ILP constraints: {bad[:5]}")

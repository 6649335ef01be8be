"""Solving placement models and reading solutions back in exact arithmetic."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Optional

import numpy as np

from vpcn.ingest import Instance
from vpcn.milp.bnb import BnbResult, SolverConfig, branch_and_bound
from vpcn.milp.builder import FAMILIES, ModelContext
from vpcn.milp.model import MilpModel, Number

OPTIMAL = "optimal"
LIMIT = "budget-limit-hit"
INFEASIBLE = "infeasible"

PC, VC = "pc", "vc"


class InconsistentRounding(Exception):
    pass


@dataclass(frozen=True)
class VcChoice:
    source: str
    target: str
    via: str
    level: int
    family: str          # PP for level 0, else PV, VP or VV
    capacity: int


Hop = tuple[str, str, str]   # (from, to, "pc" | "vc")


@dataclass
class Solution:
    status: str
    objective: int = 0
    success: dict[int, int] = field(default_factory=dict)
    paths: dict[int, list[Hop]] = field(default_factory=dict)
    vcs: list[VcChoice] = field(default_factory=list)
    creation_cost: int = 0
    routing_cost: dict[tuple[str, str], Fraction] = field(default_factory=dict)
    values: Optional[dict[int, Number]] = None
    nodes: int = 0

    @property
    def pc_usage(self) -> dict[tuple[int, str, str], int]:
        return {(seq, a, b): 1 for seq, hops in self.paths.items() for a, b, k in hops if k == PC}

    @property
    def vc_usage(self) -> dict[tuple[int, str, str], int]:
        return {(seq, a, b): 1 for seq, hops in self.paths.items() for a, b, k in hops if k == VC}

    def total_routing_cost(self) -> Fraction:
        return sum(self.routing_cost.values(), Fraction(0))

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "objective": self.objective,
            "creation_cost": self.creation_cost,
            "routing_cost": [{"source": s, "receiver": r, "cost": str(c)}
                             for (s, r), c in sorted(self.routing_cost.items())],
            "vcs": [{"source": v.source, "target": v.target, "via": v.via, "level": v.level,
                     "family": v.family, "capacity": v.capacity} for v in self.vcs],
            "transactions": [{"seq": seq, "success": ok, "path": [list(h) for h in self.paths.get(seq, [])]}
                             for seq, ok in sorted(self.success.items())],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Solution":
        return cls(
            status=doc["status"],
            objective=doc["objective"],
            success={t["seq"]: t["success"] for t in doc["transactions"]},
            paths={t["seq"]: [tuple(h) for h in t["path"]] for t in doc["transactions"] if t["path"]},
            vcs=[VcChoice(**v) for v in doc["vcs"]],
            creation_cost=doc["creation_cost"],
            routing_cost={(c["source"], c["receiver"]): Fraction(c["cost"]) for c in doc["routing_cost"]},
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# -- canonical exact assignment ---------------------------------------------

def _exist_kinds(M: int):
    yield "vc0", "cap0", 0, "PP"
    for q in range(1, M + 1):
        for fam in FAMILIES:
            yield "vc" + fam, "cap" + fam, q, fam


def _parent_pairs(fam: str, i: int, j: int, k: int) -> list[tuple[int, int]]:
    """Ordered pairs of the virtual parents of a vc i->j over k."""
    return {"PP": [], "PV": [(k, j)], "VP": [(i, k)], "VV": [(i, k), (k, j)]}[fam]


def _simple_path(edges: set[tuple[int, int, str]], s: int, r: int) -> Optional[list[tuple[int, int, str]]]:
    adj: dict[int, list[tuple[int, str]]] = {}
    for i, j, kind in sorted(edges):
        adj.setdefault(i, []).append((j, kind))
    prev: dict[int, tuple[int, str]] = {}
    seen = {s}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        if u == r:
            break
        for w, kind in adj.get(u, []):
            if w not in seen:
                seen.add(w)
                prev[w] = (u, kind)
                queue.append(w)
    if r not in seen:
        return None
    path = []
    node = r
    while node != s:
        u, kind = prev[node]
        path.append((u, node, kind))
        node = u
    return path[::-1]


def canonical_values(model: MilpModel, binaries: Mapping[int, int]) -> Optional[dict[int, Number]]:
    """Exact assignment from rounded binaries.

    Usage is trimmed to one simple path per successful transaction and every vc
    capacity is set to the least value its routed flow and children require.
    Returns ``None`` when the binaries do not describe a routable solution.
    """
    ctx: ModelContext = model.context
    n, M = len(ctx.nodes), ctx.max_level
    values: dict[int, Number] = {v.id: 0 for v in model.vars}
    for vid, val in binaries.items():
        values[vid] = val

    flow: dict[tuple[int, int], int] = {}
    for ref in ctx.transactions:
        key = (ref.s, ref.r, ref.t)
        x = model.var("x", *key)
        used = set()
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                for kind, name in ((PC, "pt"), (VC, "vt")):
                    vid = model.var(name, i, j, *key)
                    if values[vid]:
                        used.add((i, j, kind))
                        values[vid] = 0
        if not values[x]:
            continue
        path = _simple_path(used, ref.s, ref.r)
        if path is None:
            return None
        for i, j, kind in path:
            values[model.var("pt" if kind == PC else "vt", i, j, *key)] = 1
            if kind == VC:
                flow[i, j] = flow.get((i, j), 0) + ref.tx.amount

    existing: dict[tuple[int, int], tuple[str, str, int, str, int]] = {}
    for ekind, ckind, q, fam in _exist_kinds(M):
        for var in model.vars:
            if var.kind != ekind or not values[var.id]:
                continue
            i, j, k = var.index[-3:]
            if (i, j) in existing:
                return None
            existing[i, j] = (ekind, ckind, q, fam, k)

    for pair in flow:
        if pair not in existing:
            return None

    reserve = ctx.options.reserve_parent_vc_capacity
    need: dict[tuple[int, int], int] = {pair: flow.get(pair, 0) for pair in existing}
    # children carry strictly higher level labels than their parents
    for pair, (ekind, ckind, q, fam, k) in sorted(existing.items(), key=lambda kv: -kv[1][2]):
        cap = need[pair]
        idx = (*(() if q == 0 else (q,)), pair[0], pair[1], k)
        values[model.var(ckind, *idx)] = cap
        for parent in _parent_pairs(fam, pair[0], pair[1], k):
            if parent not in need:
                return None
            need[parent] = need[parent] + cap if reserve else max(need[parent], cap)
    return values


def _round_binaries(model: MilpModel, x, tol: float) -> Optional[dict[int, int]]:
    out = {}
    for var in model.vars:
        if var.binary:
            v = float(x[var.id])
            r = round(v)
            if abs(v - r) > tol or r not in (0, 1):
                return None
            out[var.id] = int(r)
    return out


def _solution_from_values(model: MilpModel, values: Mapping[int, Number], status: str) -> Solution:
    ctx: ModelContext = model.context
    names = ctx.nodes
    sol = Solution(status=status, values=dict(values))
    for ref in ctx.transactions:
        key = (ref.s, ref.r, ref.t)
        ok = int(values[model.var("x", *key)])
        sol.success[ref.tx.seq] = ok
        pair = (names[ref.s], names[ref.r])
        sol.routing_cost.setdefault(pair, Fraction(0))
        if not ok:
            continue
        edges = set()
        for (kind, i, j), fee in ctx.fees[key].items():
            if values[model.var(kind, i, j, *key)]:
                edges.add((i, j, PC if kind == "pt" else VC))
                sol.routing_cost[pair] += fee
        path = _simple_path(edges, ref.s, ref.r) or []
        sol.paths[ref.tx.seq] = [(names[i], names[j], kind) for i, j, kind in path]
        sol.objective += ref.tx.amount
    for ekind, ckind, q, fam in _exist_kinds(ctx.max_level):
        for var in model.vars:
            if var.kind == ekind and values[var.id]:
                i, j, k = var.index[-3:]
                cap = values[model.var(ckind, *var.index)]
                sol.vcs.append(VcChoice(names[i], names[j], names[k], q, fam, int(cap)))
                sol.creation_cost += ctx.constants.vc_creation_cost[names[i], names[j]]
    return sol


def extract_solution(model: MilpModel, lp_values, inst: Optional[Instance] = None,
                     integrality_tol: float = 1e-6) -> Solution:
    """Round, canonicalize and exactly re-check an LP point."""
    if isinstance(lp_values, Mapping):
        x = np.zeros(len(model.vars))
        for vid, v in lp_values.items():
            x[vid] = float(v)
    else:
        x = np.asarray(lp_values, dtype=float)
    binaries = _round_binaries(model, x, integrality_tol)
    if binaries is None:
        raise InconsistentRounding("binary variables are not integral within tolerance")
    values = canonical_values(model, binaries)
    if values is None:
        raise InconsistentRounding("binaries do not describe routable paths and channels")
    bad = model.violations(values)
    if bad:
        raise InconsistentRounding(f"exact re-check failed: {bad[:5]}")
    return _solution_from_values(model, values, OPTIMAL)


def solve(model: MilpModel, cfg: SolverConfig = SolverConfig()) -> Solution:
    """Optimal placement for a model produced by :func:`build_model`."""

    def repair(m: MilpModel, x) -> Optional[dict[int, Number]]:
        binaries = _round_binaries(m, x, cfg.integrality_tol)
        return None if binaries is None else canonical_values(m, binaries)

    # success first, then channel existence, then routing
    rank = {"x": 0, "vc0": 1, "vcPV": 1, "vcVP": 1, "vcVV": 1}
    priority = np.array([rank.get(v.kind, 2) for v in model.vars])
    result: BnbResult = branch_and_bound(model, cfg, repair, priority)
    if result.values is None:
        status = LIMIT if result.status == "limit" else INFEASIBLE
        return Solution(status=status, nodes=result.nodes)
    status = OPTIMAL if result.status == "optimal" else LIMIT
    sol = _solution_from_values(model, result.values, status)
    sol.nodes = result.nodes
    return sol


def solution_values(model: MilpModel, sol: Solution) -> dict[int, Number]:
    """Full variable assignment described by a :class:`Solution`."""
    ctx: ModelContext = model.context
    pos = {u: n for n, u in enumerate(ctx.nodes)}
    values: dict[int, Number] = {v.id: 0 for v in model.vars}
    by_seq = {ref.tx.seq: ref for ref in ctx.transactions}
    for seq, ok in sol.success.items():
        ref = by_seq[seq]
        key = (ref.s, ref.r, ref.t)
        values[model.var("x", *key)] = ok
        for a, b, kind in sol.paths.get(seq, []):
            values[model.var("pt" if kind == PC else "vt", pos[a], pos[b], *key)] = 1
    for vc in sol.vcs:
        idx = (pos[vc.source], pos[vc.target], pos[vc.via])
        if vc.level == 0:
            values[model.var("vc0", *idx)] = 1
            values[model.var("cap0", *idx)] = vc.capacity
        else:
            values[model.var("vc" + vc.family, vc.level, *idx)] = 1
            values[model.var("cap" + vc.family, vc.level, *idx)] = vc.capacity
    return values

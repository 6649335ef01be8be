"""Virtual channel placement ILP.

Variables use 0-based node indices.  ``t`` indexes a transaction within its
``(s, r)`` demand entry.  Kinds:

* ``pt(i,j,s,r,t)`` / ``vt(i,j,s,r,t)``: payment / virtual channel i->j carries transaction t
* ``x(s,r,t)``: transaction t succeeds
* ``vc0(i,j,k)``, ``cap0(i,j,k)``: level-0 channel i->j over k and its capacity
* ``vcPV/vcVP/vcVV(q,i,j,k)`` and ``capPV/capVP/capVV(q,i,j,k)`` for levels 1..M,
  built from (pc, vc), (vc, pc) or (vc, vc) parents meeting at k

Derived quantities (existence of any vc on a pair, its capacity, creation and
routing costs) are inlined as linear expressions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional

from vpcn.ingest import IlpConstants, Instance, Transaction, derive_ilp_constants
from vpcn.milp.model import EQ, LE, MilpModel

FAMILIES = ("PV", "VP", "VV")

TAG_DESCRIPTIONS = {
    "C1": "payment channel used only if it exists",
    "C2": "creation plus routing cost within budget",
    "C3a": "payment channel used only by successful transactions",
    "C3b": "virtual channel used only by successful transactions",
    "C3c": "successful transaction uses some channel",
    "C4": "flow conservation",
    "L0.i": "level-0 vc needs both payment channels",
    "L0.ii": "level-0 capacity bounded by payment channels",
    "L0.iii": "level-0 capacity zero unless the vc exists",
    "L0.iv": "at most one level-0 vc per pair",
    "Lm.pv.i": "(pc, vc) needs its parents",
    "Lm.pv.ii": "(pc, vc) capacity bounded by its parents",
    "Lm.pv.iii": "(pc, vc) capacity zero unless the vc exists",
    "Lm.vp.i": "(vc, pc) needs its parents",
    "Lm.vp.ii": "(vc, pc) capacity bounded by its parents",
    "Lm.vp.iii": "(vc, pc) capacity zero unless the vc exists",
    "Lm.vv.i": "(vc, vc) needs its parents",
    "Lm.vv.ii": "(vc, vc) capacity bounded by its parents",
    "Lm.vv.iii": "(vc, vc) capacity zero unless the vc exists",
    "Lm.close": "at most one vc per pair up to each level",
    "Ga": "at most one vc per pair over all levels",
    "Gb": "virtual channel used only if it exists",
    "Gd": "virtual channel capacity",
    "Ge": "payment channel capacity net of vc funding",
    "Fcap": "routing fees of a transaction do not exceed its amount",
}
TAGS = frozenset(TAG_DESCRIPTIONS)


class InstanceTooLarge(Exception):
    pass


@dataclass(frozen=True)
class ModelOptions:
    # Subtract capacity lent to child vcs in the vc capacity row, as is done for
    # payment channels; without it a vc's funds can be spent twice.
    reserve_parent_vc_capacity: bool = True
    # Keep every hop amount non-negative when fees are deducted from the payment.
    cap_fees_at_amount: bool = True
    max_vars: int = 200_000


@dataclass(frozen=True)
class TxRef:
    s: int
    r: int
    t: int
    tx: Transaction


@dataclass
class ModelContext:
    instance: Instance
    constants: IlpConstants
    nodes: tuple[str, ...]
    transactions: list[TxRef]
    max_level: int
    options: ModelOptions
    # per-transaction fee coefficients: (s, r, t) -> {(kind, i, j): fee}
    fees: dict = field(default_factory=dict)


def effective_max_level(inst: Instance) -> int:
    return max(0, min(inst.max_level, len(inst.nodes) - 2))


def expected_counts(n: int, M: int, T: int) -> dict[str, int]:
    """Closed-form variable counts of :func:`build_model`."""
    M = max(0, min(M, n - 2))
    triples = n * (n - 1) * (n - 2)
    return {
        "pt": T * n * (n - 1),
        "vt": T * n * (n - 1),
        "x": T,
        "vc0": triples,
        "vc_levels": 3 * M * triples,
        "cap": triples * (1 + 3 * M),
    }


def _transactions(inst: Instance, nodes: tuple[str, ...]) -> list[TxRef]:
    pos = {u: n for n, u in enumerate(nodes)}
    refs = []
    for (s, r), txs in sorted(inst.demand.entries.items(), key=lambda kv: (pos[kv[0][0]], pos[kv[0][1]])):
        for t, tx in enumerate(txs):
            refs.append(TxRef(pos[s], pos[r], t, tx))
    return refs


def build_model(inst: Instance, options: ModelOptions = ModelOptions()) -> MilpModel:
    nodes = inst.nodes
    n = len(nodes)
    M = effective_max_level(inst)
    consts = derive_ilp_constants(inst)
    txs = _transactions(inst, nodes)
    counts = expected_counts(n, M, len(txs))
    total = counts["pt"] + counts["vt"] + counts["x"] + counts["vc0"] + counts["vc_levels"] + counts["cap"]
    if total > options.max_vars:
        raise InstanceTooLarge(f"model would have {total} variables (limit {options.max_vars})")

    m = MilpModel()
    ctx = ModelContext(inst, consts, nodes, txs, M, options)
    m.context = ctx
    pairs = list(permutations(range(n), 2))
    triples = [(i, j, k) for i, j in pairs for k in range(n) if k not in (i, j)]
    pcx = {(i, j): consts.pc_exists[nodes[i], nodes[j]] for i, j in pairs}
    pcap = {(i, j): consts.pcap[nodes[i], nodes[j]] for i, j in pairs}
    max_cap = consts.max_cap

    # -- variables -------------------------------------------------------
    for ref in txs:
        key = (ref.s, ref.r, ref.t)
        for i, j in pairs:
            m.add_var("pt", (i, j, *key), binary=True)
        for i, j in pairs:
            m.add_var("vt", (i, j, *key), binary=True)
    for ref in txs:
        m.add_var("x", (ref.s, ref.r, ref.t), binary=True)
    for i, j, k in triples:
        m.add_var("vc0", (i, j, k), binary=True)
    for i, j, k in triples:
        m.add_var("cap0", (i, j, k), ub=max_cap)
    for q in range(1, M + 1):
        for fam in FAMILIES:
            for i, j, k in triples:
                m.add_var("vc" + fam, (q, i, j, k), binary=True)
        for fam in FAMILIES:
            for i, j, k in triples:
                m.add_var("cap" + fam, (q, i, j, k), ub=max_cap)

    def exist_upto(i: int, j: int, q: int) -> list[int]:
        """Existence binaries of vc i->j at levels 0..q (all intermediaries)."""
        out = [m.var("vc0", i, j, k) for k in range(n) if k not in (i, j)]
        for lvl in range(1, q + 1):
            for fam in FAMILIES:
                out.extend(m.var("vc" + fam, lvl, i, j, k) for k in range(n) if k not in (i, j))
        return out

    def cap_upto(i: int, j: int, q: int) -> list[int]:
        out = [m.var("cap0", i, j, k) for k in range(n) if k not in (i, j)]
        for lvl in range(1, q + 1):
            for fam in FAMILIES:
                out.extend(m.var("cap" + fam, lvl, i, j, k) for k in range(n) if k not in (i, j))
        return out

    # -- objective -------------------------------------------------------
    m.set_objective((ref.tx.amount, m.var("x", ref.s, ref.r, ref.t)) for ref in txs)

    # -- (1) ---------------------------------------------------------------
    for ref in txs:
        for i, j in pairs:
            m.add_constraint([(1, m.var("pt", i, j, ref.s, ref.r, ref.t))], LE, pcx[i, j], "C1")

    # -- (2) with creation cost inlined ------------------------------------
    budget_terms = []
    for i, j in pairs:
        cost = consts.vc_creation_cost[nodes[i], nodes[j]]
        if cost:
            budget_terms.extend((cost, v) for v in exist_upto(i, j, M))
    for ref in txs:
        r_name = nodes[ref.r]
        amount = ref.tx.amount
        fees = {}
        for i, j in pairs:
            fees["pt", i, j] = consts.pc_fee(nodes[i], nodes[j], r_name, amount)
            fees["vt", i, j] = consts.vc_fee(nodes[i], nodes[j], r_name, amount)
        ctx.fees[ref.s, ref.r, ref.t] = fees
        for (kind, i, j), fee in fees.items():
            if fee:
                budget_terms.append((fee, m.var(kind, i, j, ref.s, ref.r, ref.t)))
    m.add_constraint(budget_terms, LE, inst.budget, "C2")

    # -- (3), (4) ----------------------------------------------------------
    for ref in txs:
        key = (ref.s, ref.r, ref.t)
        x = m.var("x", *key)
        usage = []
        for i, j in pairs:
            pt, vt = m.var("pt", i, j, *key), m.var("vt", i, j, *key)
            m.add_constraint([(1, pt), (-1, x)], LE, 0, "C3a")
            m.add_constraint([(1, vt), (-1, x)], LE, 0, "C3b")
            usage += [(-1, pt), (-1, vt)]
        m.add_constraint([(1, x), *usage], LE, 0, "C3c")
        for i in range(n):
            terms = []
            for j in range(n):
                if j == i:
                    continue
                terms += [(1, m.var("pt", i, j, *key)), (1, m.var("vt", i, j, *key)),
                          (-1, m.var("pt", j, i, *key)), (-1, m.var("vt", j, i, *key))]
            if i == ref.s:
                terms.append((-1, x))
            elif i == ref.r:
                terms.append((1, x))
            m.add_constraint(terms, EQ, 0, "C4")
        if options.cap_fees_at_amount:
            fee_terms = [(fee, m.var(kind, i, j, *key))
                         for (kind, i, j), fee in ctx.fees[key].items() if fee]
            m.add_constraint([*fee_terms, (-ref.tx.amount, x)], LE, 0, "Fcap")

    # -- (L0) ---------------------------------------------------------------
    for i, j, k in triples:
        vc, cap = m.var("vc0", i, j, k), m.var("cap0", i, j, k)
        m.add_constraint([(2, vc)], LE, pcx[i, k] + pcx[k, j], "L0.i")
        m.add_constraint([(1, cap)], LE, pcap[i, k], "L0.ii")
        m.add_constraint([(1, cap)], LE, pcap[k, j], "L0.ii")
        m.add_constraint([(1, cap), (-max_cap, vc)], LE, 0, "L0.iii")
    if triples:
        for i, j in pairs:
            m.add_constraint([(1, m.var("vc0", i, j, k)) for k in range(n) if k not in (i, j)],
                             LE, 1, "L0.iv")

    # -- (Lq) for q = 1..M --------------------------------------------------
    for q in range(1, M + 1):
        for i, j, k in triples:
            # (pc i->k, vc k->j)
            vc, cap = m.var("vcPV", q, i, j, k), m.var("capPV", q, i, j, k)
            m.add_constraint([(2, vc)] + [(-1, v) for v in exist_upto(k, j, q - 1)], LE, pcx[i, k], "Lm.pv.i")
            m.add_constraint([(1, cap)], LE, pcap[i, k], "Lm.pv.ii")
            m.add_constraint([(1, cap)] + [(-1, v) for v in cap_upto(k, j, q - 1)], LE, 0, "Lm.pv.ii")
            m.add_constraint([(1, cap), (-max_cap, vc)], LE, 0, "Lm.pv.iii")
            # (vc i->k, pc k->j)
            vc, cap = m.var("vcVP", q, i, j, k), m.var("capVP", q, i, j, k)
            m.add_constraint([(2, vc)] + [(-1, v) for v in exist_upto(i, k, q - 1)], LE, pcx[k, j], "Lm.vp.i")
            m.add_constraint([(1, cap)] + [(-1, v) for v in cap_upto(i, k, q - 1)], LE, 0, "Lm.vp.ii")
            m.add_constraint([(1, cap)], LE, pcap[k, j], "Lm.vp.ii")
            m.add_constraint([(1, cap), (-max_cap, vc)], LE, 0, "Lm.vp.iii")
            # (vc i->k, vc k->j)
            vc, cap = m.var("vcVV", q, i, j, k), m.var("capVV", q, i, j, k)
            m.add_constraint([(2, vc)] + [(-1, v) for v in exist_upto(i, k, q - 1) + exist_upto(k, j, q - 1)],
                             LE, 0, "Lm.vv.i")
            m.add_constraint([(1, cap)] + [(-1, v) for v in cap_upto(i, k, q - 1)], LE, 0, "Lm.vv.ii")
            m.add_constraint([(1, cap)] + [(-1, v) for v in cap_upto(k, j, q - 1)], LE, 0, "Lm.vv.ii")
            m.add_constraint([(1, cap), (-max_cap, vc)], LE, 0, "Lm.vv.iii")
        for i, j in pairs:
            m.add_constraint([(1, v) for v in exist_upto(i, j, q)], LE, 1, "Lm.close")

    # -- global (a), (b), (d), (e) ------------------------------------------
    if triples:
        for i, j in pairs:
            m.add_constraint([(1, v) for v in exist_upto(i, j, M)], LE, 1, "Ga")
    for ref in txs:
        for i, j in pairs:
            vexist = exist_upto(i, j, M) if triples else []
            m.add_constraint([(1, m.var("vt", i, j, ref.s, ref.r, ref.t))] + [(-1, v) for v in vexist],
                             LE, 0, "Gb")
    for i, j in pairs:
        terms = [(ref.tx.amount, m.var("vt", i, j, ref.s, ref.r, ref.t)) for ref in txs]
        if triples:
            terms += [(-1, v) for v in cap_upto(i, j, M)]
            if options.reserve_parent_vc_capacity:
                terms += [(1, v) for v in _child_caps(m, n, i, j, M)]
        m.add_constraint(terms, LE, 0, "Gd")
    for i, j in pairs:
        terms = [(ref.tx.amount, m.var("pt", i, j, ref.s, ref.r, ref.t)) for ref in txs]
        for k in range(n):
            if k in (i, j):
                continue
            terms += [(1, m.var("cap0", i, k, j)), (1, m.var("cap0", k, j, i))]
            for q in range(1, M + 1):
                terms += [(1, m.var("capPV", q, i, k, j)), (1, m.var("capVP", q, k, j, i))]
        m.add_constraint(terms, LE, pcap[i, j], "Ge")
    return m


def _child_caps(m: MilpModel, n: int, i: int, j: int, M: int) -> list[int]:
    """Capacities of vcs that use vc i->j as a parent."""
    out = []
    for q in range(1, M + 1):
        for a in range(n):
            if a in (i, j):
                continue
            # a->j over i: (pc a->i, vc i->j) or (vc a->i, vc i->j)
            out += [m.var("capPV", q, a, j, i), m.var("capVV", q, a, j, i)]
            # i->a over j: (vc i->j, pc j->a) or (vc i->j, vc j->a)
            out += [m.var("capVP", q, i, a, j), m.var("capVV", q, i, a, j)]
    return out


# -- structural validation ------------------------------------------------------

def required_tags(m: MilpModel) -> set[str]:
    ctx: ModelContext = m.context
    n = len(ctx.nodes)
    tags = {"C2", "Ge", "Gd"}
    if ctx.transactions:
        tags |= {"C1", "C3a", "C3b", "C3c", "C4", "Gb"}
        if ctx.options.cap_fees_at_amount:
            tags.add("Fcap")
    if n >= 3:
        tags |= {"L0.i", "L0.ii", "L0.iii", "L0.iv", "Ga"}
    if ctx.max_level >= 1:
        tags |= {f"Lm.{f}.{r}" for f in ("pv", "vp", "vv") for r in ("i", "ii", "iii")} | {"Lm.close"}
    return tags


def validate_model(m: MilpModel) -> list[str]:
    """Structural problems of a placement model; an empty list means valid."""
    problems: list[str] = []
    nvars = len(m.vars)
    for pos, var in enumerate(m.vars):
        if var.id != pos:
            problems.append(f"variable {var.name} has id {var.id} at position {pos}")
        if m.symbol_index.get((var.kind, *var.index)) != var.id:
            problems.append(f"variable {var.name} missing from symbol index")
    for con in m.constraints:
        if con.tag not in TAGS:
            problems.append(f"{con.name}: unknown tag {con.tag!r}")
        seen = set()
        for _, vid in con.terms:
            if not 0 <= vid < nvars:
                problems.append(f"{con.name}: references undeclared variable {vid}")
            if vid in seen:
                problems.append(f"{con.name}: duplicate term for variable {vid}")
            seen.add(vid)
    for _, vid in m.objective:
        if not 0 <= vid < nvars:
            problems.append(f"objective references undeclared variable {vid}")
        elif m.vars[vid].kind != "x":
            problems.append(f"objective references non-success variable {m.vars[vid].name}")
    ctx: Optional[ModelContext] = m.context
    if ctx is None:
        return problems

    n, M = len(ctx.nodes), ctx.max_level
    for var in m.vars:
        idx = var.index
        if var.kind in ("pt", "vt"):
            i, j, s, r, _ = idx
            ok = i != j and s != r and max(i, j, s, r) < n
        elif var.kind == "x":
            ok = idx[0] != idx[1] and max(idx[:2]) < n
        elif var.kind in ("vc0", "cap0"):
            i, j, k = idx
            ok = len({i, j, k}) == 3 and max(idx) < n
        else:
            q, i, j, k = idx
            ok = 1 <= q <= M and len({i, j, k}) == 3 and max(i, j, k) < n
        if not ok:
            problems.append(f"variable {var.name} has out-of-range indices")

    present = m.tags()
    for tag in sorted(required_tags(m) - present):
        problems.append(f"constraint family {tag} missing")

    by_tag: dict[str, list] = {}
    for con in m.constraints:
        by_tag.setdefault(con.tag, []).append(con)

    def single_var_rows(tag: str) -> set[int]:
        return {con.terms[0][1] for con in by_tag.get(tag, []) if len(con.terms) == 1}

    # every pt on a missing payment channel must be pinned by (1)
    pinned = single_var_rows("C1")
    for var in m.vars:
        if var.kind == "pt":
            i, j = var.index[:2]
            if ctx.constants.pc_exists[ctx.nodes[i], ctx.nodes[j]] == 0 and var.id not in pinned:
                problems.append(f"{var.name} uses a missing payment channel without a C1 row")

    # one flow-conservation row per (node, transaction)
    flow_rows: dict[tuple, int] = {}
    for con in by_tag.get("C4", []):
        # the row's node is the tail of its positively signed arcs
        for coef, vid in con.terms:
            if not 0 <= vid < nvars:
                continue
            var = m.vars[vid]
            if var.kind in ("pt", "vt") and coef > 0:
                key = (var.index[0], *var.index[2:])
                flow_rows[key] = flow_rows.get(key, 0) + 1
                break
    for ref in ctx.transactions:
        for i in range(n):
            if flow_rows.get((i, ref.s, ref.r, ref.t), 0) != 1:
                problems.append(f"flow conservation for node {i}, transaction {(ref.s, ref.r, ref.t)} "
                                f"appears {flow_rows.get((i, ref.s, ref.r, ref.t), 0)} times")

    # creation costs must be charged in the budget row
    budget_rows = by_tag.get("C2", [])
    if budget_rows:
        charged = {vid for con in budget_rows for _, vid in con.terms}
        for var in m.vars:
            if var.kind.startswith("vc") and var.binary:
                i, j = var.index[-3], var.index[-2]
                if ctx.constants.vc_creation_cost[ctx.nodes[i], ctx.nodes[j]] and var.id not in charged:
                    problems.append(f"creation cost of {var.name} not charged in C2")
    return problems

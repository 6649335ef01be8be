"""Best-bound branch-and-bound over the simplex relaxation.

Open nodes are kept in a heap ordered by their parent's LP bound; ties go to
the deepest and then the most recently created node, so equal-bound stretches
are searched depth first with the up branch ahead of the down branch.

Each node tightens variable bounds by activity-based propagation, drops fixed
columns and redundant rows, and solves the remaining LP.  Integral LP points
are turned into exact candidates by a caller-supplied ``repair`` function and
only accepted after exact re-evaluation against every constraint.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Literal, Mapping, Optional

import numpy as np

from vpcn.milp.model import MilpModel, Number
from vpcn.milp.simplex import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, IterationLimit, simplex

log = logging.getLogger(__name__)


class ResourceLimit(Exception):
    pass


@dataclass(frozen=True)
class SolverConfig:
    feasibility_tol: float = 1e-6
    integrality_tol: float = 1e-6
    node_limit: int = 1_000_000
    time_limit_ms: int = 600_000
    branching: Literal["most-fractional", "first-fractional"] = "most-fractional"
    threads: int = 1
    check_bounds: bool = False

    def __post_init__(self):
        if self.feasibility_tol <= 0 or self.integrality_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.node_limit <= 0 or self.time_limit_ms <= 0 or self.threads <= 0:
            raise ValueError("limits must be positive")
        if self.branching not in ("most-fractional", "first-fractional"):
            raise ValueError(f"unknown branching rule {self.branching!r}")


@dataclass
class BnbResult:
    status: str                                  # optimal | infeasible | limit
    objective: Optional[Number] = None
    values: Optional[dict[int, Number]] = None
    nodes: int = 0
    root_bound: float = float("nan")
    rejected: int = 0


@dataclass
class _Rows:
    """All constraints as ``A x <= b`` (equalities appear twice), as nonzero triples."""
    b: np.ndarray
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray
    starts: np.ndarray      # nonzeros are sorted by column; group starts per column
    cols: np.ndarray        # column of each group


def _rows(model: MilpModel) -> _Rows:
    dm = model.arrays()
    A = np.vstack([dm.A, -dm.A[dm.is_eq]])
    b = np.concatenate([dm.b, -dm.b[dm.is_eq]])
    col, row = np.nonzero(A.T)
    val = A[row, col]
    cols, starts = np.unique(col, return_index=True)
    return _Rows(b, row, col, val, starts, cols)


def propagate(rows: _Rows, lb: np.ndarray, ub: np.ndarray, integer: np.ndarray,
              tol: float = 1e-9, passes: int = 25) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Implied bounds from row activities; ``None`` if the box is infeasible."""
    lb, ub = lb.copy(), ub.copy()
    m = len(rows.b)
    row, col, val = rows.row, rows.col, rows.val
    pos = val > 0
    for _ in range(passes):
        inf_ub = np.isinf(ub)
        ub_f = np.where(inf_ub, 0.0, ub)
        unbounded = np.bincount(row, weights=(~pos & inf_ub[col]), minlength=m)
        minact = np.bincount(row, weights=np.where(pos, val * lb[col], val * ub_f[col]), minlength=m)
        slack = rows.b - minact
        usable = unbounded == 0
        if np.any(usable & (slack < -tol * (1.0 + np.abs(rows.b)))):
            return None
        if not usable.any():
            break
        q = slack[row] / val
        ok = usable[row]
        cand_u = np.where(ok & pos, lb[col] + q, np.inf)
        cand_l = np.where(ok & ~pos, ub_f[col] + q, -np.inf)
        new_ub, new_lb = ub.copy(), lb.copy()
        new_ub[rows.cols] = np.minimum(ub[rows.cols], np.minimum.reduceat(cand_u, rows.starts))
        new_lb[rows.cols] = np.maximum(lb[rows.cols], np.maximum.reduceat(cand_l, rows.starts))
        new_ub = np.where(integer, np.floor(new_ub + 1e-6), new_ub)
        new_lb = np.where(integer, np.ceil(new_lb - 1e-6), new_lb)
        new_ub = np.minimum(ub, new_ub)
        new_lb = np.maximum(lb, new_lb)
        if np.any(new_lb > new_ub + tol):
            return None
        new_lb = np.minimum(new_lb, new_ub)
        changed = (np.abs(new_ub - np.where(np.isinf(ub), new_ub, ub)) > 1e-7).any() or \
            (np.isinf(ub) & np.isfinite(new_ub)).any() or (np.abs(new_lb - lb) > 1e-7).any()
        lb, ub = new_lb, new_ub
        if not changed:
            break
    return lb, ub


def solve_node(model: MilpModel, rows: _Rows, lb: np.ndarray, ub: np.ndarray,
               tol: float = 1e-9) -> tuple[str, float, Optional[np.ndarray], np.ndarray, np.ndarray]:
    """Propagate, reduce and solve the relaxation within ``[lb, ub]``."""
    dm = model.arrays()
    box = propagate(rows, lb, ub, dm.integer)
    if box is None:
        return INFEASIBLE, -math.inf, None, lb, ub
    lb, ub = box
    free = ub - lb > 1e-9
    x = lb.copy()
    A = dm.A
    rhs = dm.b - A[:, ~free] @ lb[~free]
    Af = A[:, free]
    if not free.any():
        ok_le = np.all(rhs[~dm.is_eq] >= -1e-7)
        ok_eq = np.all(np.abs(rhs[dm.is_eq]) <= 1e-7)
        if ok_le and ok_eq:
            return OPTIMAL, float(dm.c @ x), x, lb, ub
        return INFEASIBLE, -math.inf, None, lb, ub
    maxact = np.maximum(Af, 0.0) @ ub[free] + np.minimum(Af, 0.0) @ lb[free]
    empty = ~(Af != 0).any(axis=1)
    if np.any(empty & ~dm.is_eq & (rhs < -1e-7)) or np.any(empty & dm.is_eq & (np.abs(rhs) > 1e-7)):
        return INFEASIBLE, -math.inf, None, lb, ub
    keep = ~empty & (dm.is_eq | (maxact > rhs + 1e-9))
    out = simplex(Af[keep], rhs[keep], dm.is_eq[keep], dm.c[free], lb[free], ub[free], tol)
    if out.status == ITERATION_LIMIT:
        raise IterationLimit(f"node LP hit the pivot limit after {out.iterations} pivots")
    if out.status != OPTIMAL:
        return out.status, -math.inf, None, lb, ub
    x[free] = out.x
    return OPTIMAL, float(dm.c @ x), x, lb, ub


def _default_repair(model: MilpModel, x: np.ndarray) -> dict[int, Number]:
    values: dict[int, Number] = {}
    for var in model.vars:
        if var.binary:
            values[var.id] = int(round(x[var.id]))
        else:
            f = Fraction(float(x[var.id])).limit_denominator(10**9)
            values[var.id] = f.numerator if f.denominator == 1 else f
    return values


def _integral_objective(model: MilpModel) -> bool:
    return all(model.vars[v].binary and Fraction(c).denominator == 1 for c, v in model.objective)


@dataclass
class _Search:
    model: MilpModel
    cfg: SolverConfig
    repair: Optional[Callable[[MilpModel, np.ndarray], Optional[dict[int, Number]]]]
    rows: _Rows = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    heap: list = field(default_factory=list)
    counter: itertools.count = field(default_factory=itertools.count)
    busy: int = 0
    nodes: int = 0
    rejected: int = 0
    incumbent: Optional[dict[int, Number]] = None
    incumbent_obj: Optional[Number] = None
    limit_hit: bool = False
    deadline: float = 0.0
    integral_obj: bool = False
    priority: Optional[np.ndarray] = None

    def offer(self, x: np.ndarray) -> None:
        if self.repair is None:
            values = _default_repair(self.model, x)
            ok = not self.model.violations(values, self.cfg.feasibility_tol)
        else:
            values = self.repair(self.model, x)
            ok = values is not None and not self.model.violations(values)
        if not ok:
            self.rejected += 1
            log.debug("integral LP point rejected by exact check")
            return
        obj = self.model.objective_value(values)
        with self.lock:
            if self.incumbent_obj is None or obj > self.incumbent_obj:
                self.incumbent, self.incumbent_obj = values, obj

    def pruned(self, bound: float) -> bool:
        inc = self.incumbent_obj
        if inc is None or not math.isfinite(bound):
            return False
        if self.integral_obj:
            return math.floor(bound + 1e-6) <= inc
        return bound <= float(inc) + 1e-9

    def branch_var(self, x: np.ndarray) -> Optional[int]:
        integer = self.model.arrays().integer
        frac = np.abs(x - np.round(x))
        cand = integer & (frac > self.cfg.integrality_tol)
        if not cand.any():
            return None
        if self.priority is not None:
            cand &= self.priority == self.priority[cand].min()
        if self.cfg.branching == "first-fractional":
            return int(np.flatnonzero(cand)[0])
        score = np.where(cand, frac, -1.0)
        return int(np.argmax(score))

    def push(self, node) -> None:
        """Add an open node; the caller holds the lock."""
        lb, ub, bound, depth = node
        key = math.floor(bound + 1e-6) if self.integral_obj and math.isfinite(bound) else bound
        heapq.heappush(self.heap, (-key, -depth, -next(self.counter), node))

    def process(self, node) -> list:
        lb, ub, parent_bound, depth = node
        status, bound, x, lb, ub = solve_node(self.model, self.rows, lb, ub)
        if status == UNBOUNDED:
            raise ResourceLimit("LP relaxation is unbounded")
        if status != OPTIMAL:
            return []
        if bound > parent_bound + 1e-6 * (1 + abs(parent_bound)):
            msg = f"child bound {bound} exceeds parent bound {parent_bound}"
            if self.cfg.check_bounds:
                raise AssertionError(msg)
            log.warning(msg)
        if self.pruned(bound):
            return []
        j = self.branch_var(x)
        if j is None:
            self.offer(x)
            return []
        down_ub = ub.copy()
        down_ub[j] = math.floor(x[j])
        up_lb = lb.copy()
        up_lb[j] = math.ceil(x[j])
        # pushed last, so among equal bounds the up branch is explored first
        return [(lb, down_ub, bound, depth + 1), (up_lb, ub, bound, depth + 1)]

    def worker(self) -> None:
        while True:
            with self.lock:
                if self.limit_hit:
                    return
                if not self.heap:
                    if self.busy == 0:
                        return
                    node = None
                else:
                    node = heapq.heappop(self.heap)[-1]
                    if self.pruned(node[2]):
                        continue
                    self.busy += 1
                    self.nodes += 1
                    if self.nodes > self.cfg.node_limit or time.monotonic() > self.deadline:
                        self.limit_hit = True
                        self.busy -= 1
                        return
            if node is None:
                time.sleep(0.0005)
                continue
            try:
                children = self.process(node)
            finally:
                with self.lock:
                    self.busy -= 1
            with self.lock:
                for child in children:
                    self.push(child)


def branch_and_bound(model: MilpModel, cfg: SolverConfig = SolverConfig(),
                     repair: Optional[Callable] = None,
                     priority: Optional[np.ndarray] = None) -> BnbResult:
    """Maximize ``model``; deterministic for ``threads == 1``.

    ``priority`` ranks variables for branching: only fractional variables of
    the lowest rank present are considered, then ``cfg.branching`` decides.
    """
    dm = model.arrays()
    search = _Search(model, cfg, repair)
    search.rows = _rows(model)
    search.integral_obj = _integral_objective(model)
    search.priority = None if priority is None else np.asarray(priority)
    search.deadline = time.monotonic() + cfg.time_limit_ms / 1000.0
    search.push((dm.lb.copy(), dm.ub.copy(), math.inf, 0))

    if cfg.threads == 1:
        search.worker()
    else:
        with ThreadPoolExecutor(cfg.threads) as pool:
            for fut in [pool.submit(search.worker) for _ in range(cfg.threads)]:
                fut.result()

    if search.limit_hit:
        status = "limit"
    elif search.incumbent is None:
        status = "infeasible"
    else:
        status = "optimal"
    return BnbResult(status, search.incumbent_obj, search.incumbent, search.nodes, rejected=search.rejected)

"""Dense two-phase primal simplex for bounded variables.

Nonbasic variables sit at either bound, so variable upper bounds never become
rows.  Dantzig pricing is used until a run of degenerate pivots suggests
cycling, then Bland's rule takes over until the objective moves again.
Pivot elements below ``PIVOT_TOL`` are refused, and the tableau is rebuilt
from the original rows every ``REFACTOR_EVERY`` pivots so rounding error
cannot pile up.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from vpcn.milp.model import MilpModel

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

PIVOT_TOL = 1e-7
REFACTOR_EVERY = 64


class IterationLimit(Exception):
    pass


@dataclass
class LpOutcome:
    status: str
    objective: float = float("nan")
    x: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def values(self) -> dict[int, float]:
        return {} if self.x is None else {i: float(v) for i, v in enumerate(self.x)}


@dataclass
class _Tableau:
    T: np.ndarray             # B^-1 [A | slacks | artificials]
    beta: np.ndarray          # basic variable values
    basis: np.ndarray         # column index basic in each row
    at_upper: np.ndarray      # nonbasic columns resting at their upper bound
    upper: np.ndarray         # column upper bounds (lower bounds are 0)
    allowed: np.ndarray       # columns that may enter
    T0: np.ndarray = None     # starting tableau, for refactoring
    b0: np.ndarray = None
    rows: np.ndarray = None   # rows of T0 still in the problem
    iterations: int = 0
    since_refactor: int = 0
    degenerate_run: int = 0
    bland: bool = field(default=False)


def _refactor(tab: _Tableau) -> None:
    """Recompute ``T`` and ``beta`` from the starting tableau and the basis."""
    T0 = tab.T0[tab.rows]
    B = T0[:, tab.basis]
    flipped = tab.at_upper.copy()
    flipped[tab.basis] = False
    rhs = tab.b0[tab.rows] - T0[:, flipped] @ tab.upper[flipped]
    try:
        sol = np.linalg.solve(B, np.column_stack([T0, rhs]))
    except np.linalg.LinAlgError:
        return
    if not np.all(np.isfinite(sol)):
        return
    tab.T, tab.beta = sol[:, :-1], sol[:, -1]


def _iterate(tab: _Tableau, cost: np.ndarray, tol: float, max_iter: int) -> str:
    """Minimize ``cost`` from the current basis; returns a status string."""
    upper = tab.upper
    T = tab.T
    d = cost - cost[tab.basis] @ T
    while True:
        if tab.iterations >= max_iter:
            return ITERATION_LIMIT
        if tab.T0 is not None and tab.since_refactor >= REFACTOR_EVERY:
            _refactor(tab)
            T = tab.T
            d = cost - cost[tab.basis] @ T
            tab.since_refactor = 0
        basic_mask = np.zeros(T.shape[1], dtype=bool)
        basic_mask[tab.basis] = True
        movable = tab.allowed & ~basic_mask & (upper > tol)
        gain = np.where(tab.at_upper, d, -d)
        eligible = movable & (gain > tol)
        if not eligible.any():
            return OPTIMAL
        if tab.bland:
            j = int(np.flatnonzero(eligible)[0])
        else:
            j = int(np.argmax(np.where(eligible, gain, -np.inf)))

        direction = -1.0 if tab.at_upper[j] else 1.0
        col = direction * T[:, j]
        ub_b = upper[tab.basis]
        ratios = np.full(len(col), np.inf)
        dec = col > PIVOT_TOL
        ratios[dec] = tab.beta[dec] / col[dec]
        inc = (col < -PIVOT_TOL) & np.isfinite(ub_b)
        ratios[inc] = (ub_b[inc] - tab.beta[inc]) / -col[inc]
        ratios = np.maximum(ratios, 0.0)
        step = ratios.min() if len(ratios) else np.inf
        own = upper[j]
        if not np.isfinite(step) and not np.isfinite(own):
            return UNBOUNDED

        tab.iterations += 1
        if own <= step:
            # bound flip, no basis change
            tab.beta -= own * col
            tab.at_upper[j] = not tab.at_upper[j]
            tab.degenerate_run = 0
            tab.bland = False
            continue

        ties = np.flatnonzero(ratios <= step + tol)
        if tab.bland:
            p = int(ties[np.argmin(tab.basis[ties])])
        else:
            p = int(ties[np.argmax(np.abs(col[ties]))])
        leaving = tab.basis[p]
        hits_upper = bool(col[p] < 0)
        entering_value = step if direction > 0 else upper[j] - step

        tab.since_refactor += 1
        tab.beta -= step * col
        pivot_row = T[p] / T[p, j]
        colj = T[:, j].copy()
        colj[p] = 0.0
        rows = np.flatnonzero(colj)
        T[rows] -= np.outer(colj[rows], pivot_row)
        T[p] = pivot_row
        d -= d[j] * pivot_row
        tab.basis[p] = j
        tab.beta[p] = entering_value
        tab.at_upper[j] = False
        tab.at_upper[leaving] = hits_upper

        if step <= tol:
            tab.degenerate_run += 1
            if tab.degenerate_run > 50:
                tab.bland = True
        else:
            tab.degenerate_run = 0
            tab.bland = False


def _redundant_rows(Y: np.ndarray, art_rows: np.ndarray) -> list[int]:
    """Original rows to drop for tableau rows that vanished in phase one.

    Row ``i`` of ``Y`` holds the artificial-column entries of a vanished
    tableau row, i.e. the weights of a linear dependency among the original
    rows.  Elimination picks one distinct row per dependency.
    """
    Y = Y.copy()
    picked: list[int] = []
    for i in range(len(Y)):
        weights = np.abs(Y[i])
        weights[picked] = 0.0
        c = int(np.argmax(weights))
        picked.append(c)
        Y[i + 1:] -= np.outer(Y[i + 1:, c] / Y[i, c], Y[i])
    return sorted(int(art_rows[c]) for c in picked)


def simplex(A: np.ndarray, b: np.ndarray, is_eq: np.ndarray, c: np.ndarray,
            lb: np.ndarray, ub: np.ndarray, tol: float = 1e-9,
            max_iter: Optional[int] = None) -> LpOutcome:
    """Maximize ``c @ x`` s.t. ``A x <= b`` (``==`` where ``is_eq``), ``lb <= x <= ub``.

    Lower bounds must be finite.
    """
    m, n = A.shape
    if not np.all(np.isfinite(lb)):
        raise ValueError("simplex requires finite lower bounds")
    u = ub - lb
    if np.any(u < -tol):
        return LpOutcome(INFEASIBLE)
    u = np.maximum(u, 0.0)
    rhs = b - A @ lb

    le_rows = np.flatnonzero(~is_eq)
    n_slack = len(le_rows)
    sign = np.where(rhs < 0, -1.0, 1.0)
    needs_art = is_eq | (rhs < 0)
    art_rows = np.flatnonzero(needs_art)
    n_art = len(art_rows)
    N = n + n_slack + n_art

    T = np.zeros((m, N))
    T[:, :n] = A * sign[:, None]
    T[le_rows, n + np.arange(n_slack)] = sign[le_rows]
    T[art_rows, n + n_slack + np.arange(n_art)] = 1.0
    beta = rhs * sign

    basis = np.empty(m, dtype=int)
    slack_of_row = {r: n + s for s, r in enumerate(le_rows)}
    art_of_row = {r: n + n_slack + a for a, r in enumerate(art_rows)}
    for r in range(m):
        basis[r] = art_of_row[r] if needs_art[r] else slack_of_row[r]

    upper = np.concatenate([u, np.full(n_slack, np.inf), np.full(n_art, np.inf)])
    allowed = np.ones(N, dtype=bool)
    tab = _Tableau(T, beta, basis, np.zeros(N, dtype=bool), upper, allowed,
                   T0=T.copy(), b0=beta.copy(), rows=np.arange(m))
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000

    if n_art:
        cost1 = np.zeros(N)
        cost1[n + n_slack:] = 1.0
        status = _iterate(tab, cost1, tol, max_iter)
        if status == ITERATION_LIMIT:
            return LpOutcome(ITERATION_LIMIT, iterations=tab.iterations)
        if tab.beta[tab.basis >= n + n_slack].sum() > 1e-7 * max(1.0, np.abs(rhs).max()):
            return LpOutcome(INFEASIBLE, iterations=tab.iterations)
        tab.allowed[n + n_slack:] = False
        # drive remaining (zero-valued) artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for p in range(m):
            if tab.basis[p] < n + n_slack:
                continue
            row = np.abs(tab.T[p, :n + n_slack])
            basic_mask = np.zeros(N, dtype=bool)
            basic_mask[tab.basis] = True
            row[basic_mask[:n + n_slack]] = 0.0
            j = int(np.argmax(row)) if row.size else 0
            if row.size == 0 or row[j] <= PIVOT_TOL:
                keep[p] = False
                continue
            value = tab.upper[j] if tab.at_upper[j] else 0.0
            pivot_row = tab.T[p] / tab.T[p, j]
            colj = tab.T[:, j].copy()
            colj[p] = 0.0
            tab.T -= np.outer(colj, pivot_row)
            tab.T[p] = pivot_row
            tab.since_refactor += 1
            tab.at_upper[j] = False
            tab.basis[p] = j
            tab.beta[p] = value
        if not keep.all():
            tab.rows = np.delete(tab.rows, _redundant_rows(tab.T[~keep, n + n_slack:], art_rows))
            tab.T = tab.T[keep]
            tab.beta = tab.beta[keep]
            tab.basis = tab.basis[keep]

    cost2 = np.zeros(N)
    cost2[:n] = -c
    status = _iterate(tab, cost2, tol, max_iter)
    if status != OPTIMAL:
        return LpOutcome(status, iterations=tab.iterations)

    y = np.where(tab.at_upper[:n], u, 0.0)
    basic_struct = tab.basis < n
    y[tab.basis[basic_struct]] = tab.beta[basic_struct]
    x = lb + np.clip(y, 0.0, u)
    return LpOutcome(OPTIMAL, float(c @ x), x, tab.iterations)


def solve_lp(model: MilpModel, lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None,
             tol: float = 1e-9, max_iter: Optional[int] = None) -> LpOutcome:
    """LP relaxation of ``model`` (binaries relaxed to [0, 1]).

    Raises :class:`IterationLimit` when the pivot budget runs out.
    """
    dm = model.arrays()
    out = simplex(dm.A, dm.b, dm.is_eq, dm.c,
                  dm.lb if lb is None else lb, dm.ub if ub is None else ub, tol, max_iter)
    if out.status == ITERATION_LIMIT:
        raise IterationLimit(f"simplex stopped after {out.iterations} pivots")
    return out

"""Generic linear model container with exact evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

Number = Union[int, Fraction]

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)


@dataclass(frozen=True)
class Var:
    id: int
    kind: str
    index: tuple[int, ...] = ()
    binary: bool = False
    lb: Number = 0
    ub: Optional[Number] = None

    @property
    def name(self) -> str:
        if not self.index:
            return self.kind
        return self.kind + "_" + "_".join(str(i) for i in self.index)


@dataclass(frozen=True)
class LinearConstraint:
    terms: tuple[tuple[Number, int], ...]
    sense: str
    rhs: Number
    tag: str
    name: str = ""

    def activity(self, values: Mapping[int, Number]) -> Number:
        return sum((c * values.get(v, 0) for c, v in self.terms), Fraction(0))

    def satisfied(self, values: Mapping[int, Number], tol: Number = 0) -> bool:
        lhs = self.activity(values)
        if self.sense == LE:
            return lhs <= self.rhs + tol
        if self.sense == GE:
            return lhs >= self.rhs - tol
        return abs(lhs - self.rhs) <= tol


def _exact(x: Any) -> Number:
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        return x
    if isinstance(x, bool):
        return int(x)
    f = Fraction(x)
    return f.numerator if f.denominator == 1 else f


@dataclass
class MilpModel:
    """Maximization model: ``vars``, ``constraints`` and a linear ``objective``.

    ``symbol_index`` maps ``(kind, *index)`` to a variable id.  ``context``
    carries whatever the producer needs to interpret a solution.
    """
    vars: list[Var] = field(default_factory=list)
    constraints: list[LinearConstraint] = field(default_factory=list)
    objective: list[tuple[Number, int]] = field(default_factory=list)
    symbol_index: dict[tuple, int] = field(default_factory=dict)
    context: Any = None
    _arrays: Any = field(default=None, repr=False, compare=False)

    # -- construction ------------------------------------------------------

    def add_var(self, kind: str, index: Sequence[int] = (), binary: bool = False,
                lb: Number = 0, ub: Optional[Number] = None) -> int:
        key = (kind, *index)
        if key in self.symbol_index:
            raise ValueError(f"duplicate variable {key}")
        if binary:
            lb, ub = 0, 1
        var = Var(len(self.vars), kind, tuple(index), binary, _exact(lb),
                  None if ub is None else _exact(ub))
        self.vars.append(var)
        self.symbol_index[key] = var.id
        self._arrays = None
        return var.id

    def var(self, kind: str, *index: int) -> int:
        return self.symbol_index[(kind, *index)]

    def get(self, kind: str, *index: int) -> Optional[int]:
        return self.symbol_index.get((kind, *index))

    def add_constraint(self, terms: Iterable[tuple[Any, int]], sense: str, rhs: Any,
                       tag: str, name: str = "") -> Optional[LinearConstraint]:
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense!r}")
        merged: dict[int, Number] = {}
        for coef, vid in terms:
            merged[vid] = merged.get(vid, 0) + _exact(coef)
        clean = tuple((c, v) for v, c in merged.items() if c != 0)
        con = LinearConstraint(clean, sense, _exact(rhs), tag,
                               name or f"{tag}#{len(self.constraints)}")
        self.constraints.append(con)
        self._arrays = None
        return con

    def set_objective(self, terms: Iterable[tuple[Any, int]]) -> None:
        merged: dict[int, Number] = {}
        for coef, vid in terms:
            merged[vid] = merged.get(vid, 0) + _exact(coef)
        self.objective = [(c, v) for v, c in merged.items() if c != 0]
        self._arrays = None

    # -- evaluation --------------------------------------------------------

    def objective_value(self, values: Mapping[int, Number]) -> Number:
        return sum((c * values.get(v, 0) for c, v in self.objective), Fraction(0))

    def violations(self, values: Mapping[int, Number], tol: Number = 0) -> list[str]:
        """Names of violated constraints and bounds; exact when ``tol`` is 0."""
        bad = []
        for var in self.vars:
            x = values.get(var.id, 0)
            if x < var.lb - tol or (var.ub is not None and x > var.ub + tol):
                bad.append(f"bound:{var.name}")
            elif var.binary and tol == 0 and x not in (0, 1):
                bad.append(f"integrality:{var.name}")
        bad.extend(c.name for c in self.constraints if not c.satisfied(values, tol))
        return bad

    def tags(self) -> set[str]:
        return {c.tag for c in self.constraints}

    def count(self, *kinds: str) -> int:
        wanted = set(kinds)
        return sum(1 for v in self.vars if v.kind in wanted)

    # -- dense float view for the LP engine --------------------------------

    def arrays(self) -> "DenseModel":
        if self._arrays is None:
            self._arrays = DenseModel.from_model(self)
        return self._arrays


@dataclass
class DenseModel:
    """Float matrices for one model, rows normalized to ``<=`` or ``=``."""
    A: np.ndarray
    b: np.ndarray
    is_eq: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray

    @classmethod
    def from_model(cls, model: MilpModel) -> "DenseModel":
        n, m = len(model.vars), len(model.constraints)
        A = np.zeros((m, n))
        b = np.zeros(m)
        is_eq = np.zeros(m, dtype=bool)
        for r, con in enumerate(model.constraints):
            sign = -1.0 if con.sense == GE else 1.0
            for coef, vid in con.terms:
                A[r, vid] += sign * float(coef)
            b[r] = sign * float(con.rhs)
            is_eq[r] = con.sense == EQ
        c = np.zeros(n)
        for coef, vid in model.objective:
            c[vid] += float(coef)
        lb = np.array([float(v.lb) for v in model.vars])
        ub = np.array([np.inf if v.ub is None else float(v.ub) for v in model.vars])
        integer = np.array([v.binary for v in model.vars], dtype=bool)
        return cls(A, b, is_eq, c, lb, ub, integer)

"""CPLEX LP and fixed-format MPS writers, plus readers for round-trip checks.

Both writers keep the model's variable and constraint order, so output is
deterministic.  Coefficients are written as integers when integral and as
``repr(float)`` otherwise; the readers parse numbers into exact fractions.

A model without objective terms is written with the objective ``0 x_dummy``
and the extra column ``x_dummy`` fixed to 0; the same placeholder fills rows
that have no terms.  Readers drop ``x_dummy`` again.

MPS names are limited to eight characters, so columns become ``C0000001``...
and rows ``R0000001``...; comment lines at the top of the file map each
generated name to the model name, and the MPS reader restores them.
"""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Optional

from vpcn.milp.model import EQ, GE, LE, LinearConstraint, MilpModel, Number, Var

DUMMY = "x_dummy"
LINE_WIDTH = 78


class FormatError(ValueError):
    pass


def _num(x: Number) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else repr(float(x))
    return str(x)


def _parse_num(token: str) -> Number:
    f = Fraction(token)
    return f.numerator if f.denominator == 1 else f


def _tag_of(name: str) -> str:
    return name.split("#", 1)[0]


# -- CPLEX LP ------------------------------------------------------------------

def _expr(terms: Iterable[tuple[Number, str]]) -> list[str]:
    out = []
    for coef, name in terms:
        sign = "-" if coef < 0 else "+"
        mag = -coef if coef < 0 else coef
        body = name if mag == 1 else f"{_num(mag)} {name}"
        out.append(f"{sign} {body}" if out or sign == "-" else body)
    return out or [f"0 {DUMMY}"]


def _wrap(head: str, pieces: list[str]) -> list[str]:
    lines, cur = [], head
    for piece in pieces:
        if len(cur) + 1 + len(piece) > LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = "   " + piece
        else:
            cur = f"{cur} {piece}" if cur else piece
    lines.append(cur)
    return lines


def emit_lp(m: MilpModel) -> str:
    names = [v.name for v in m.vars]
    need_dummy = not m.objective or any(not c.terms for c in m.constraints)
    lines = [f"\\ {len(m.vars)} variables, {len(m.constraints)} constraints", "Maximize"]
    lines += _wrap(" obj:", _expr((c, names[v]) for c, v in m.objective))
    lines.append("Subject To")
    for con in m.constraints:
        pieces = _expr((c, names[v]) for c, v in con.terms) + [f"{con.sense} {_num(con.rhs)}"]
        lines += _wrap(f" {con.name}:", pieces)
    lines.append("Bounds")
    for var in m.vars:
        if var.binary:
            continue
        if var.ub is None:
            lines.append(f" {var.name} >= {_num(var.lb)}")
        else:
            lines.append(f" {_num(var.lb)} <= {var.name} <= {_num(var.ub)}")
    if need_dummy:
        lines.append(f" {DUMMY} = 0")
    binaries = [v.name for v in m.vars if v.binary]
    if binaries:
        lines.append("Binary")
        lines += _wrap("", binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


_SECTIONS = {"maximize": "obj", "maximum": "obj", "max": "obj", "subject to": "rows", "st": "rows",
             "s.t.": "rows", "bounds": "bounds", "binary": "binary", "binaries": "binary", "end": "end"}
_TOKEN = re.compile(r"<=|>=|=<|=>|=|\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|[+-]|[^\s+\-<>=]+")


class _Builder:
    def __init__(self):
        self.model = MilpModel()
        self.ids: dict[str, int] = {}
        self.bounds: dict[str, list] = {}
        self.binary: set[str] = set()

    def vid(self, name: str) -> int:
        if name not in self.ids:
            self.ids[name] = len(self.ids)
        return self.ids[name]

    def finish(self) -> MilpModel:
        m = MilpModel()
        dummy = self.ids.get(DUMMY)
        remap = {}
        for name, old in sorted(self.ids.items(), key=lambda kv: kv[1]):
            if name == DUMMY:
                continue
            lb, ub = self.bounds.get(name, [0, None])
            binary = name in self.binary
            remap[old] = len(m.vars)
            m.vars.append(Var(len(m.vars), name, (), binary, 0 if binary else lb, 1 if binary else ub))
            m.symbol_index[(name,)] = remap[old]
        m.objective = [(c, remap[v]) for c, v in self.model.objective if v != dummy]
        for con in self.model.constraints:
            terms = tuple((c, remap[v]) for c, v in con.terms if v != dummy)
            m.constraints.append(LinearConstraint(terms, con.sense, con.rhs, con.tag, con.name))
        return m


def _linear(tokens: list[str], b: _Builder) -> list[tuple[Number, int]]:
    terms, sign, coef = [], 1, None
    for tok in tokens:
        if tok in ("+", "-"):
            sign = -1 if tok == "-" else 1
            continue
        try:
            coef = _parse_num(tok)
            continue
        except (ValueError, ZeroDivisionError):
            pass
        value = sign * (1 if coef is None else coef)
        terms.append((value, b.vid(tok)))
        sign, coef = 1, None
    return terms


def _statements(lines: list[str]) -> list[str]:
    """Join continuation lines: a new statement starts with ``name:``."""
    out: list[str] = []
    for line in lines:
        if re.match(r"^\s*[^\s:]+\s*:", line) or not out:
            out.append(line.strip())
        else:
            out[-1] += " " + line.strip()
    return out


def parse_lp(text: str) -> MilpModel:
    b = _Builder()
    section = None
    chunks: dict[str, list[str]] = {"obj": [], "rows": [], "bounds": [], "binary": []}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        if not line.strip():
            continue
        key = line.strip().lower()
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if section == "end":
                break
            continue
        if section is None:
            raise FormatError(f"content outside any section: {raw!r}")
        chunks[section].append(line)
    if section is None:
        raise FormatError("no LP sections found")

    for stmt in _statements(chunks["obj"]):
        body = stmt.split(":", 1)[1] if ":" in stmt else stmt
        b.model.objective = _linear(_TOKEN.findall(body), b)
    for stmt in _statements(chunks["rows"]):
        if ":" not in stmt:
            raise FormatError(f"unnamed constraint: {stmt!r}")
        name, body = (s.strip() for s in stmt.split(":", 1))
        tokens = _TOKEN.findall(body)
        ops = [k for k, t in enumerate(tokens) if t in ("<=", ">=", "=", "=<", "=>")]
        if len(ops) != 1:
            raise FormatError(f"constraint {name!r} needs exactly one relation")
        op = ops[0]
        try:
            rhs = _parse_num("".join(tokens[op + 1:]))
        except (ValueError, ZeroDivisionError):
            raise FormatError(f"constraint {name!r} has a non-numeric right-hand side") from None
        sense = {"=<": LE, "=>": GE}.get(tokens[op], tokens[op])
        b.model.constraints.append(LinearConstraint(tuple(_linear(tokens[:op], b)), sense,
                                                    rhs, _tag_of(name), name))
    for line in chunks["bounds"]:
        try:
            _lp_bound(line, b)
        except (ValueError, ZeroDivisionError):
            raise FormatError(f"cannot parse bound {line.strip()!r}") from None
    for line in chunks["binary"]:
        for name in line.split():
            b.vid(name)
            b.binary.add(name)
    return b.finish()


def _lp_bound(line: str, b: _Builder) -> None:
    tokens = line.split()
    if len(tokens) == 5 and tokens[1] == tokens[3] == "<=":
        name, lo, hi = tokens[2], _parse_num(tokens[0]), _parse_num(tokens[4])
    elif len(tokens) == 3 and tokens[1] in (">=", "<=", "="):
        name, op, val = tokens[0], tokens[1], _parse_num(tokens[2])
        lo, hi = b.bounds.get(name, [0, None])
        if op == ">=":
            lo = val
        elif op == "<=":
            hi = val
        else:
            lo = hi = val
    else:
        raise ValueError(line)
    b.vid(name)
    b.bounds[name] = [lo, hi]


# -- fixed MPS -----------------------------------------------------------------

def _mps_line(f1: str, f2: str, f3: str = "", f4: str = "") -> str:
    line = f" {f1:<2} {f2:<8}"
    if f3:
        line += f"  {f3:<8}  {f4:>12}"
    return line.rstrip()


def emit_mps(m: MilpModel, name: str = "VPCN") -> str:
    cols = {v.id: f"C{v.id + 1:07d}" for v in m.vars}
    rows = [f"R{k + 1:07d}" for k in range(len(m.constraints))]
    lines = [f"* {len(m.vars)} variables, {len(m.constraints)} constraints"]
    lines += [f"* column {cols[v.id]} {v.name}" for v in m.vars]
    lines += [f"* row {r} {c.name}" for r, c in zip(rows, m.constraints)]
    lines += [f"NAME          {name}", "OBJSENSE", "    MAX", "ROWS", " N  OBJ"]
    for r, con in zip(rows, m.constraints):
        lines.append(_mps_line({LE: "L", GE: "G", EQ: "E"}[con.sense], r))

    entries: dict[int, list[tuple[str, Number]]] = {v.id: [] for v in m.vars}
    for coef, vid in m.objective:
        entries[vid].append(("OBJ", coef))
    for r, con in zip(rows, m.constraints):
        for coef, vid in con.terms:
            entries[vid].append((r, coef))
    lines.append("COLUMNS")
    in_int = False
    for var in m.vars:
        if var.binary != in_int:
            marker = "'INTORG'" if var.binary else "'INTEND'"
            lines.append(f"    MARKER                 'MARKER'                 {marker}")
            in_int = var.binary
        for row, coef in entries[var.id] or [("OBJ", 0)]:
            lines.append(_mps_line("", cols[var.id], row, _num(coef)))
    if in_int:
        lines.append("    MARKER                 'MARKER'                 'INTEND'")
    lines.append("RHS")
    for r, con in zip(rows, m.constraints):
        if con.rhs != 0:
            lines.append(_mps_line("", "RHS", r, _num(con.rhs)))
    lines.append("BOUNDS")
    for var in m.vars:
        if var.binary:
            lines.append(_mps_line("BV", "BND", cols[var.id]))
            continue
        if var.lb != 0:
            lines.append(_mps_line("LO", "BND", cols[var.id], _num(var.lb)))
        if var.ub is not None:
            lines.append(_mps_line("UP", "BND", cols[var.id], _num(var.ub)))
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def parse_mps(text: str) -> MilpModel:
    try:
        return _parse_mps(text)
    except FormatError:
        raise
    except (KeyError, IndexError, ValueError, ZeroDivisionError) as exc:
        raise FormatError(f"malformed MPS input: {exc!r}") from None


def _parse_mps(text: str) -> MilpModel:
    col_name: dict[str, str] = {}
    row_name: dict[str, str] = {}
    senses: dict[str, str] = {}
    row_order: list[str] = []
    col_order: list[str] = []
    coefs: dict[str, list[tuple[Number, str]]] = {}
    objective: list[tuple[Number, str]] = []
    rhs: dict[str, Number] = {}
    bounds: dict[str, list] = {}
    binary: set[str] = set()
    integer_block = False
    section: Optional[str] = None
    maximize = False
    for raw in text.splitlines():
        if raw.startswith("*"):
            parts = raw[1:].split()
            if len(parts) == 3 and parts[0] == "column":
                col_name[parts[1]] = parts[2]
            elif len(parts) == 3 and parts[0] == "row":
                row_name[parts[1]] = parts[2]
            continue
        if not raw.strip():
            continue
        if not raw[0].isspace():
            section = raw.split()[0].upper()
            if section == "ENDATA":
                break
            continue
        f = raw.split()
        if section == "OBJSENSE":
            maximize = f[0].upper() in ("MAX", "MAXIMIZE")
        elif section == "ROWS":
            if f[0] != "N":
                senses[f[1]] = {"L": LE, "G": GE, "E": EQ}[f[0]]
                row_order.append(f[1])
                coefs[f[1]] = []
        elif section == "COLUMNS":
            if len(f) >= 3 and f[1] == "'MARKER'":
                integer_block = f[2] == "'INTORG'"
                continue
            col = f[0]
            if col not in bounds:
                col_order.append(col)
                bounds[col] = [0, None]
                if integer_block:
                    binary.add(col)
            for row, val in zip(f[1::2], f[2::2]):
                (objective if row not in senses else coefs[row]).append((_parse_num(val), col))
        elif section == "RHS":
            for row, val in zip(f[1::2], f[2::2]):
                rhs[row] = _parse_num(val)
        elif section == "BOUNDS":
            kind, col = f[0], f[2]
            if kind == "BV":
                binary.add(col)
                bounds[col] = [0, 1]
            elif kind == "LO":
                bounds[col][0] = _parse_num(f[3])
            elif kind == "UP":
                bounds[col][1] = _parse_num(f[3])
            elif kind == "FX":
                bounds[col] = [_parse_num(f[3])] * 2
            else:
                raise FormatError(f"unsupported bound type {kind}")
        else:
            raise FormatError(f"unexpected line in section {section}: {raw!r}")
    if not maximize:
        raise FormatError("only maximization models are produced by this package")

    m = MilpModel()
    ids = {}
    for col in col_order:
        name = col_name.get(col, col)
        lo, hi = bounds[col]
        ids[col] = len(m.vars)
        m.vars.append(Var(len(m.vars), name, (), col in binary, lo, hi))
        m.symbol_index[(name,)] = ids[col]
    m.objective = [(c, ids[col]) for c, col in objective if c != 0]
    for row in row_order:
        name = row_name.get(row, row)
        terms = tuple((c, ids[col]) for c, col in coefs[row])
        m.constraints.append(LinearConstraint(terms, senses[row], rhs.get(row, 0), _tag_of(name), name))
    return m


# -- comparison ----------------------------------------------------------------

def equivalent(a: MilpModel, b: MilpModel) -> bool:
    """Same variables, bounds, objective and constraints, matched by name."""
    return not differences(a, b)


def differences(a: MilpModel, b: MilpModel) -> list[str]:
    def num(x):
        # written non-integers go through float, so compare them as floats
        f = Fraction(x)
        return f if f.denominator == 1 else float(f)

    def summary(m: MilpModel):
        names = [v.name for v in m.vars]
        vars_ = {v.name: (v.binary, num(v.lb), None if v.ub is None else num(v.ub)) for v in m.vars}
        obj = {names[v]: num(c) for c, v in m.objective if c != 0}
        cons = {c.name: (c.sense, num(c.rhs), {names[v]: num(k) for k, v in c.terms if k != 0})
                for c in m.constraints}
        return vars_, obj, cons, [c.name for c in m.constraints]

    va, oa, ca, order_a = summary(a)
    vb, ob, cb, order_b = summary(b)
    out = []
    if va != vb:
        out.append(f"variables differ: {sorted(set(va) ^ set(vb)) or 'bounds or types'}")
    if oa != ob:
        out.append("objectives differ")
    if order_a != order_b:
        out.append("constraint names or order differ")
    out += [f"constraint {k} differs" for k in ca if k in cb and ca[k] != cb[k]]
    return out

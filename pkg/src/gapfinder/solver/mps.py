"""MPS export/import and the plain ``name value`` solution format.

Columns are written as ``C0000000``-style names and rows as ``R0000000`` so
every identifier fits the 8-character fixed-format fields.  Numbers use the
shortest round-trip representation; readers that tokenize on whitespace (all
mainstream solvers) accept them.  Maximization models are exported with a
negated objective because fixed MPS has no sense section.
"""

from __future__ import annotations

import math
import re
from typing import Dict, Optional, TextIO

from ..model import (FEAS_TOL, Constraint, LinExpr, Model, ModelError, Sense, Solution,
                     Status, VarKind, eval_expr)


class SolutionFileError(ModelError):
    pass


def col_name(j: int) -> str:
    return f"C{j:07d}"


def row_name(i: int) -> str:
    return f"R{i:07d}"


def _fmt(x: float) -> str:
    return repr(float(x))


def _line(f1: str, f2: str, f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    out = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}"
    if f5:
        out += f"   {f5:<8}  {f6:>12}"
    return out.rstrip() + "\n"


def write_mps(model: Model, fh: TextIO) -> None:
    sign = 1.0
    if model.objective is not None and model.objective.sense == "max":
        sign = -1.0
    title = re.sub(r"\s+", "_", model.name)[:8] or "MODEL"
    fh.write(f"NAME          {title}\n")
    fh.write("ROWS\n")
    fh.write(" N  OBJ\n")
    code = {Sense.LE: "L", Sense.GE: "G", Sense.EQ: "E"}
    for i, c in enumerate(model.constraints):
        fh.write(f" {code[c.sense]}  {row_name(i)}\n")
    columns: Dict[int, list] = {d.id: [] for d in model.vars}
    if model.objective is not None:
        for vid, coeff in model.objective.expr.terms.items():
            columns[vid].append(("OBJ", sign * coeff))
    for i, c in enumerate(model.constraints):
        for vid, coeff in c.lhs.terms.items():
            columns[vid].append((row_name(i), coeff))
    fh.write("COLUMNS\n")
    in_int = False
    marker = 0
    for d in model.vars:
        if d.is_integral and not in_int:
            fh.write(f"    MARKER{marker:04d}  'MARKER'                 'INTORG'\n")
            in_int, marker = True, marker + 1
        elif not d.is_integral and in_int:
            fh.write(f"    MARKER{marker:04d}  'MARKER'                 'INTEND'\n")
            in_int, marker = False, marker + 1
        entries = columns[d.id]
        if not entries:
            # keep the column declared even when it appears nowhere
            entries = [("OBJ", 0.0)]
        for row, coeff in entries:
            fh.write(_line("", col_name(d.id), row, _fmt(coeff)))
    if in_int:
        fh.write(f"    MARKER{marker:04d}  'MARKER'                 'INTEND'\n")
    fh.write("RHS\n")
    if model.objective is not None and model.objective.expr.constant:
        # solvers read the objective-row RHS as the negated constant
        fh.write(_line("", "RHS", "OBJ", _fmt(-sign * model.objective.expr.constant)))
    for i, c in enumerate(model.constraints):
        rhs = c.rhs - c.lhs.constant
        if rhs != 0.0:
            fh.write(_line("", "RHS", row_name(i), _fmt(rhs)))
    fh.write("BOUNDS\n")
    for d in model.vars:
        name = col_name(d.id)
        lo, hi = d.lower, d.upper
        if d.kind is VarKind.BINARY and lo == 0.0 and hi == 1.0:
            fh.write(_line("BV", "BND", name))
            continue
        if lo == hi:
            fh.write(_line("FX", "BND", name, _fmt(lo)))
            continue
        if math.isinf(lo) and math.isinf(hi):
            fh.write(_line("FR", "BND", name))
            continue
        if math.isinf(lo):
            fh.write(_line("MI", "BND", name))
        elif lo != 0.0 or d.is_integral:
            fh.write(_line("LO", "BND", name, _fmt(lo)))
        if math.isinf(hi):
            if d.is_integral:
                fh.write(_line("PL", "BND", name))
        else:
            fh.write(_line("UP", "BND", name, _fmt(hi)))
    fh.write("ENDATA\n")


def export_mps(model: Model, path) -> None:
    if not model.frozen:
        raise ModelError("freeze the model before exporting it")
    with open(path, "w") as fh:
        write_mps(model, fh)


def read_mps(path) -> Model:
    """Parse an MPS file (fixed or free layout) into a minimization-form Model."""
    section = None
    row_sense: Dict[str, Optional[Sense]] = {}
    row_order = []
    obj_row = None
    col_terms: Dict[str, Dict[str, float]] = {}
    col_order = []
    col_int: Dict[str, bool] = {}
    rhs: Dict[str, float] = {}
    bounds: Dict[str, list] = {}
    in_int = False
    name = "mps"
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip() or raw.startswith("*"):
                continue
            tok = raw.split()
            if not raw[0].isspace():
                section = tok[0].upper()
                if section == "NAME" and len(tok) > 1:
                    name = tok[1]
                if section == "RANGES":
                    raise ModelError("RANGES section is not supported")
                continue
            if section == "ROWS":
                kind, rname = tok[0].upper(), tok[1]
                if kind == "N":
                    if obj_row is None:
                        obj_row = rname
                    row_sense[rname] = None
                else:
                    row_sense[rname] = {"L": Sense.LE, "G": Sense.GE, "E": Sense.EQ}[kind]
                    row_order.append(rname)
            elif section == "COLUMNS":
                if len(tok) >= 3 and tok[1].strip("'\"").upper() == "MARKER":
                    flag = tok[2].strip("'\"").upper()
                    in_int = flag == "INTORG"
                    continue
                cname = tok[0]
                if cname not in col_terms:
                    col_terms[cname] = {}
                    col_order.append(cname)
                    col_int[cname] = in_int
                pairs = tok[1:]
                for k in range(0, len(pairs) - 1, 2):
                    col_terms[cname][pairs[k]] = col_terms[cname].get(pairs[k], 0.0) + float(pairs[k + 1])
            elif section == "RHS":
                pairs = tok[1:] if len(tok) % 2 == 1 else tok
                for k in range(0, len(pairs) - 1, 2):
                    rhs[pairs[k]] = float(pairs[k + 1])
            elif section == "BOUNDS":
                kind = tok[0].upper()
                cname = tok[2] if len(tok) >= 3 else tok[1]
                value = float(tok[3]) if len(tok) >= 4 else None
                bounds.setdefault(cname, []).append((kind, value))
            elif section == "ENDATA":
                break
            else:
                raise ModelError(f"line {lineno}: data outside a known section")
    model = Model(name)
    handles = {}
    for cname in col_order:
        integral = col_int[cname]
        lo, hi = 0.0, math.inf
        kind = VarKind.INTEGER if integral else VarKind.CONTINUOUS
        for bkind, value in bounds.get(cname, []):
            if bkind == "LO":
                lo = value
            elif bkind == "UP":
                hi = value
                if value < 0 and lo == 0.0:
                    lo = -math.inf
            elif bkind == "FX":
                lo = hi = value
            elif bkind == "FR":
                lo, hi = -math.inf, math.inf
            elif bkind == "MI":
                lo = -math.inf
            elif bkind == "PL":
                hi = math.inf
            elif bkind == "BV":
                lo, hi, kind = 0.0, 1.0, VarKind.BINARY
            elif bkind in ("LI", "UI"):
                kind = VarKind.INTEGER
                if bkind == "LI":
                    lo = value
                else:
                    hi = value
            else:
                raise ModelError(f"unsupported bound type {bkind}")
        if integral and kind is VarKind.INTEGER and lo == 0.0 and hi == 1.0:
            kind = VarKind.BINARY
        handles[cname] = model.new_var(kind, lo, hi, cname)
    rows = {r: LinExpr() for r in row_order}
    obj = LinExpr(constant=-rhs.get(obj_row, 0.0) if obj_row else 0.0)
    for cname in col_order:
        vid = handles[cname].id
        for rname, coeff in col_terms[cname].items():
            if rname == obj_row:
                obj.terms[vid] = obj.terms.get(vid, 0.0) + coeff
            elif rname in rows:
                rows[rname].terms[vid] = rows[rname].terms.get(vid, 0.0) + coeff
            elif row_sense.get(rname, 0) is None:
                continue  # secondary free rows are ignored
            else:
                raise ModelError(f"column {cname} references unknown row {rname}")
    for rname in row_order:
        model.add(Constraint(rows[rname].normalized(), row_sense[rname], rhs.get(rname, 0.0), rname))
    model.minimize(obj)
    return model


def write_solution(path, model: Model, solution: Solution, use_mps_names: bool = True) -> None:
    with open(path, "w") as fh:
        fh.write(f"# status {solution.status.value}\n")
        if math.isfinite(solution.objective):
            fh.write(f"# objective {solution.objective!r}\n")
        if math.isfinite(solution.bound):
            fh.write(f"# bound {solution.bound!r}\n")
        for d in model.vars:
            if d.id in solution.assignment:
                label = col_name(d.id) if use_mps_names else d.name
                fh.write(f"{label} {solution.assignment[d.id]!r}\n")


def import_solution(path, model: Model, tol: float = FEAS_TOL) -> Solution:
    """Read a ``name value`` solution for ``model`` and verify feasibility."""
    values: Dict[int, float] = {}
    status = Status.FEASIBLE
    bound = math.nan
    by_mps = {col_name(d.id): d.id for d in model.vars}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#") or line.startswith("*"):
                tok = line.lstrip("#* ").split()
                if len(tok) == 2 and tok[0].lower() == "status":
                    try:
                        status = Status(tok[1])
                    except ValueError:
                        pass
                elif len(tok) == 2 and tok[0].lower() == "bound":
                    bound = float(tok[1])
                continue
            tok = line.split()
            if len(tok) != 2:
                raise SolutionFileError(f"line {lineno}: expected 'name value', got {line!r}")
            label, text = tok
            try:
                value = float(text)
            except ValueError:
                raise SolutionFileError(f"line {lineno}: bad number {text!r}") from None
            if model.has_var(label):
                vid = model.var(label).id
            elif label in by_mps:
                vid = by_mps[label]
            else:
                raise SolutionFileError(f"line {lineno}: unknown variable {label!r}")
            values[vid] = value
    for d in model.vars:
        if d.id not in values:
            if d.lower <= 0.0 <= d.upper:
                values[d.id] = 0.0
            else:
                raise SolutionFileError(f"variable {d.name!r} missing and 0 is outside its bounds")
    problems = model.check(values, tol)
    if problems:
        raise SolutionFileError("solution violates the model: " + "; ".join(problems[:5]))
    obj = eval_expr(model.objective.expr, values) if model.objective is not None else 0.0
    if status not in (Status.OPTIMAL, Status.FEASIBLE, Status.BUDGET_EXHAUSTED):
        status = Status.FEASIBLE
    if not math.isfinite(bound):
        bound = obj if status is Status.OPTIMAL else math.nan
    gap = abs(obj - bound) / max(abs(obj), 1e-10) if math.isfinite(bound) else math.inf
    return Solution(values, obj, status, bound, gap)

"""Linear optimization IR: variables, linear expressions, constraints, models.

Every encoder, rewrite and solver in the package speaks this IR.  Constraints
are normalized at insertion to ``terms (sense) rhs`` with all constants moved
to the right-hand side.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from numbers import Real
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

FEAS_TOL = 1e-6
INT_TOL = 1e-6


class ModelError(ValueError):
    """Raised for malformed model construction requests."""


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class Sense(str, enum.Enum):
    LE = "<="
    EQ = "=="
    GE = ">="


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class Var:
    """Opaque handle to a declared variable; supports linear arithmetic."""

    id: int
    name: str

    def _expr(self) -> "LinExpr":
        return LinExpr({self.id: 1.0})

    def __add__(self, other):
        return self._expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self._expr() - other

    def __rsub__(self, other):
        return (-self._expr()) + other

    def __mul__(self, other):
        return self._expr() * other

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._expr() / other

    def __neg__(self):
        return -self._expr()

    def __le__(self, other):
        return self._expr() <= other

    def __ge__(self, other):
        return self._expr() >= other

    def eq(self, other) -> "Constraint":
        return self._expr().eq(other)

    def __repr__(self):
        return f"Var({self.name})"


Operand = Union["LinExpr", Var, Real]


class LinExpr:
    """``constant + sum(coeff * var)``; duplicate terms are merged on the fly."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Optional[Mapping[int, float]] = None, constant: float = 0.0):
        self.terms: Dict[int, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    @staticmethod
    def of(value: Operand) -> "LinExpr":
        if isinstance(value, LinExpr):
            return value
        if isinstance(value, Var):
            return LinExpr({value.id: 1.0})
        if isinstance(value, Real):
            return LinExpr(constant=float(value))
        raise TypeError(f"cannot build a linear expression from {type(value).__name__}")

    @staticmethod
    def sum(items: Iterable[Operand]) -> "LinExpr":
        out = LinExpr()
        for item in items:
            out.iadd(item)
        return out

    @staticmethod
    def from_pairs(pairs: Iterable[Tuple[int, float]], constant: float = 0.0) -> "LinExpr":
        out = LinExpr(constant=constant)
        for vid, coeff in pairs:
            out.terms[vid] = out.terms.get(vid, 0.0) + float(coeff)
        return out

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.constant)

    def iadd(self, other: Operand, scale: float = 1.0) -> "LinExpr":
        other = LinExpr.of(other)
        for vid, coeff in other.terms.items():
            self.terms[vid] = self.terms.get(vid, 0.0) + scale * coeff
        self.constant += scale * other.constant
        return self

    def normalized(self) -> "LinExpr":
        return LinExpr({v: c for v, c in self.terms.items() if c != 0.0}, self.constant)

    def __add__(self, other):
        return self.copy().iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy().iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self).iadd(other)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, k):
        if not isinstance(k, Real):
            raise TypeError("only scalar multiplication is linear")
        return LinExpr({v: c * k for v, c in self.terms.items()}, self.constant * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / k)

    def __le__(self, other):
        return Constraint.build(self, Sense.LE, other)

    def __ge__(self, other):
        return Constraint.build(self, Sense.GE, other)

    def eq(self, other) -> "Constraint":
        return Constraint.build(self, Sense.EQ, other)

    def vars(self):
        return self.terms.keys()

    def __repr__(self):
        body = " + ".join(f"{c:g}*v{v}" for v, c in self.terms.items())
        return f"LinExpr({body or '0'} + {self.constant:g})"


@dataclass
class Constraint:
    lhs: LinExpr
    sense: Sense
    rhs: float
    tag: str = ""

    @staticmethod
    def build(left: Operand, sense: Sense, right: Operand, tag: str = "") -> "Constraint":
        expr = LinExpr.of(left) - LinExpr.of(right)
        rhs = -expr.constant
        expr.constant = 0.0
        return Constraint(expr.normalized(), Sense(sense), rhs, tag)

    def slack(self, assignment: Mapping[int, float]) -> float:
        """Signed violation; positive means violated."""
        val = eval_expr(self.lhs, assignment)
        if self.sense is Sense.LE:
            return val - self.rhs
        if self.sense is Sense.GE:
            return self.rhs - val
        return abs(val - self.rhs)


@dataclass
class VarDecl:
    id: int
    kind: VarKind
    lower: float
    upper: float
    name: str

    @property
    def is_integral(self) -> bool:
        return self.kind is not VarKind.CONTINUOUS


@dataclass
class Objective:
    sense: str  # "max" | "min"
    expr: LinExpr


@dataclass
class Solution:
    assignment: Dict[int, float]
    objective: float
    status: Status
    bound: float = math.nan
    mip_gap: float = 0.0

    @property
    def has_point(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.FEASIBLE) or (
            self.status is Status.BUDGET_EXHAUSTED and bool(self.assignment)
        )

    def value(self, item: Operand) -> float:
        return eval_expr(LinExpr.of(item), self.assignment)

    def __getitem__(self, item: Operand) -> float:
        return self.value(item)


def eval_expr(expr: Operand, assignment: Mapping[int, float]) -> float:
    expr = LinExpr.of(expr)
    total = expr.constant
    for vid, coeff in expr.terms.items():
        try:
            total += coeff * assignment[vid]
        except KeyError:
            raise ModelError(f"variable id {vid} is not assigned") from None
    return total


class Model:
    """Mutable during construction; ``freeze()`` makes it read-only."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.vars: List[VarDecl] = []
        self.constraints: List[Constraint] = []
        self.objective: Optional[Objective] = None
        self._by_name: Dict[str, int] = {}
        self._frozen = False

    # -- construction -------------------------------------------------
    def _check_mutable(self):
        if self._frozen:
            raise ModelError(f"model {self.name!r} is frozen")

    def new_var(self, kind=VarKind.CONTINUOUS, lower: float = 0.0,
                upper: float = math.inf, name: Optional[str] = None) -> Var:
        self._check_mutable()
        kind = VarKind(kind)
        if name is None:
            name = f"_v{len(self.vars)}"
        if name in self._by_name:
            raise ModelError(f"duplicate variable name {name!r}")
        lower, upper = float(lower), float(upper)
        if math.isnan(lower) or math.isnan(upper):
            raise ModelError(f"NaN bound on {name!r}")
        if lower > upper:
            raise ModelError(f"inverted bounds on {name!r}: {lower} > {upper}")
        if kind is VarKind.BINARY:
            if lower < 0.0 or upper > 1.0:
                raise ModelError(f"binary {name!r} needs bounds within [0, 1]")
        vid = len(self.vars)
        self.vars.append(VarDecl(vid, kind, lower, upper, name))
        self._by_name[name] = vid
        return Var(vid, name)

    def continuous(self, name=None, lower=0.0, upper=math.inf) -> Var:
        return self.new_var(VarKind.CONTINUOUS, lower, upper, name)

    def binary(self, name=None) -> Var:
        return self.new_var(VarKind.BINARY, 0.0, 1.0, name)

    def integer(self, name=None, lower=0.0, upper=math.inf) -> Var:
        return self.new_var(VarKind.INTEGER, lower, upper, name)

    def add(self, constraint: Constraint, tag: Optional[str] = None) -> Constraint:
        self._check_mutable()
        if tag is not None:
            constraint.tag = tag
        self.constraints.append(constraint)
        return constraint

    def add_le(self, left: Operand, right: Operand, tag: str = "") -> Constraint:
        return self.add(Constraint.build(left, Sense.LE, right, tag))

    def add_ge(self, left: Operand, right: Operand, tag: str = "") -> Constraint:
        return self.add(Constraint.build(left, Sense.GE, right, tag))

    def add_eq(self, left: Operand, right: Operand, tag: str = "") -> Constraint:
        return self.add(Constraint.build(left, Sense.EQ, right, tag))

    def maximize(self, expr: Operand):
        self._check_mutable()
        self.objective = Objective("max", LinExpr.of(expr).normalized())

    def minimize(self, expr: Operand):
        self._check_mutable()
        self.objective = Objective("min", LinExpr.of(expr).normalized())

    def set_bounds(self, var: Var, lower: Optional[float] = None, upper: Optional[float] = None):
        self._check_mutable()
        decl = self.vars[var.id]
        lo = decl.lower if lower is None else float(lower)
        hi = decl.upper if upper is None else float(upper)
        if lo > hi:
            raise ModelError(f"inverted bounds on {decl.name!r}: {lo} > {hi}")
        decl.lower, decl.upper = lo, hi

    def fix(self, var: Var, value: float):
        self.set_bounds(var, value, value)

    def freeze(self) -> "Model":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def copy(self, name: Optional[str] = None) -> "Model":
        out = Model(name or self.name)
        out.vars = [VarDecl(d.id, d.kind, d.lower, d.upper, d.name) for d in self.vars]
        out._by_name = dict(self._by_name)
        out.constraints = [Constraint(c.lhs.copy(), c.sense, c.rhs, c.tag) for c in self.constraints]
        if self.objective is not None:
            out.objective = Objective(self.objective.sense, self.objective.expr.copy())
        return out

    # -- lookup --------------------------------------------------------
    def var(self, name: str) -> Var:
        try:
            return Var(self._by_name[name], name)
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def has_var(self, name: str) -> bool:
        return name in self._by_name

    def handle(self, vid: int) -> Var:
        return Var(vid, self.vars[vid].name)

    def bounds(self, item: Operand) -> Tuple[float, float]:
        """Interval bounds of an expression from the declared variable bounds."""
        expr = LinExpr.of(item)
        lo = hi = expr.constant
        for vid, coeff in expr.terms.items():
            d = self.vars[vid]
            if coeff >= 0:
                lo += coeff * d.lower if coeff else 0.0
                hi += coeff * d.upper if coeff else 0.0
            else:
                lo += coeff * d.upper
                hi += coeff * d.lower
        return lo, hi

    @property
    def num_integral(self) -> int:
        return sum(1 for d in self.vars if d.is_integral)

    def is_lp(self) -> bool:
        return self.num_integral == 0

    def values_by_name(self, sol: Solution) -> Dict[str, float]:
        return {d.name: sol.assignment[d.id] for d in self.vars if d.id in sol.assignment}

    def check(self, assignment: Mapping[int, float], tol: float = FEAS_TOL) -> List[str]:
        """Names/tags of bounds or constraints violated beyond ``tol``."""
        bad = []
        for d in self.vars:
            v = assignment.get(d.id)
            if v is None:
                bad.append(f"unassigned {d.name}")
                continue
            if v < d.lower - tol or v > d.upper + tol:
                bad.append(f"bound {d.name}={v}")
            if d.is_integral and abs(v - round(v)) > INT_TOL:
                bad.append(f"integrality {d.name}={v}")
        for i, c in enumerate(self.constraints):
            scale = max(1.0, abs(c.rhs))
            if c.slack(assignment) > tol * scale:
                bad.append(f"row {i} [{c.tag}] violated by {c.slack(assignment):.3g}")
        return bad

    def __repr__(self):
        return (f"Model({self.name!r}, vars={len(self.vars)}, rows={len(self.constraints)}, "
                f"integral={self.num_integral})")


def validate(model: Model) -> List[str]:
    """One diagnostic string per broken invariant; empty when well-formed."""
    out = []
    seen = set()
    for d in model.vars:
        if d.name in seen:
            out.append(f"duplicate variable name {d.name!r}")
        seen.add(d.name)
        if d.lower > d.upper:
            out.append(f"inverted bounds on {d.name!r}")
        if d.kind is VarKind.BINARY and (d.lower < 0 or d.upper > 1):
            out.append(f"binary {d.name!r} has bounds outside [0, 1]")
    n = len(model.vars)

    def check_expr(expr: LinExpr, where: str):
        for vid, coeff in expr.terms.items():
            if not (isinstance(vid, int) and 0 <= vid < n):
                out.append(f"{where}: undeclared variable id {vid}")
            if not math.isfinite(coeff):
                out.append(f"{where}: non-finite coefficient {coeff}")
        if not math.isfinite(expr.constant):
            out.append(f"{where}: non-finite constant")

    for i, c in enumerate(model.constraints):
        check_expr(c.lhs, f"row {i} [{c.tag}]")
        if not math.isfinite(c.rhs):
            out.append(f"row {i} [{c.tag}]: non-finite rhs")
    if model.objective is not None:
        check_expr(model.objective.expr, "objective")
        if model.objective.sense not in ("max", "min"):
            out.append(f"objective sense {model.objective.sense!r}")
    return out


# -- JSON ------------------------------------------------------------------

def _num(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.17g}")


def _parse_num(x) -> float:
    return float(x)


def model_to_dict(model: Model) -> dict:
    names = [d.name for d in model.vars]

    def terms(expr: LinExpr):
        return [[names[v], _num(c)] for v, c in expr.terms.items()]

    out = {
        "name": model.name,
        "vars": [{"name": d.name, "kind": d.kind.value, "lb": _num(d.lower), "ub": _num(d.upper)}
                 for d in model.vars],
        "constraints": [{"terms": terms(c.lhs), "const": _num(c.lhs.constant),
                         "sense": c.sense.value, "rhs": _num(c.rhs), "tag": c.tag}
                        for c in model.constraints],
    }
    if model.objective is not None:
        out["objective"] = {"sense": model.objective.sense,
                            "terms": terms(model.objective.expr),
                            "const": _num(model.objective.expr.constant)}
    return out


def model_from_dict(data: dict) -> Model:
    model = Model(data.get("name", "model"))
    for v in data["vars"]:
        model.new_var(VarKind(v["kind"]), _parse_num(v["lb"]), _parse_num(v["ub"]), v["name"])

    def expr(terms, const):
        return LinExpr.from_pairs(((model.var(n).id, _parse_num(c)) for n, c in terms),
                                  _parse_num(const))

    for c in data["constraints"]:
        model.add(Constraint(expr(c["terms"], c.get("const", 0.0)), Sense(c["sense"]),
                             _parse_num(c["rhs"]), c.get("tag", "")))
    obj = data.get("objective")
    if obj:
        model.objective = Objective(obj["sense"], expr(obj["terms"], obj.get("const", 0.0)))
    return model


def save_model(model: Model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path) -> Model:
    with open(path) as fh:
        return model_from_dict(json.load(fh))

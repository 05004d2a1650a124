"""Collapse a leader/follower specification into one single-level MILP.

The leader owns the input variables and the constraints that restrict them.
Each follower is an optimization (or feasibility) model over its own
variables plus leader variables, referenced by name.  The leader objective is
a signed combination of follower values.  Followers whose optimization
direction agrees with the leader are merged directly; the others are replaced
by optimality conditions (KKT or primal-dual), with quantized inputs used to
linearize the leader x dual products of the primal-dual form.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from . import helpers as H
from .model import (Constraint, LinExpr, Model, ModelError, Objective, Sense, Solution, Var,
                    VarKind)


class RewriteError(ModelError):
    pass


ALIGNED, MISALIGNED, FEASIBILITY = "Aligned", "Misaligned", "Feasibility"
REWRITES = ("inline", "feasibility", "kkt", "pd", "qpd")


# ---------------------------------------------------------------------------
# specification types

@dataclass
class FollowerSpec:
    """A follower over its own variables and leader variables (shared by name).

    ``model.objective`` is the follower objective; objective-free followers
    declare ``output``, the expression the leader sees.  ``coefficient_terms``
    lists products ``(row, leader_var, follower_var, coeff)`` added to row
    ``row``; only binary leader variables are supported there, and only when
    the follower is merged directly.
    """

    name: str
    model: Model
    output: Optional[LinExpr] = None
    coefficient_terms: Sequence[Tuple[int, str, str, float]] = ()

    @property
    def objective(self) -> Optional[Objective]:
        return self.model.objective

    def is_lp(self) -> bool:
        return self.model.is_lp()

    def leader_var_positions(self, leader_names: Iterable[str]) -> Dict[str, Set[str]]:
        names = set(leader_names)
        out: Dict[str, Set[str]] = {}
        for c in self.model.constraints:
            for vid in c.lhs.terms:
                n = self.model.vars[vid].name
                if n in names:
                    out.setdefault(n, set()).add("rhs")
        if self.objective is not None:
            for vid in self.objective.expr.terms:
                n = self.model.vars[vid].name
                if n in names:
                    out.setdefault(n, set()).add("objective")
        for _, lname, _, _ in self.coefficient_terms:
            out.setdefault(lname, set()).add("coefficient")
        return out


@dataclass(frozen=True)
class Aggregate:
    """Monotone combination of several follower values (mean, percentile, max, min)."""

    kind: str
    followers: Tuple["Placeholder", ...]
    q: float = 0.5

    def __post_init__(self):
        if self.kind not in ("mean", "percentile", "max", "min"):
            raise RewriteError(f"unknown aggregate {self.kind!r}")
        if not self.followers:
            raise RewriteError("aggregate needs at least one follower")
        if self.kind == "percentile" and not 0.0 <= self.q <= 1.0:
            raise RewriteError("percentile q must lie in [0, 1]")


Placeholder = Union[str, Aggregate]


@dataclass
class BilevelSpec:
    """Leader model (inputs + constrained set), followers and the signed objective."""

    leader: Model
    followers: List[FollowerSpec]
    objective: List[Tuple[float, Placeholder]]
    sense: str = "max"
    extra: Optional[LinExpr] = None   # additional leader-variable terms
    # leader variables already quantized in the leader model: name -> [(level, selector name)]
    selectors: Dict[str, List[Tuple[float, str]]] = field(default_factory=dict)

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise RewriteError("leader sense must be 'max' or 'min'")
        names = [f.name for f in self.followers]
        if len(set(names)) != len(names):
            raise RewriteError("follower names must be unique")
        known = set(names)
        for _, ref in self.objective:
            for n in _members(ref):
                if n not in known:
                    raise RewriteError(f"placeholder references unknown follower {n!r}")

    def follower(self, name: str) -> FollowerSpec:
        for f in self.followers:
            if f.name == name:
                return f
        raise RewriteError(f"unknown follower {name!r}")

    @property
    def leader_names(self) -> List[str]:
        return [d.name for d in self.leader.vars]


def _members(ref: Placeholder) -> Tuple[str, ...]:
    if isinstance(ref, str):
        return (ref,)
    return tuple(n for sub in ref.followers for n in _members(sub))


@dataclass
class QuantizationScheme:
    """Allowed values for leader variables; 0 is always allowed (no selector on)."""

    levels: Dict[str, List[float]] = field(default_factory=dict)
    default: Optional[List[float]] = None

    def levels_for(self, name: str) -> Optional[List[float]]:
        raw = self.levels.get(name, self.default)
        if raw is None:
            return None
        vals = sorted(set(float(v) for v in raw) | {0.0})
        return vals

    def validate(self):
        for name, vals in list(self.levels.items()) + [("*", self.default or [])]:
            if len(set(vals)) != len(vals):
                raise RewriteError(f"quantization levels for {name!r} are not distinct")


@dataclass
class RewriteChoice:
    kind: str
    scheme: Optional[QuantizationScheme] = None
    dual_bound: Optional[float] = None
    slack_bound: Optional[float] = None

    def __post_init__(self):
        if self.kind not in REWRITES:
            raise RewriteError(f"unknown rewrite {self.kind!r}")
        if self.kind == "qpd" and self.scheme is None:
            raise RewriteError("qpd needs a quantization scheme")
        if self.scheme is not None:
            self.scheme.validate()
        if self.dual_bound is not None and not self.dual_bound > 0:
            raise RewriteError("dual_bound must be positive")

    @classmethod
    def from_dict(cls, data: Mapping) -> "RewriteChoice":
        scheme = None
        if "quantiles" in data or "levels" in data:
            scheme = QuantizationScheme(dict(data.get("levels", {})), data.get("quantiles"))
        return cls(data["rewrite"], scheme, data.get("dual_bound"), data.get("slack_bound"))

    def to_dict(self) -> dict:
        out = {"rewrite": self.kind}
        if self.scheme is not None:
            if self.scheme.default is not None:
                out["quantiles"] = list(self.scheme.default)
            if self.scheme.levels:
                out["levels"] = {k: list(v) for k, v in self.scheme.levels.items()}
        if self.dual_bound is not None:
            out["dual_bound"] = self.dual_bound
        if self.slack_bound is not None:
            out["slack_bound"] = self.slack_bound
        return out


RewritePlan = Dict[str, RewriteChoice]


# ---------------------------------------------------------------------------
# alignment

def _effective_signs(bilevel: BilevelSpec, name: str) -> Set[int]:
    flip = 1 if bilevel.sense == "max" else -1
    signs = set()
    for coef, ref in bilevel.objective:
        if name in _members(ref) and coef != 0:
            signs.add(flip * (1 if coef > 0 else -1))
    return signs


def classify_alignment(bilevel: BilevelSpec, follower: Union[str, FollowerSpec]) -> str:
    f = bilevel.follower(follower if isinstance(follower, str) else follower.name)
    if f.objective is None:
        return FEASIBILITY
    signs = _effective_signs(bilevel, f.name)
    if len(signs) != 1:
        # unreferenced followers are harmless to merge; mixed signs are not
        return ALIGNED if not signs else MISALIGNED
    sign = signs.pop()
    want = 1 if f.objective.sense == "max" else -1
    return ALIGNED if sign == want else MISALIGNED


def default_plan(bilevel: BilevelSpec, misaligned: str = "kkt",
                 scheme: Optional[QuantizationScheme] = None) -> RewritePlan:
    plan = {}
    for f in bilevel.followers:
        cls = classify_alignment(bilevel, f)
        if cls == ALIGNED:
            plan[f.name] = RewriteChoice("inline")
        elif cls == FEASIBILITY:
            plan[f.name] = RewriteChoice("feasibility")
        else:
            plan[f.name] = RewriteChoice(misaligned, scheme if misaligned == "qpd" else None)
    return plan


def check_plan(bilevel: BilevelSpec, plan: RewritePlan, strict: bool = True) -> None:
    """Reject plans that break the rewrite rules.

    ``strict=False`` additionally allows optimality rewrites of aligned
    followers, which is sound but wasteful (used for cross-checks).
    """
    for f in bilevel.followers:
        if f.name not in plan:
            raise RewriteError(f"plan has no rewrite for follower {f.name!r}")
        kind = plan[f.name].kind
        cls = classify_alignment(bilevel, f)
        if kind == "inline" and cls != ALIGNED:
            raise RewriteError(f"{f.name!r} is {cls}; inline needs an aligned follower")
        if kind == "feasibility" and cls != FEASIBILITY:
            raise RewriteError(f"{f.name!r} has an objective; feasibility needs none")
        if kind in ("kkt", "pd", "qpd"):
            if cls == FEASIBILITY:
                raise RewriteError(f"{f.name!r} has no objective to rewrite")
            if cls == ALIGNED and strict:
                raise RewriteError(f"{f.name!r} is aligned; merge it instead of {kind}")
            if not f.is_lp():
                raise RewriteError(f"{f.name!r} has integer variables; {kind} needs an LP")
            if f.coefficient_terms:
                raise RewriteError(f"{f.name!r} has leader variables in coefficient position; "
                                   f"{kind} supports right-hand-side positions only")
    extra = set(plan) - {f.name for f in bilevel.followers}
    if extra:
        raise RewriteError(f"plan names unknown followers {sorted(extra)}")


# ---------------------------------------------------------------------------
# composed model

class ComposedModel(Model):
    """Single-level model plus the bookkeeping needed to read results back."""

    def __init__(self, name: str = "composed"):
        super().__init__(name)
        self.placeholders: Dict[str, LinExpr] = {}
        self.leader_names: List[str] = []
        self.var_maps: Dict[str, Dict[int, int]] = {}
        self.selectors: Dict[str, List[Tuple[float, Var]]] = {}
        self.duals: Dict[str, Dict[str, List[Var]]] = {}
        self.plan: Dict[str, dict] = {}
        self.ctx = H.BigMContext()

    def leader_values(self, sol: Solution) -> Dict[str, float]:
        return {n: sol.assignment[self.var(n).id] for n in self.leader_names}

    def follower_value(self, sol: Solution, follower: str) -> float:
        return sol.value(self.placeholders[follower])

    def follower_point(self, sol: Solution, follower: str, spec: FollowerSpec) -> Dict[str, float]:
        """Follower variable values by their original names."""
        vmap = self.var_maps[follower]
        return {spec.model.vars[fid].name: sol.assignment[cid] for fid, cid in vmap.items()}


def _start(bilevel: BilevelSpec, name: str) -> ComposedModel:
    out = ComposedModel(name)
    for d in bilevel.leader.vars:
        out.new_var(d.kind, d.lower, d.upper, d.name)
    for c in bilevel.leader.constraints:
        out.add(Constraint(c.lhs.copy(), c.sense, c.rhs, c.tag or "constrained_set"))
    out.leader_names = bilevel.leader_names
    return out


def _attach_vars(out: ComposedModel, f: FollowerSpec, leader: Set[str]) -> Dict[int, int]:
    vmap: Dict[int, int] = {}
    lmap: Dict[int, int] = {}
    for d in f.model.vars:
        if d.name in leader:
            lmap[d.id] = out.var(d.name).id
        else:
            v = out.new_var(d.kind, d.lower, d.upper, f"{f.name}.{d.name}")
            vmap[d.id] = v.id
    out.var_maps[f.name] = vmap
    return {**vmap, **lmap}


def _map(expr: LinExpr, full: Mapping[int, int]) -> LinExpr:
    out = LinExpr(constant=expr.constant)
    for vid, c in expr.terms.items():
        cid = full[vid]
        out.terms[cid] = out.terms.get(cid, 0.0) + c
    return out


def _placeholder_expr(f: FollowerSpec, full: Mapping[int, int]) -> LinExpr:
    if f.objective is not None:
        return _map(f.objective.expr, full)
    if f.output is not None:
        return _map(LinExpr.of(f.output), full)
    return LinExpr()


def _copy_rows(out: ComposedModel, f: FollowerSpec, full: Mapping[int, int], tag: str):
    rows = [_map(c.lhs, full) for c in f.model.constraints]
    for row, lname, fname, coeff in f.coefficient_terms:
        lv = out.var(lname)
        if out.vars[lv.id].kind is not VarKind.BINARY:
            raise RewriteError(f"coefficient position needs a binary leader variable, got {lname!r}")
        fv = full[f.model.var(fname).id]
        prod = H.multiply(out, lv, out.handle(fv), out.ctx)
        rows[row].iadd(prod, coeff)
    for c, lhs in zip(f.model.constraints, rows):
        out.add(Constraint(lhs, c.sense, c.rhs, f"{tag}:{f.name}:{c.tag}" if c.tag else f"{tag}:{f.name}"))


# ---------------------------------------------------------------------------
# follower LP data in composed ids

@dataclass
class _Row:
    a: Dict[int, float]       # follower coefficients
    b: LinExpr                # right-hand side as a function of leader vars
    eq: bool
    tag: str


def _follower_rows(out: ComposedModel, f: FollowerSpec, full: Mapping[int, int]):
    """Rows ``a.f <= b(I)`` (or ``==``) including finite variable bounds."""
    fids = set(out.var_maps[f.name].values())
    rows: List[_Row] = []
    for c in f.model.constraints:
        lhs = _map(c.lhs, full)
        a = {v: k for v, k in lhs.terms.items() if v in fids and k != 0.0}
        rest = LinExpr({v: -k for v, k in lhs.terms.items() if v not in fids and k != 0.0},
                       c.rhs - lhs.constant)
        if c.sense is Sense.GE:
            rows.append(_Row({v: -k for v, k in a.items()}, -rest, False, c.tag))
        else:
            rows.append(_Row(a, rest, c.sense is Sense.EQ, c.tag))
    for fid, cid in out.var_maps[f.name].items():
        d = f.model.vars[fid]
        if d.lower == d.upper:
            rows.append(_Row({cid: 1.0}, LinExpr(constant=d.lower), True, "fixed"))
            continue
        if math.isfinite(d.upper):
            rows.append(_Row({cid: 1.0}, LinExpr(constant=d.upper), False, "ub"))
        if math.isfinite(d.lower):
            rows.append(_Row({cid: -1.0}, LinExpr(constant=-d.lower), False, "lb"))
    costs: Dict[int, float] = {cid: 0.0 for cid in out.var_maps[f.name].values()}
    sign = 1.0 if f.objective.sense == "min" else -1.0
    for vid, k in f.objective.expr.terms.items():
        cid = full[vid]
        if cid in costs:
            costs[cid] += sign * k
    return rows, costs


def tighten_bounds(model: Model, rows: Sequence[_Row], ids: Iterable[int], passes: int = 20) -> None:
    """Activity-based bound tightening of follower variables (implied bounds only)."""
    ids = list(ids)
    lb = {i: model.vars[i].lower for i in ids}
    ub = {i: model.vars[i].upper for i in ids}

    def rng(i):
        return (lb[i], ub[i]) if i in lb else (model.vars[i].lower, model.vars[i].upper)

    for _ in range(passes):
        changed = False
        for r in rows:
            senses = [(r.a, r.b)] if not r.eq else [(r.a, r.b), ({v: -k for v, k in r.a.items()}, -r.b)]
            for a, b in senses:
                _, bhi = model.bounds(b)
                if not math.isfinite(bhi):
                    continue
                # minimal activity of each term
                mins = {}
                for v, k in a.items():
                    lo, hi = rng(v)
                    mins[v] = k * lo if k > 0 else k * hi
                infinite = [v for v, m in mins.items() if not math.isfinite(m)]
                if len(infinite) > 1:
                    continue
                total = sum(m for m in mins.values() if math.isfinite(m))
                for v, k in a.items():
                    if v not in lb:
                        continue
                    if infinite and infinite[0] != v:
                        continue
                    rest = total - (mins[v] if math.isfinite(mins[v]) else 0.0)
                    limit = (bhi - rest) / k
                    if k > 0 and limit < ub[v] - 1e-9:
                        ub[v] = max(limit, lb[v])
                        changed = True
                    elif k < 0 and limit > lb[v] + 1e-9:
                        lb[v] = min(limit, ub[v])
                        changed = True
        if not changed:
            break
    for i in ids:
        d = model.vars[i]
        lo, hi = lb[i], ub[i]
        if d.is_integral:
            lo, hi = math.ceil(lo - 1e-9), math.floor(hi + 1e-9)
        d.lower, d.upper = max(d.lower, lo), min(d.upper, max(hi, lo))


def default_dual_bound(rows: Sequence[_Row], costs: Mapping[int, float]) -> float:
    """max |c| * (1 + most rows any variable appears in)."""
    cmax = max((abs(c) for c in costs.values()), default=0.0)
    counts = Counter(v for r in rows for v in r.a)
    nnz = max(counts.values(), default=0)
    return max(1.0, cmax * (1 + nnz))


def _stationarity(out: ComposedModel, rows, costs, duals, tag):
    # c_j + sum_i dual_i a_ij == 0 for every follower variable
    cols: Dict[int, LinExpr] = {j: LinExpr(constant=c) for j, c in costs.items()}
    for r, y in zip(rows, duals):
        for j, k in r.a.items():
            cols[j].terms[y.id] = cols[j].terms.get(y.id, 0.0) + k
    for j, expr in cols.items():
        out.add(Constraint(LinExpr(expr.terms), Sense.EQ, -expr.constant, tag))


def _primal_rows(out: ComposedModel, f: FollowerSpec, full, tag: str):
    _copy_rows(out, f, full, tag)


def _prepare(out: ComposedModel, f: FollowerSpec, full):
    rows, costs = _follower_rows(out, f, full)
    tighten_bounds(out, rows, out.var_maps[f.name].values())
    return rows, costs


def kkt_rewrite(out: ComposedModel, f: FollowerSpec, full: Mapping[int, int],
                dual_bound: Optional[float] = None, slack_bound: Optional[float] = None) -> LinExpr:
    """Primal feasibility, stationarity and linearized complementary slackness."""
    tag = f"kkt:{f.name}"
    _primal_rows(out, f, full, tag)
    rows, costs = _prepare(out, f, full)
    m_dual = dual_bound or default_dual_bound(rows, costs)
    duals, indicators = [], []
    for i, r in enumerate(rows):
        if r.eq:
            y = out.continuous(f"{f.name}.mu{i}", -math.inf, math.inf)
            duals.append(y)
            continue
        y = out.continuous(f"{f.name}.lam{i}", 0.0, m_dual)
        duals.append(y)
        slack = r.b - LinExpr(dict(r.a))
        if slack_bound is not None:
            m_slack = slack_bound
        else:
            _, m_slack = out.bounds(slack)
            if not math.isfinite(m_slack):
                raise RewriteError(f"slack of row {i} ({r.tag}) in {f.name!r} is unbounded; "
                                   "give slack_bound or bound the variables")
        if m_slack <= 1e-12:
            continue   # row is always tight
        z = out.binary(f"{f.name}.z{i}")
        indicators.append(z)
        out.add(Constraint(LinExpr({y.id: 1.0, z.id: -m_dual}), Sense.LE, 0.0, tag + ":cs"))
        cs = slack + m_slack * LinExpr({z.id: 1.0})
        out.add(Constraint(LinExpr(cs.terms), Sense.LE, m_slack - cs.constant, tag + ":cs"))
    _stationarity(out, rows, costs, duals, tag + ":stationarity")
    out.duals[f.name] = {"duals": duals, "indicators": indicators}
    out.plan[f.name]["dual_bound"] = m_dual
    return _placeholder_expr(f, full)


@dataclass
class PrimalDual:
    duals: List[Var]
    linear: LinExpr                         # strong-duality residual without bilinear parts
    bilinear: List[Tuple[float, int, int]]  # (coeff, leader var id, dual var id)
    tag: str


def pd_rewrite(out: ComposedModel, f: FollowerSpec, full: Mapping[int, int],
               dual_bound: Optional[float] = None) -> Tuple[LinExpr, PrimalDual]:
    """Primal rows, dual feasibility, and the strong-duality equation.

    The equation is returned unfinished: its leader x dual products are listed
    in ``bilinear`` for :func:`resolve_bilinear` to linearize.
    """
    tag = f"pd:{f.name}"
    _primal_rows(out, f, full, tag)
    rows, costs = _prepare(out, f, full)
    m_dual = dual_bound or default_dual_bound(rows, costs)
    duals = []
    for i, r in enumerate(rows):
        lo = -m_dual if r.eq else 0.0
        duals.append(out.continuous(f"{f.name}.{'mu' if r.eq else 'lam'}{i}", lo, m_dual))
    _stationarity(out, rows, costs, duals, tag + ":dual")
    # c.f + sum_i y_i b_i(I) == 0
    linear = LinExpr({j: c for j, c in costs.items() if c})
    bilinear = []
    for r, y in zip(rows, duals):
        if r.b.constant:
            linear.terms[y.id] = linear.terms.get(y.id, 0.0) + r.b.constant
        for lid, k in r.b.terms.items():
            if k:
                bilinear.append((k, lid, y.id))
    out.duals[f.name] = {"duals": duals}
    out.plan[f.name]["dual_bound"] = m_dual
    return _placeholder_expr(f, full), PrimalDual(duals, linear, bilinear, tag + ":strong_duality")


def _quantize(out: ComposedModel, lid: int, levels: List[float]) -> List[Tuple[float, Var]]:
    name = out.vars[lid].name
    if name in out.selectors:
        have = [lv for lv, _ in out.selectors[name]]
        if have != [lv for lv in levels if lv != 0.0]:
            raise RewriteError(f"conflicting quantization levels for {name!r}")
        return out.selectors[name]
    d = out.vars[lid]
    for lv in levels:
        if lv < d.lower - 1e-9 or lv > d.upper + 1e-9:
            raise RewriteError(f"level {lv} outside the bounds of {name!r}")
    sel = [(lv, out.binary(f"q.{name}.{k}")) for k, lv in enumerate(levels) if lv != 0.0]
    tag = f"quantize:{name}"
    out.add(Constraint(LinExpr({x.id: 1.0 for _, x in sel}), Sense.LE, 1.0, tag))
    expr = LinExpr({lid: 1.0})
    for lv, x in sel:
        expr.terms[x.id] = expr.terms.get(x.id, 0.0) - lv
    out.add(Constraint(expr, Sense.EQ, 0.0, tag))
    out.selectors[name] = sel
    return sel


def qpd_rewrite(out: ComposedModel, f: FollowerSpec, full: Mapping[int, int],
                scheme: QuantizationScheme, dual_bound: Optional[float] = None) -> LinExpr:
    expr, pd = pd_rewrite(out, f, full, dual_bound)
    resolve_bilinear(out, pd, scheme)
    return expr


def resolve_bilinear(out: ComposedModel, pd: PrimalDual,
                     scheme: Optional[QuantizationScheme] = None) -> None:
    """Linearize leader x dual products and add the strong-duality equation.

    Fixed leader variables become constants, binary ones are multiplied
    directly, and the rest are replaced by their quantized selector sums.
    """
    total = pd.linear.copy()
    for coeff, lid, yid in pd.bilinear:
        d = out.vars[lid]
        y = out.handle(yid)
        if d.lower == d.upper:
            total.terms[yid] = total.terms.get(yid, 0.0) + coeff * d.lower
            continue
        if d.kind is VarKind.BINARY:
            total.iadd(H.multiply(out, out.handle(lid), y, out.ctx), coeff)
            continue
        levels = scheme.levels_for(d.name) if scheme is not None else None
        if levels is None:
            raise RewriteError(f"leader variable {d.name!r} multiplies a dual variable and has "
                               "no quantization levels")
        for lv, x in _quantize(out, lid, levels):
            total.iadd(H.multiply(out, x, y, out.ctx), coeff * lv)
    out.add(Constraint(LinExpr(total.terms), Sense.EQ, -total.constant, pd.tag))


def inline_follower(out: ComposedModel, f: FollowerSpec, full: Mapping[int, int]) -> LinExpr:
    """Copy the follower's rows; its objective (or output) stands in for the placeholder."""
    _copy_rows(out, f, full, "inline" if f.objective is not None else "feasibility")
    return _placeholder_expr(f, full)


# ---------------------------------------------------------------------------
# composition

def sorting_network(n: int) -> List[Tuple[int, int]]:
    """Comparators (i, j), i < j, of Batcher's odd-even merge sort for n inputs."""
    size = 1
    while size < n:
        size *= 2
    pairs = []
    p = 1
    while p < size:
        k = p
        while k >= 1:
            for j in range(k % p, size - k, 2 * k):
                for i in range(min(k, size - j - k)):
                    a, b = i + j, i + j + k
                    if a // (2 * p) == b // (2 * p):
                        pairs.append((a, b))
            k //= 2
        p *= 2
    # padding sits at the top as +inf, so comparators touching it are no-ops
    return [(a, b) for a, b in pairs if b < n]


def sorted_exprs(model: Model, exprs: Sequence[LinExpr], ctx: H.BigMContext = None) -> List[LinExpr]:
    """Ascending order statistics of ``exprs`` built from min/max comparators."""
    vals = [LinExpr.of(e) for e in exprs]
    for a, b in sorting_network(len(vals)):
        lo = H.min_of(model, [vals[a], vals[b]], None, ctx)
        hi = H.max_of(model, [vals[a], vals[b]], None, ctx)
        vals[a], vals[b] = LinExpr.of(lo), LinExpr.of(hi)
    return vals


def percentile_index(n: int, q: float) -> int:
    """0-based index of the q-quantile: the ceil(q n)-th smallest, at least the first."""
    return min(n - 1, max(0, math.ceil(q * n - 1e-12) - 1))


def _aggregate(out: ComposedModel, ref: Placeholder) -> LinExpr:
    if isinstance(ref, str):
        return out.placeholders[ref]
    parts = [_aggregate(out, sub) for sub in ref.followers]
    if ref.kind == "mean":
        return LinExpr.sum(parts) / len(parts)
    if ref.kind == "max":
        return LinExpr.of(H.max_of(out, parts, None, out.ctx))
    if ref.kind == "min":
        return LinExpr.of(H.min_of(out, parts, None, out.ctx))
    ordered = sorted_exprs(out, parts, out.ctx)
    return ordered[percentile_index(len(parts), ref.q)]


def compose(bilevel: BilevelSpec, plan: Optional[RewritePlan] = None,
            name: str = "composed", ctx: Optional[H.BigMContext] = None,
            strict: bool = True) -> ComposedModel:
    """Build the single-level model; its optimum is the largest (or smallest) leader objective."""
    plan = plan if plan is not None else default_plan(bilevel)
    check_plan(bilevel, plan, strict)
    out = _start(bilevel, name)
    if ctx is not None:
        out.ctx = ctx
    for lname, sel in bilevel.selectors.items():
        out.selectors[lname] = [(float(lv), out.var(sname)) for lv, sname in sel]
    leader = set(bilevel.leader_names)
    for f in bilevel.followers:
        choice = plan[f.name]
        out.plan[f.name] = choice.to_dict()
        out.plan[f.name]["alignment"] = classify_alignment(bilevel, f)
        full = _attach_vars(out, f, leader)
        if choice.kind in ("inline", "feasibility"):
            expr = inline_follower(out, f, full)
        elif choice.kind == "kkt":
            expr = kkt_rewrite(out, f, full, choice.dual_bound, choice.slack_bound)
        elif choice.kind == "pd":
            expr, pd = pd_rewrite(out, f, full, choice.dual_bound)
            resolve_bilinear(out, pd, choice.scheme)
        else:
            expr = qpd_rewrite(out, f, full, choice.scheme, choice.dual_bound)
        out.placeholders[f.name] = expr
    objective = LinExpr.of(bilevel.extra) if bilevel.extra is not None else LinExpr()
    for coef, ref in bilevel.objective:
        objective.iadd(_aggregate(out, ref), coef)
    if bilevel.sense == "max":
        out.maximize(objective)
    else:
        out.minimize(objective)
    return out


def compose_combination(bilevel: BilevelSpec, heuristics: Sequence[str],
                        plans: Optional[RewritePlan] = None, best: str = "max",
                        name: str = "combination", ctx: Optional[H.BigMContext] = None) -> ComposedModel:
    """Replace the heuristics' objective terms with one term on their best value.

    The combined heuristic runs every member on the same input and keeps the
    best result (``best`` is "max" or "min").  The coefficient of the first
    listed heuristic is used for the combined term.
    """
    heuristics = tuple(heuristics)
    if not heuristics:
        raise RewriteError("need at least one heuristic")
    coef = None
    terms = []
    for c, ref in bilevel.objective:
        if isinstance(ref, str) and ref in heuristics:
            if coef is None:
                coef = c
            continue
        terms.append((c, ref))
    if coef is None:
        coef = -1.0 if bilevel.sense == "max" else 1.0
    if len(heuristics) == 1:
        terms.append((coef, heuristics[0]))
    else:
        terms.append((coef, Aggregate(best, heuristics)))
    combined = BilevelSpec(bilevel.leader, bilevel.followers, terms, bilevel.sense, bilevel.extra,
                           bilevel.selectors)
    return compose(combined, plans if plans is not None else default_plan(combined), name, ctx)


def suggest_quantiles(solutions: Sequence[Mapping[str, float]], k: int,
                      upper_bounds: Mapping[str, float], digits: int = 6) -> Dict[str, List[float]]:
    """Per leader variable: the k most frequent values seen, plus 0 and the upper bound."""
    if k < 0:
        raise ValueError("k must be non-negative")
    out = {}
    for name, ub in upper_bounds.items():
        counts = Counter(round(float(s[name]), digits) for s in solutions if name in s)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        vals = {v for v, _ in ranked[:k]} | {0.0, float(ub)}
        out[name] = sorted(vals)
    return out

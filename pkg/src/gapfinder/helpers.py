"""Big-M encodings of common conditional patterns.

Every helper appends constraints to a model and returns the new variable(s).
M values are computed per expression from variable bounds; variables with an
infinite declared bound need an entry in ``BigMContext.magnitude``.  Each
emitted constraint carries the helper name in its tag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .model import LinExpr, Model, ModelError, Operand, Var, VarKind


@dataclass
class BigMContext:
    """Per-variable magnitude overrides and the strict-inequality slack."""

    magnitude: Dict[int, float] = field(default_factory=dict)
    epsilon: float = 1e-4

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ModelError("epsilon must be positive")
        for vid, m in self.magnitude.items():
            if not (m > 0 and math.isfinite(m)):
                raise ModelError(f"magnitude for variable {vid} must be finite and positive")

    def var_range(self, model: Model, vid: int) -> Tuple[float, float]:
        d = model.vars[vid]
        lo, hi = d.lower, d.upper
        m = self.magnitude.get(vid)
        if m is not None:
            lo, hi = max(lo, -m), min(hi, m)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ModelError(f"missing magnitude for unbounded variable {d.name!r}")
        return lo, hi

    def interval(self, model: Model, item: Operand) -> Tuple[float, float]:
        expr = LinExpr.of(item)
        lo = hi = expr.constant
        for vid, coeff in expr.terms.items():
            vlo, vhi = self.var_range(model, vid)
            if coeff >= 0:
                lo += coeff * vlo
                hi += coeff * vhi
            else:
                lo += coeff * vhi
                hi += coeff * vlo
        return lo, hi


_DEFAULT = BigMContext()


def _ctx(ctx: Optional[BigMContext]) -> BigMContext:
    return _DEFAULT if ctx is None else ctx


def _tag(helper: str, name: Optional[str]) -> str:
    return f"{helper}:{name}" if name else helper


def _const(expr: LinExpr) -> Optional[float]:
    return expr.constant if not expr.normalized().terms else None


def _fixed_binary(model: Model, value: float, name=None) -> Var:
    return model.new_var(VarKind.BINARY, value, value, name)


def is_leq(model: Model, x: Operand, y: Operand, ctx: BigMContext = None, name: str = None) -> Var:
    """Binary b with b = 1 iff x <= y; x - y in (0, epsilon) is excluded."""
    ctx = _ctx(ctx)
    tag = _tag("is_leq", name)
    diff = LinExpr.of(x) - LinExpr.of(y)
    lo, hi = ctx.interval(model, diff)
    b = model.binary(name)
    eps = ctx.epsilon
    # b = 1  =>  diff <= 0
    if hi > 0:
        model.add_le(diff + hi * b, hi, tag)
    # b = 0  =>  diff >= eps
    if lo < eps:
        model.add_ge(diff + (eps - lo) * b, eps, tag)
    return b


def and_(model: Model, us: Sequence[Operand], name: str = None) -> Var:
    tag = _tag("and", name)
    us = [LinExpr.of(u) for u in us]
    if not us:
        return _fixed_binary(model, 1.0, name)
    b = model.binary(name)
    if len(us) == 1:
        model.add_eq(b, us[0], tag)
        return b
    for u in us:
        model.add_le(b, u, tag)
    model.add_ge(b, LinExpr.sum(us) - (len(us) - 1), tag)
    return b


def or_(model: Model, us: Sequence[Operand], name: str = None) -> Var:
    tag = _tag("or", name)
    us = [LinExpr.of(u) for u in us]
    if not us:
        return _fixed_binary(model, 0.0, name)
    b = model.binary(name)
    if len(us) == 1:
        model.add_eq(b, us[0], tag)
        return b
    for u in us:
        model.add_ge(b, u, tag)
    model.add_le(b, LinExpr.sum(us), tag)
    return b


def all_leq(model: Model, xs: Sequence[Operand], bound: float, ctx: BigMContext = None,
            name: str = None) -> Var:
    """b = 1 iff every x_i <= bound."""
    flags = [is_leq(model, x, bound, ctx) for x in xs]
    return and_(model, flags, name)


def all_eq(model: Model, xs: Sequence[Operand], value: float, ctx: BigMContext = None,
           name: str = None) -> Var:
    """b = 1 iff every x_i == value (within epsilon on both sides)."""
    flags = []
    for x in xs:
        flags.append(is_leq(model, x, value, ctx))
        flags.append(is_leq(model, value, x, ctx))
    return and_(model, flags, name)


def _pin_when(model: Model, active: LinExpr, x: Operand, f: Operand, ctx: BigMContext, tag: str):
    """active = 1  =>  x == f; active is a 0/1 expression."""
    diff = LinExpr.of(x) - LinExpr.of(f)
    lo, hi = ctx.interval(model, diff)
    idle = 1 - active
    # rows whose big-M side is never binding are skipped
    if hi > 0:
        model.add_le(diff - hi * idle, 0.0, tag)
    if lo < 0:
        model.add_ge(diff - lo * idle, 0.0, tag)


def if_then(model: Model, b: Operand, pairs: Iterable[Tuple[Operand, Operand]],
            ctx: BigMContext = None, name: str = None) -> None:
    """b = 1 forces x = F for every pair; b = 0 leaves them free."""
    ctx = _ctx(ctx)
    tag = _tag("if_then", name)
    active = LinExpr.of(b)
    for x, f in pairs:
        _pin_when(model, active, x, f, ctx, tag)


def if_then_else(model: Model, b: Operand, then_pairs, else_pairs,
                 ctx: BigMContext = None, name: str = None) -> None:
    ctx = _ctx(ctx)
    tag = _tag("if_then_else", name)
    active = LinExpr.of(b)
    for x, f in then_pairs:
        _pin_when(model, active, x, f, ctx, tag)
    for x, f in else_pairs:
        _pin_when(model, 1 - active, x, f, ctx, tag)


def multiply(model: Model, b: Operand, x: Operand, ctx: BigMContext = None,
             name: str = None) -> Var:
    """y = b * x for binary b and bounded x."""
    ctx = _ctx(ctx)
    tag = _tag("multiply", name)
    b = LinExpr.of(b)
    x = LinExpr.of(x)
    lo, hi = ctx.interval(model, x)
    y = model.continuous(name, min(lo, 0.0), max(hi, 0.0))
    model.add_le(y - hi * b, 0.0, tag)              # y <= hi * b
    model.add_ge(y - x - hi * b, -hi, tag)          # y >= x - hi * (1 - b)
    if lo >= 0:
        # y >= lo * b and y <= x - lo * (1 - b) collapse to y >= 0 (bound) and y <= x
        model.add_le(y - x, 0.0, tag)
        return y
    model.add_ge(y - lo * b, 0.0, tag)              # y >= lo * b
    model.add_le(y - x - lo * b, -lo, tag)          # y <= x - lo * (1 - b)
    return y


def _extremum(model: Model, xs, constant, ctx, name, largest: bool):
    helper = "max_of" if largest else "min_of"
    tag = _tag(helper, name)
    items = [LinExpr.of(x) for x in xs]
    if constant is not None:
        items.append(LinExpr.of(float(constant)))
    if not items:
        raise ModelError(f"{helper} needs at least one operand")
    ranges = [ctx.interval(model, e) for e in items]
    if largest:
        ylo, yhi = max(r[0] for r in ranges), max(r[1] for r in ranges)
    else:
        ylo, yhi = min(r[0] for r in ranges), min(r[1] for r in ranges)
    y = model.continuous(name, ylo, yhi)
    if len(items) == 1:
        model.add_eq(y, items[0], tag)
        return y
    selectors = []
    for e, (lo, hi) in zip(items, ranges):
        s = model.binary()
        selectors.append(s)
        if largest:
            model.add_ge(y - e, 0.0, tag)
            slack = yhi - lo
            if slack > 0:
                model.add_le(y - e + slack * s, slack, tag)   # s = 1 => y <= e
        else:
            model.add_le(y - e, 0.0, tag)
            slack = hi - ylo
            if slack > 0:
                model.add_ge(y - e - slack * s, -slack, tag)  # s = 1 => y >= e
    model.add_eq(LinExpr.sum(selectors), 1.0, tag)
    return y


def max_of(model: Model, xs: Sequence[Operand], constant: Optional[float] = None,
           ctx: BigMContext = None, name: str = None) -> Var:
    """y = max(xs..., constant) using one selector binary per operand."""
    return _extremum(model, xs, constant, _ctx(ctx), name, True)


def min_of(model: Model, xs: Sequence[Operand], constant: Optional[float] = None,
           ctx: BigMContext = None, name: str = None) -> Var:
    return _extremum(model, xs, constant, _ctx(ctx), name, False)


def _find_extreme(model: Model, xs, us, ctx, name, largest: bool) -> List[Var]:
    helper = "find_largest_value" if largest else "find_smallest_value"
    tag = _tag(helper, name)
    if len(xs) != len(us):
        raise ModelError(f"{helper}: xs and us differ in length")
    xs = [LinExpr.of(x) for x in xs]
    us = [LinExpr.of(u) for u in us]
    ranges = [ctx.interval(model, x) for x in xs]
    bs = [model.binary(f"{name}_{i}" if name else None) for i in range(len(xs))]
    for b, u in zip(bs, us):
        model.add_le(b - u, 0.0, tag)
    for j, u in enumerate(us):
        if _const(u) == 0.0:
            continue
        # some chosen item whenever a member is present
        model.add_ge(LinExpr.sum(bs) - u, 0.0, tag)
        for i in range(len(xs)):
            if i == j:
                continue
            # b_i = 1 and u_j = 1  =>  x_i beats x_j
            if largest:
                diff = xs[j] - xs[i]
                m = ranges[j][1] - ranges[i][0]
            else:
                diff = xs[i] - xs[j]
                m = ranges[i][1] - ranges[j][0]
            if m <= 0:
                continue
            model.add_le(diff + m * bs[i] + m * u, 2 * m, tag)
    return bs


def find_largest_value(model: Model, xs: Sequence[Operand], us: Sequence[Operand],
                       ctx: BigMContext = None, name: str = None) -> List[Var]:
    """b_i may be 1 only for members (u_i = 1) attaining the group max; at least one is 1.

    When no member is present every b_i is 0 and no further requirement applies.
    """
    return _find_extreme(model, xs, us, _ctx(ctx), name, True)


def find_smallest_value(model: Model, xs: Sequence[Operand], us: Sequence[Operand],
                        ctx: BigMContext = None, name: str = None) -> List[Var]:
    return _find_extreme(model, xs, us, _ctx(ctx), name, False)


def rank(model: Model, y: Operand, xs: Sequence[Operand], ctx: BigMContext = None,
         name: str = None) -> Var:
    """Integer r = number of x_i with x_i <= y (ties count)."""
    tag = _tag("rank", name)
    flags = [is_leq(model, x, y, ctx) for x in xs]
    r = model.integer(name, 0, len(flags))
    model.add_eq(r - LinExpr.sum(flags), 0.0, tag)
    return r


def force_to_zero_if_leq(model: Model, v: Operand, x: Operand, y: Operand,
                         ctx: BigMContext = None, name: str = None) -> None:
    """x <= y forces v = 0; otherwise v keeps only its own bounds.

    ``v`` may be a binary variable (one row, no auxiliary binary) or any
    bounded linear expression.
    """
    ctx = _ctx(ctx)
    tag = _tag("force_to_zero_if_leq", name)
    eps = ctx.epsilon
    diff = LinExpr.of(x) - LinExpr.of(y)
    lo, _ = ctx.interval(model, diff)
    v = LinExpr.of(v)
    single = v.normalized()
    binary_v = (len(single.terms) == 1 and single.constant == 0.0
                and next(iter(single.terms.values())) == 1.0
                and model.vars[next(iter(single.terms))].kind is VarKind.BINARY)
    if binary_v:
        # v = 1 requires x - y >= eps
        if lo < eps:
            model.add_ge(diff - (eps - lo) * v, lo, tag)
        return
    vlo, vhi = ctx.interval(model, v)
    g = model.binary(name)
    if lo < eps:
        model.add_ge(diff - (eps - lo) * g, lo, tag)   # g = 1 => diff >= eps
    if vhi > 0:
        model.add_le(v - vhi * g, 0.0, tag)
    elif vhi < 0:
        model.add_le(v, 0.0, tag)
    if vlo < 0:
        model.add_ge(v - vlo * g, 0.0, tag)
    elif vlo > 0:
        model.add_ge(v, 0.0, tag)

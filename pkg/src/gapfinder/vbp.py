"""Vector bin packing: first-fit-decreasing, its feasibility encoding and the optimal MILP."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import helpers as H
from .model import LinExpr, Model, ModelError, Status, Var
from .report import REPLAY_TOL, GapReport, best_so_far
from .rewrite import BilevelSpec, FollowerSpec, compose, default_plan
from .solver import SolveParams, solve_milp

WEIGHTS = ("sum", "prod", "div")
FIT_TOL = 1e-9


def weight(size: Sequence[float], fn: str = "sum") -> float:
    """Scalar sort key of one ball: coordinate sum, product, or first/second ratio."""
    if fn == "sum":
        return float(sum(size))
    if fn == "prod":
        return float(np.prod(size))
    if fn == "div":
        if len(size) != 2:
            raise ValueError("the ratio weight needs exactly two dimensions")
        return math.inf if size[1] == 0 else float(size[0]) / float(size[1])
    raise ValueError(f"unknown weight function {fn!r}")


@dataclass
class VbpInstance:
    dims: int
    balls: List[List[float]]
    bins: Optional[List[List[float]]] = None     # default: one unit bin per ball
    weight_fn: str = "sum"

    def __post_init__(self):
        if self.dims < 1:
            raise ValueError("dims must be at least 1")
        if self.weight_fn not in WEIGHTS:
            raise ValueError(f"unknown weight function {self.weight_fn!r}")
        if self.weight_fn == "div" and self.dims != 2:
            raise ValueError("the ratio weight needs exactly two dimensions")
        self.balls = [[float(v) for v in b] for b in self.balls]
        if self.bins is None:
            self.bins = [[1.0] * self.dims for _ in range(max(1, len(self.balls)))]
        self.bins = [[float(v) for v in b] for b in self.bins]
        for b in self.balls:
            if len(b) != self.dims or any(v < 0 for v in b):
                raise ValueError(f"bad ball size {b}")
        for c in self.bins:
            if len(c) != self.dims or any(v <= 0 for v in c):
                raise ValueError(f"bad bin capacity {c}")

    def to_dict(self) -> dict:
        return {"dims": self.dims, "bins": self.bins, "balls": self.balls, "weight_fn": self.weight_fn}

    @classmethod
    def from_dict(cls, data: dict) -> "VbpInstance":
        return cls(int(data["dims"]), data["balls"], data.get("bins"), data.get("weight_fn", "sum"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "VbpInstance":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def ffd_order(balls: Sequence[Sequence[float]], fn: str = "sum") -> List[int]:
    """Ball indices by weight descending, ties by index ascending."""
    # rounding keeps float noise (0.91 + 0.01 vs 0.92) from breaking ties
    keys = [round(weight(b, fn), 9) if math.isfinite(weight(b, fn)) else math.inf for b in balls]
    return sorted(range(len(balls)), key=lambda i: (-keys[i], i))


def ffd_simulate(instance: VbpInstance, balls: Optional[Sequence[Sequence[float]]] = None,
                 presorted: bool = False) -> Tuple[List[int], int]:
    """First-fit decreasing: (bin index per ball, number of bins used)."""
    balls = instance.balls if balls is None else [[float(v) for v in b] for b in balls]
    order = list(range(len(balls))) if presorted else ffd_order(balls, instance.weight_fn)
    residual = [list(c) for c in instance.bins]
    assign = [-1] * len(balls)
    for i in order:
        for j, r in enumerate(residual):
            if all(r[d] - balls[i][d] >= -FIT_TOL for d in range(instance.dims)):
                for d in range(instance.dims):
                    r[d] -= balls[i][d]
                assign[i] = j
                break
        else:
            raise ModelError(f"ball {i} fits in no bin")
    return assign, len(set(assign))


def _set_partitions(n: int):
    """All partitions of range(n) as lists of blocks (restricted growth strings)."""
    if n == 0:
        yield []
        return
    for rest in _set_partitions(n - 1):
        for k in range(len(rest)):
            yield rest[:k] + [rest[k] + [n - 1]] + rest[k + 1:]
        yield rest + [[n - 1]]


def opt_bins_bruteforce(instance: VbpInstance) -> int:
    """Fewest unit-capacity bins by enumerating set partitions (small n only)."""
    cap = instance.bins[0]
    if any(c != cap for c in instance.bins):
        raise ValueError("enumeration assumes identical bins")
    best = len(instance.balls)
    for part in _set_partitions(len(instance.balls)):
        if len(part) >= best:
            continue
        if all(all(sum(instance.balls[i][d] for i in blk) <= cap[d] + FIT_TOL for d in range(instance.dims))
               for blk in part):
            best = len(part)
    return best if instance.balls else 0


def ball_name(i: int, d: int) -> str:
    return f"Y[{i}][{d}]"


def _mirror(fm: Model, name: str, upper: float) -> Var:
    return fm.var(name) if fm.has_var(name) else fm.continuous(name, 0.0, upper)


@dataclass
class FfdEncodingVars:
    alpha: List[List[Var]]
    fit: List[List[Var]]
    alloc: List[List[List[Var]]]
    used: List[Var]
    bins_used: LinExpr


def ffd_feasibility_constraints(model: Model, instance: VbpInstance,
                                sizes: Optional[List[List[Var]]] = None,
                                ctx: Optional[H.BigMContext] = None) -> FfdEncodingVars:
    """First-fit over balls in index order (the caller keeps them sorted).

    ``sizes`` are the ball-size variables (created as fixed constants from the
    instance when omitted).  Every feasible completion reproduces the FFD run.
    """
    n, nb, D = len(instance.balls), len(instance.bins), instance.dims
    if sizes is None:
        sizes = [[model.continuous(ball_name(i, d), instance.balls[i][d], instance.balls[i][d])
                  for d in range(D)] for i in range(n)]
    ctx = ctx or H.BigMContext()
    alpha = [[model.binary(f"alpha[{i}][{j}]") for j in range(nb)] for i in range(n)]
    alloc = [[[model.continuous(f"x[{i}][{j}][{d}]", 0.0, instance.bins[j][d]) for d in range(D)]
              for j in range(nb)] for i in range(n)]
    fit: List[List[Var]] = []
    for i in range(n):
        row = []
        for j in range(nb):
            # residual after placing ball i in bin j: C_j - Y_i - sum_{u<i} x_uj
            neg_res = []
            for d in range(D):
                r = LinExpr(constant=instance.bins[j][d]) - sizes[i][d]
                for u in range(i):
                    r = r - alloc[u][j][d]
                neg_res.append(-r)
            # fit: every dimension keeps a non-negative residual (exact zero fits)
            row.append(H.all_leq(model, neg_res, 0.0, ctx, f"fit[{i}][{j}]"))
        fit.append(row)
        for j in range(nb):
            # alpha_ij * (j+1) <= f_ij + sum_{k<j} (1 - f_ik)
            rhs = LinExpr.of(row[j]) + LinExpr.sum(1 - row[k] for k in range(j))
            model.add_le((j + 1) * alpha[i][j] - rhs, 0.0, f"first_fit[{i}][{j}]")
        model.add_eq(LinExpr.sum(alpha[i]), 1.0, f"assign[{i}]")
        for d in range(D):
            for j in range(nb):
                model.add_le(alloc[i][j][d] - instance.bins[j][d] * alpha[i][j], 0.0, f"alloc[{i}][{j}]")
            model.add_eq(LinExpr.sum(alloc[i][j][d] for j in range(nb)) - sizes[i][d], 0.0,
                         f"alloc_sum[{i}][{d}]")
    used = []
    for j in range(nb):
        u = model.binary(f"used[{j}]")
        for i in range(n):
            model.add_ge(u - alpha[i][j], 0.0, f"used[{j}]")
        model.add_le(u - LinExpr.sum(alpha[i][j] for i in range(n)), 0.0, f"used[{j}]")
        used.append(u)
    return FfdEncodingVars(alpha, fit, alloc, used, LinExpr.sum(used))


def ffd_follower(instance: VbpInstance, upper: float, name: str = "ffd") -> FollowerSpec:
    fm = Model(name)
    sizes = [[_mirror(fm, ball_name(i, d), upper) for d in range(instance.dims)]
             for i in range(len(instance.balls))]
    enc = ffd_feasibility_constraints(fm, instance, sizes)
    return FollowerSpec(name, fm, output=enc.bins_used)


def vbp_opt_constraints(model: Model, instance: VbpInstance, sizes: List[List[Var]],
                        ctx: Optional[H.BigMContext] = None) -> LinExpr:
    """Assignment MILP for the fewest bins; returns the bins-used expression."""
    n, nb, D = len(instance.balls), len(instance.bins), instance.dims
    ctx = ctx or H.BigMContext()
    y = [[model.binary(f"y[{i}][{j}]") for j in range(nb)] for i in range(n)]
    u = [model.binary(f"open[{j}]") for j in range(nb)]
    for i in range(n):
        model.add_eq(LinExpr.sum(y[i]), 1.0, f"opt_assign[{i}]")
    for j in range(nb):
        for d in range(D):
            load = LinExpr()
            for i in range(n):
                lo, hi = model.bounds(sizes[i][d])
                if lo == hi:
                    load.iadd(y[i][j], lo)
                else:
                    load.iadd(H.multiply(model, y[i][j], sizes[i][d], ctx))
            model.add_le(load - instance.bins[j][d] * u[j], 0.0, f"opt_capacity[{j}][{d}]")
        for i in range(n):
            model.add_le(y[i][j] - u[j], 0.0, f"opt_open[{j}]")
    if all(c == instance.bins[0] for c in instance.bins):
        for j in range(nb - 1):
            model.add_ge(u[j] - u[j + 1], 0.0, "opt_symmetry")
    return LinExpr.sum(u)


def vbp_opt_milp(instance: VbpInstance, upper: float = 1.0, name: str = "opt") -> FollowerSpec:
    fm = Model(name)
    sizes = [[_mirror(fm, ball_name(i, d), upper) for d in range(instance.dims)]
             for i in range(len(instance.balls))]
    fm.minimize(vbp_opt_constraints(fm, instance, sizes))
    return FollowerSpec(name, fm)


def opt_bins(instance: VbpInstance, params: Optional[SolveParams] = None) -> int:
    """Exact optimum for fixed sizes (enumeration up to 7 balls, MILP beyond)."""
    if not instance.balls:
        return 0
    if len(instance.balls) <= 7 and all(c == instance.bins[0] for c in instance.bins):
        return opt_bins_bruteforce(instance)
    m = Model("vbp-opt")
    sizes = [[m.continuous(ball_name(i, d), v, v) for d, v in enumerate(b)]
             for i, b in enumerate(instance.balls)]
    m.minimize(vbp_opt_constraints(m, instance, sizes))
    sol, _ = solve_milp(m.freeze(), params or SolveParams(backend="highs"))
    if sol.status is not Status.OPTIMAL:
        raise ModelError(f"optimal bin packing ended {sol.status.value}")
    return int(round(sol.objective))


def granularity_constraints(model: Model, balls: Sequence[Sequence[Var]], quantum: float) -> None:
    """Each size equals quantum times a bounded integer."""
    if not quantum > 0:
        raise ValueError("quantum must be positive")
    for row in balls:
        for v in row:
            lo, hi = model.bounds(v)
            k = model.integer(f"steps.{model.vars[v.id].name}", math.ceil(lo / quantum - 1e-9),
                              math.floor(hi / quantum + 1e-9))
            model.add_eq(v - quantum * k, 0.0, "granularity")


# the construction's ball types: (size, multiplicity key)
_TYPES = {
    1: [0.92, 0.00], 2: [0.91, 0.01], 3: [0.48, 0.20], 4: [0.68, 0.00], 5: [0.52, 0.12],
    6: [0.32, 0.32], 7: [0.19, 0.45], 8: [0.42, 0.22], 9: [0.10, 0.54], 10: [0.10, 0.54],
    11: [0.10, 0.53], 12: [0.06, 0.48], 13: [0.07, 0.47], 14: [0.01, 0.53], 15: [0.03, 0.51],
}


def theorem2_construct(m: int, p: int) -> VbpInstance:
    """2-d instance with 6m + 9p balls, OPT = 2m + 3p and FFDSum = 4m + 6p."""
    if m < 0 or p < 0 or m + p < 1:
        raise ValueError("need m >= 0, p >= 0 and m + p >= 1")
    seq = [1] * m + [2] * m + [3, 4, 5, 6] * p + [7, 8] * p + [9] * p + [10] * p + [11] * p
    seq += [12] * m + [13] * m + [14] * m + [15] * m
    return VbpInstance(2, [list(_TYPES[t]) for t in seq], None, "sum")


@dataclass
class VbpAnalysis:
    """Search ball sizes that make FFD use many more bins than the optimum."""

    balls: int = 6
    dims: int = 2
    weight_fn: str = "sum"
    capacity: float = 1.0
    bins: Optional[int] = None             # bins available to FFD (default: one per ball)
    opt_bins: Optional[int] = None         # constrain the optimum to at most this many bins
    granularity: Optional[float] = None
    strict_order: Optional[bool] = None    # default: strict when granularity is set
    objective_mode: str = "max_gap"
    min_size: float = 0.0

    def __post_init__(self):
        if self.balls < 1:
            raise ValueError("need at least one ball")
        if self.weight_fn != "sum":
            # the decreasing-weight ordering is linear only for the coordinate sum
            raise ValueError("the encoding supports the coordinate-sum weight only")
        if self.objective_mode not in ("max_gap", "min_gap"):
            raise ValueError(f"unknown objective mode {self.objective_mode!r}")

    def template(self) -> VbpInstance:
        nb = self.bins or self.balls
        return VbpInstance(self.dims, [[0.0] * self.dims] * self.balls,
                           [[self.capacity] * self.dims for _ in range(nb)], self.weight_fn)

    def to_dict(self) -> dict:
        return {"balls": self.balls, "dims": self.dims, "weight_fn": self.weight_fn,
                "capacity": self.capacity, "bins": self.bins or self.balls,
                "opt_bins": self.opt_bins, "granularity": self.granularity,
                "strict_order": self._strict(), "objective_mode": self.objective_mode}

    def _strict(self) -> bool:
        return self.granularity is not None if self.strict_order is None else self.strict_order

    def build(self):
        inst = self.template()
        leader = Model("vbp-leader")
        sizes = [[leader.continuous(ball_name(i, d), self.min_size, self.capacity)
                  for d in range(self.dims)] for i in range(self.balls)]
        if self.granularity:
            granularity_constraints(leader, sizes, self.granularity)
        gap = self.granularity if self._strict() else 0.0
        if self._strict() and not gap:
            gap = 1e-3
        for i in range(self.balls - 1):
            leader.add_ge(LinExpr.sum(sizes[i]) - LinExpr.sum(sizes[i + 1]), gap, "decreasing_weight")
        followers = [ffd_follower(inst, self.capacity, "ffd"), vbp_opt_milp(inst, self.capacity, "opt")]
        sense = "max" if self.objective_mode == "max_gap" else "min"
        # the gap is FFD minus OPT: the heuristic uses more bins than the optimum
        bilevel = BilevelSpec(leader, followers, [(1.0, "ffd"), (-1.0, "opt")], sense)
        return bilevel, default_plan(bilevel)

    def compose(self):
        bilevel, plan = self.build()
        model = compose(bilevel, plan, "vbp")
        if self.opt_bins is not None:
            model.add_le(model.placeholders["opt"], float(self.opt_bins), "opt_bins")
        return model

    def evaluate(self, balls: Sequence[Sequence[float]]) -> Tuple[float, float, float]:
        """(gap, FFD bins, optimal bins) by direct computation."""
        inst = VbpInstance(self.dims, [list(b) for b in balls],
                           [[self.capacity] * self.dims for _ in range(self.bins or len(balls))],
                           self.weight_fn)
        _, ffd = ffd_simulate(inst)
        opt = opt_bins(inst)
        return float(ffd - opt), float(ffd), float(opt)

    def clean_balls(self, values: Dict[str, float]) -> List[List[float]]:
        out = []
        for i in range(self.balls):
            row = []
            for d in range(self.dims):
                v = values[ball_name(i, d)]
                v = round(v / self.granularity) * self.granularity if self.granularity else round(v, 9)
                row.append(min(max(round(v, 12), 0.0), self.capacity))
            out.append(row)
        return out

    def solve(self, params: Optional[SolveParams] = None) -> GapReport:
        params = params or SolveParams()
        model = self.compose()
        model.freeze()
        sol, report = solve_milp(model, params)
        sign = "max" if self.objective_mode == "max_gap" else "min"
        solver = dict(report.to_dict(), bound=sol.bound, mip_gap=sol.mip_gap, params=params.to_dict(),
                      variables=len(model.vars), constraints=len(model.constraints),
                      integral=model.num_integral)
        solver.pop("incumbent_history", None)
        series = best_so_far(report.incumbent_history, sign)
        if not sol.has_point:
            return GapReport("vbp", "ffd", "opt", "composed", math.nan, math.nan, math.nan, "balls", [],
                             sol.status.value, False, math.nan, solver, series, self.to_dict())
        balls = self.clean_balls(model.leader_values(sol))
        gap, ffd, opt = self.evaluate(balls)
        validated = abs(gap - sol.objective) <= REPLAY_TOL
        if self.opt_bins is not None and opt > self.opt_bins:
            validated = False
        # the report's "opt" field is the reference (optimal bins), "heuristic" the FFD bins
        return GapReport("vbp", "ffd", "opt", "composed", gap, opt, ffd, "balls", balls,
                         sol.status.value, validated, sol.objective, solver, series, self.to_dict(),
                         {"ratio": ffd / opt if opt else math.nan})

    def search_space(self):
        n = self.balls * self.dims
        return (list(range(n)), np.full(n, self.min_size), np.full(n, self.capacity))


def vbp_result(instance: VbpInstance) -> dict:
    assign, ffd = ffd_simulate(instance)
    opt = opt_bins(instance)
    return {"ffd_bins": ffd, "opt_bins": opt, "ratio": ffd / opt if opt else None,
            "assignment": assign}

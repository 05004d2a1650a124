"""Best-bound branch and bound over LP relaxations.

Node order is (bound, creation index) so runs are reproducible; branching
picks the most fractional integral variable, lowest id on ties.  Every node
box is tightened by activity-based propagation before its LP is solved, and a
rounding dive looks for an incumbent while none is known.
"""

from __future__ import annotations

import heapq
import math
import time
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from ..model import INT_TOL, Model, Solution, Status
from .params import SolveParams, SolverReport
from .propagate import Propagator
from .simplex import simplex
from .standard import MatrixForm, to_matrix


class _Relaxation:
    def __init__(self, form: MatrixForm, engine: str):
        self.form = form
        self.engine = engine
        self.iterations = 0
        if engine == "simplex":
            self.A = form.dense_A
        else:
            A = form.A
            le = form.senses == "<="
            ge = form.senses == ">="
            eq = form.senses == "=="
            ub_rows = np.concatenate([np.flatnonzero(le), np.flatnonzero(ge)])
            sign = np.concatenate([np.ones(le.sum()), -np.ones(ge.sum())])
            self.A_ub = A[ub_rows].multiply(sign[:, None]).tocsr() if len(ub_rows) else None
            self.b_ub = form.b[ub_rows] * sign if len(ub_rows) else None
            self.A_eq = A[np.flatnonzero(eq)] if eq.any() else None
            self.b_eq = form.b[eq] if eq.any() else None

    def solve(self, lb, ub) -> Tuple[str, Optional[np.ndarray], float]:
        f = self.form
        # propagated continuous bounds carry a safety margin; the LP keeps the originals
        lb = np.where(f.integral, lb, f.lb)
        ub = np.where(f.integral, ub, f.ub)
        if np.any(lb > ub + 1e-9):
            return "infeasible", None, math.inf
        if self.engine == "simplex":
            res = simplex(f.c, self.A, f.b, f.senses, lb, ub)
            self.iterations += res.iterations
            return res.status, res.x, res.objective
        bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u)
                  for l, u in zip(lb, ub)]
        res = linprog(f.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=bounds, method="highs")
        self.iterations += int(getattr(res, "nit", 0) or 0)
        if res.status == 0:
            return "optimal", res.x, float(res.fun)
        if res.status == 3:
            return "unbounded", None, -math.inf
        return "infeasible", None, math.inf


def _pick_branch(x: np.ndarray, integral: np.ndarray) -> int:
    frac = np.abs(x - np.round(x))
    frac[~integral] = 0.0
    frac[frac <= INT_TOL] = 0.0
    if not frac.any():
        return -1
    # distance to 0.5: most fractional first, argmin keeps lowest id on ties
    score = np.where(frac > 0, np.abs(frac - 0.5), np.inf)
    return int(np.argmin(score))


def branch_and_bound(model: Model, params: SolveParams) -> Tuple[Solution, SolverReport]:
    form = to_matrix(model)
    report = SolverReport(backend="builtin")
    start = time.perf_counter()
    relax = _Relaxation(form, params.lp_engine)
    integral = form.integral

    def elapsed():
        return time.perf_counter() - start

    prop = Propagator(form)
    box = prop.run(form.lb, form.ub)
    if box is None:
        status, x, val = "infeasible", None, math.inf
        root_lb, root_ub = form.lb.copy(), form.ub.copy()
    else:
        root_lb, root_ub = box
        status, x, val = relax.solve(root_lb.copy(), root_ub.copy())
    report.nodes_explored = 1
    if status == "infeasible":
        report.wall_time = elapsed()
        report.lp_iterations = relax.iterations
        report.stop_reason = "infeasible"
        return Solution({}, math.nan, Status.INFEASIBLE, math.nan, math.inf), report
    if status == "unbounded":
        report.wall_time = elapsed()
        report.lp_iterations = relax.iterations
        report.stop_reason = "unbounded"
        return Solution({}, form.sign * -math.inf, Status.UNBOUNDED, math.nan, math.inf), report

    inc_val = math.inf          # internal (minimization) incumbent value
    inc_x: Optional[np.ndarray] = None
    counter = 0
    heap = [(val, counter, root_lb, root_ub, x)]
    stop_reason = ""

    def tol_gap(bound):
        if inc_x is None:
            return math.inf
        return (inc_val - bound) / max(abs(inc_val), 1e-10)

    def record(xv, v):
        nonlocal inc_val, inc_x
        snapped = xv.copy()
        snapped[integral] = np.round(snapped[integral])
        value = float(form.c @ snapped)
        if inc_x is not None and value >= inc_val:
            return
        inc_x = snapped
        inc_val = value
        report.incumbent_history.append((elapsed(), form.user_objective(inc_val)))

    def early_stop() -> bool:
        w = params.early_stop_window
        if w is None or inc_x is None:
            return False
        now = elapsed()
        if now < w:
            return False
        past = None
        for t, obj in report.incumbent_history:
            if t <= now - w:
                past = obj
        if past is None:
            return False
        current = report.incumbent_history[-1][1]
        return abs(current - past) < params.early_stop_progress * abs(current)

    def dive(lb, ub, x, budget: int) -> None:
        """Fix the least fractional variable to its rounding, propagate, re-solve."""
        for _ in range(budget):
            if elapsed() > params.time_limit:
                return
            frac = np.abs(x - np.round(x))
            frac[~integral] = -1.0
            frac[frac <= INT_TOL] = -1.0
            cand = np.flatnonzero(frac >= 0)
            if not len(cand):
                record(x, 0.0)
                return
            j = int(cand[np.argmin(frac[cand])])
            first = math.floor(x[j] + 0.5)
            for value in (first, math.floor(x[j]) if first > x[j] else math.ceil(x[j])):
                clb, cub = lb.copy(), ub.copy()
                clb[j] = cub[j] = value
                box = prop.run(clb, cub)
                if box is None:
                    continue
                st, cx, cval = relax.solve(box[0].copy(), box[1].copy())
                report.nodes_explored += 1
                if st == "optimal" and cval < inc_val - 1e-9:
                    lb, ub, x = box[0], box[1], cx
                    break
            else:
                return

    n_int = int(integral.sum())
    if _pick_branch(x, integral) < 0:
        record(x, val)
    else:
        dive(root_lb, root_ub, x, 2 * n_int + 10)
    last_dive = report.nodes_explored

    while heap:
        bound = heap[0][0]
        if inc_x is not None and tol_gap(bound) <= params.target_mip_gap:
            stop_reason = "gap"
            break
        if elapsed() > params.time_limit:
            stop_reason = "time_limit"
            break
        if params.node_limit is not None and report.nodes_explored >= params.node_limit:
            stop_reason = "node_limit"
            break
        if early_stop():
            stop_reason = "early_stop"
            break
        node_val, _, lb, ub, x = heapq.heappop(heap)
        if node_val >= inc_val - 1e-9:
            continue
        j = _pick_branch(x, integral)
        if j < 0:
            record(x, node_val)
            continue
        if inc_x is None and report.nodes_explored - last_dive >= 200:
            dive(lb, ub, x, 2 * n_int + 10)
            last_dive = report.nodes_explored
        for side in (0, 1):
            clb, cub = lb.copy(), ub.copy()
            if side == 0:
                cub[j] = math.floor(x[j])
            else:
                clb[j] = math.ceil(x[j])
            box = prop.run(clb, cub)
            if box is None:
                report.nodes_explored += 1
                continue
            clb, cub = box
            st, cx, cval = relax.solve(clb.copy(), cub.copy())
            report.nodes_explored += 1
            if st != "optimal" or cval >= inc_val - 1e-9:
                continue
            if _pick_branch(cx, integral) < 0:
                record(cx, cval)
                continue
            counter += 1
            heapq.heappush(heap, (cval, counter, clb, cub, cx))
    else:
        stop_reason = "exhausted"

    report.wall_time = elapsed()
    report.lp_iterations = relax.iterations
    report.stop_reason = stop_reason
    best_bound = min([h[0] for h in heap], default=math.inf)
    if inc_x is None:
        if stop_reason == "exhausted":
            return Solution({}, math.nan, Status.INFEASIBLE, math.nan, math.inf), report
        return (Solution({}, math.nan, Status.BUDGET_EXHAUSTED,
                         form.user_objective(best_bound), math.inf), report)
    best_bound = min(best_bound, inc_val)
    assignment = {i: float(v) for i, v in enumerate(inc_x)}
    obj = form.user_objective(inc_val)
    bnd = form.user_objective(best_bound)
    gap = abs(obj - bnd) / max(abs(obj), 1e-10)
    done = stop_reason in ("exhausted", "gap")
    status = Status.OPTIMAL if done else Status.BUDGET_EXHAUSTED
    return Solution(assignment, obj, status, bnd, gap), report

"""In-process HiGHS backend via :func:`scipy.optimize.milp`."""

from __future__ import annotations

import math
import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from ..model import Model, Solution, Status
from .params import SolveParams, SolverReport
from .standard import MatrixForm, to_matrix


def solve_form(form: MatrixForm, params: SolveParams):
    """Solve a matrix form; returns (status, x, internal objective, internal bound, nodes)."""
    lo = np.where(form.senses == ">=", form.b, np.where(form.senses == "==", form.b, -np.inf))
    hi = np.where(form.senses == "<=", form.b, np.where(form.senses == "==", form.b, np.inf))
    constraints = [LinearConstraint(form.A, lo, hi)] if form.A.shape[0] else []
    options = {"time_limit": float(params.time_limit), "mip_rel_gap": params.target_mip_gap,
               "disp": False, "presolve": True}
    if params.node_limit is not None:
        options["node_limit"] = int(params.node_limit)
    res = milp(form.c, constraints=constraints, integrality=form.integral.astype(int),
               bounds=Bounds(form.lb, form.ub), options=options)
    if res.status == 2:
        # presolve occasionally misjudges big-M models as infeasible; confirm without it
        options["presolve"] = False
        res = milp(form.c, constraints=constraints, integrality=form.integral.astype(int),
                   bounds=Bounds(form.lb, form.ub), options=options)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    bound = getattr(res, "mip_dual_bound", None)
    if res.x is not None:
        x = np.asarray(res.x, dtype=float)
        x[form.integral] = np.round(x[form.integral])
        val = float(form.c @ x)
        bound = val if bound is None or not np.isfinite(bound) else float(bound)
        status = "optimal" if res.status == 0 else "budget"
        return status, x, val, bound, nodes
    if res.status == 2:
        return "infeasible", None, math.inf, math.nan, nodes
    if res.status == 3:
        return "unbounded", None, -math.inf, math.nan, nodes
    return "budget", None, math.inf, math.nan, nodes


def highs_solve(model: Model, params: SolveParams):
    form = to_matrix(model)
    start = time.perf_counter()
    status, x, val, bound, nodes = solve_form(form, params)
    wall = time.perf_counter() - start
    report = SolverReport(nodes_explored=nodes, wall_time=wall, backend="highs", stop_reason=status)
    if x is None:
        st = {"infeasible": Status.INFEASIBLE, "unbounded": Status.UNBOUNDED}.get(
            status, Status.BUDGET_EXHAUSTED)
        return Solution({}, math.nan, st, math.nan, math.inf), report
    obj = form.user_objective(val)
    bnd = form.user_objective(bound)
    # weak duality guard against solver tolerance noise
    if form.sign < 0:
        bnd = max(bnd, obj)
    else:
        bnd = min(bnd, obj)
    report.incumbent_history.append((wall, obj))
    gap = abs(obj - bnd) / max(abs(obj), 1e-10)
    st = Status.OPTIMAL if status == "optimal" else Status.BUDGET_EXHAUSTED
    return Solution({i: float(v) for i, v in enumerate(x)}, obj, st, bnd, gap), report

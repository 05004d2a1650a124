"""LP/MILP solving: built-in simplex and branch and bound, HiGHS, or an external command."""

from __future__ import annotations

import math

from ..model import Model, ModelError, Solution, Status
from .bnb import branch_and_bound
from .bridge import ENV_VAR, BridgeError, bridge_solve
from .highs import highs_solve
from .mps import SolutionFileError, export_mps, import_solution, read_mps, write_solution
from .params import SolveParams, SolverReport
from .simplex import simplex
from .standard import to_matrix

__all__ = ["SolveParams", "SolverReport", "solve_lp", "solve_milp", "export_mps",
           "import_solution", "read_mps", "write_solution", "bridge_solve", "BridgeError",
           "SolutionFileError", "ENV_VAR"]


def solve_lp(model: Model) -> Solution:
    """Solve a purely continuous model with the built-in simplex."""
    if not model.is_lp():
        raise ModelError("solve_lp needs a model without integer variables")
    form = to_matrix(model)
    res = simplex(form.c, form.dense_A, form.b, form.senses, form.lb, form.ub)
    if res.status == "infeasible":
        return Solution({}, math.nan, Status.INFEASIBLE, math.nan, math.inf)
    if res.status == "unbounded":
        return Solution({}, form.sign * -math.inf, Status.UNBOUNDED, math.nan, math.inf)
    obj = form.user_objective(res.objective)
    return Solution({i: float(v) for i, v in enumerate(res.x)}, obj, Status.OPTIMAL, obj, 0.0)


def solve_milp(model: Model, params: SolveParams = None):
    """Dispatch on ``params.backend``; returns ``(Solution, SolverReport)``."""
    params = params or SolveParams()
    if params.backend == "highs":
        return highs_solve(model, params)
    if params.backend == "bridge":
        return bridge_solve(model, params.solver_command, params)
    return branch_and_bound(model, params)

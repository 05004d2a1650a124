"""Solve through an external command that reads MPS and writes ``name value`` lines."""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import tempfile
import time

from ..model import Model, ModelError, Solution, Status
from .mps import SolutionFileError, export_mps, import_solution
from .params import SolveParams, SolverReport

ENV_VAR = "ANALYZER_SOLVER_CMD"


class BridgeError(RuntimeError):
    pass


def resolve_command(solver_command=None) -> str:
    cmd = solver_command or os.environ.get(ENV_VAR)
    if not cmd:
        raise BridgeError(f"no solver command given and {ENV_VAR} is unset")
    return cmd


def _expand(command: str, mps: str, sol: str, params: SolveParams):
    fields = {"mps": mps, "sol": sol, "time_limit": repr(float(params.time_limit)),
              "gap": repr(float(params.target_mip_gap)), "seed": str(params.seed)}
    if "{mps}" in command:
        return [part.format(**fields) for part in shlex.split(command)]
    return shlex.split(command) + [mps, sol]


def bridge_solve(model: Model, solver_command=None, params: SolveParams = None):
    """Export ``model``, run the command, and import its solution file.

    The command may use ``{mps}``, ``{sol}``, ``{time_limit}``, ``{gap}`` and
    ``{seed}`` placeholders; without them the two paths are appended.
    """
    params = params or SolveParams()
    command = resolve_command(solver_command)
    if not model.frozen:
        model = model.copy().freeze()
    report = SolverReport(backend="bridge")
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="bridge") as tmp:
        mps = os.path.join(tmp, "model.mps")
        sol = os.path.join(tmp, "model.sol")
        export_mps(model, mps)
        argv = _expand(command, mps, sol, params)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=params.time_limit + 60.0)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BridgeError(f"solver command failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise BridgeError(f"solver exited with {proc.returncode}: {proc.stderr.strip()[-400:]}")
        report.wall_time = time.perf_counter() - start
        if not os.path.exists(sol):
            raise BridgeError("solver produced no solution file")
        status_line = _status_only(sol)
        if status_line in (Status.INFEASIBLE, Status.UNBOUNDED):
            report.stop_reason = status_line.value
            return Solution({}, math.nan, status_line, math.nan, math.inf), report
        if status_line is Status.BUDGET_EXHAUSTED and _empty(sol):
            report.stop_reason = "budget"
            return Solution({}, math.nan, Status.BUDGET_EXHAUSTED, math.nan, math.inf), report
        try:
            solution = import_solution(sol, model)
        except (SolutionFileError, ModelError, ValueError) as exc:
            raise BridgeError(f"unusable solution file: {exc}") from exc
    report.incumbent_history.append((report.wall_time, solution.objective))
    report.stop_reason = solution.status.value
    return solution, report


def _status_only(path):
    with open(path) as fh:
        for line in fh:
            tok = line.lstrip("#* ").split()
            if line.startswith("#") and len(tok) == 2 and tok[0].lower() == "status":
                try:
                    return Status(tok[1])
                except ValueError:
                    return None
    return None


def _empty(path) -> bool:
    with open(path) as fh:
        return all(not l.strip() or l.lstrip().startswith(("#", "*")) for l in fh)

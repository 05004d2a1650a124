"""Black-box baselines: random search, hill climbing and simulated annealing.

Every candidate is scored by the oracle simulators, never by an encoding.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .report import GapReport

METHODS = ("random", "hill_climb", "simulated_annealing")


@dataclass
class SearchConfig:
    method: str = "hill_climb"
    sigma: Optional[float] = None       # default: 10% of the problem's natural scale
    patience: int = 100                 # K
    t0: float = 500.0
    gamma: float = 0.1
    iters_per_temp: int = 100           # K_p
    t_min: float = 1e-3                 # annealing phase ends below this temperature
    restarts: Optional[int] = None      # None: restart until the budget runs out
    budget_seconds: float = 60.0
    max_evals: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown search method {self.method!r}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.patience < 1 or self.iters_per_temp < 1:
            raise ValueError("patience and iters_per_temp must be at least 1")
        if not self.budget_seconds > 0:
            raise ValueError("budget_seconds must be positive")
        if self.max_evals is not None and self.max_evals < 1:
            raise ValueError("max_evals must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SearchProblem:
    """A box-bounded input vector and an oracle returning (gap, reference, heuristic)."""

    name: str
    lo: np.ndarray
    hi: np.ndarray
    evaluate: Callable[[np.ndarray], Tuple[float, float, float]]
    to_input: Callable[[np.ndarray], list]
    input_key: str = "input"
    heuristic_name: str = "heuristic"
    reference_name: str = "reference"
    scale: float = 1.0                  # natural step scale for sigma
    integral: bool = False
    maximize: bool = True
    config: Optional[dict] = None

    @property
    def dim(self) -> int:
        return len(self.lo)

    def clip(self, x: np.ndarray) -> np.ndarray:
        x = np.minimum(np.maximum(x, self.lo), self.hi)
        return np.round(x) if self.integral else x


def te_problem(analysis) -> SearchProblem:
    pairs, lo, hi = analysis.search_space()

    def as_dict(x):
        return {p: float(v) for p, v in zip(pairs, x)}

    return SearchProblem("te", lo, hi, lambda x: analysis.evaluate(as_dict(x)),
                         lambda x: [{"src": s, "dst": t, "value": float(v)} for (s, t), v in zip(pairs, x)],
                         "demands", analysis.heuristic, analysis.reference,
                         scale=analysis.topology.average_capacity,
                         maximize=analysis.objective_mode == "max_gap", config=analysis.to_dict())


def vbp_problem(analysis) -> SearchProblem:
    _, lo, hi = analysis.search_space()
    dims = analysis.dims

    def balls(x):
        return [[float(v) for v in x[i:i + dims]] for i in range(0, len(x), dims)]

    return SearchProblem("vbp", lo, hi, lambda x: analysis.evaluate(balls(x)), balls, "balls", "ffd", "opt",
                         scale=analysis.capacity, maximize=analysis.objective_mode == "max_gap",
                         config=analysis.to_dict())


def sched_problem(analysis) -> SearchProblem:
    _, lo, hi = analysis.search_space()
    return SearchProblem("sched", lo, hi, lambda x: analysis.evaluate([int(v) for v in x]),
                         lambda x: [int(v) for v in x], "ranks", analysis.heuristic, analysis.reference,
                         scale=max(analysis.r_max, 1), integral=True,
                         maximize=analysis.objective_mode == "max_gap", config=analysis.to_dict())


def problem_for(analysis) -> SearchProblem:
    from .sched import SchedAnalysis
    from .te.analysis import TEAnalysis
    from .vbp import VbpAnalysis
    if isinstance(analysis, TEAnalysis):
        return te_problem(analysis)
    if isinstance(analysis, VbpAnalysis):
        return vbp_problem(analysis)
    if isinstance(analysis, SchedAnalysis):
        return sched_problem(analysis)
    raise TypeError(f"no black-box adapter for {type(analysis).__name__}")


class _Budget(Exception):
    pass


class _Tracker:
    """Counts evaluations, enforces the budget and records the best-so-far series."""

    def __init__(self, problem: SearchProblem, config: SearchConfig):
        self.problem, self.config = problem, config
        self.start = time.perf_counter()
        self.evals = 0
        self.best_x: Optional[np.ndarray] = None
        self.best = (-math.inf, math.nan, math.nan)
        self.series: List[Tuple[float, float]] = []
        self.sign = 1.0 if problem.maximize else -1.0

    def exhausted(self) -> bool:
        if self.config.max_evals is not None and self.evals >= self.config.max_evals:
            return True
        return time.perf_counter() - self.start >= self.config.budget_seconds

    def score(self, x: np.ndarray) -> float:
        """Signed gap (larger is better); raises _Budget once the budget is spent."""
        if self.evals and self.exhausted():
            raise _Budget
        gap, ref, heur = self.problem.evaluate(x)
        self.evals += 1
        s = self.sign * gap if math.isfinite(gap) else -math.inf
        if s > self.best[0] or self.best_x is None:
            improved = self.best_x is None or s > self.best[0]
            self.best, self.best_x = (s, ref, heur), x.copy()
            if improved and math.isfinite(s):
                self.series.append((time.perf_counter() - self.start, self.sign * s))
        return s


def _random_point(problem: SearchProblem, rng: np.random.Generator) -> np.ndarray:
    return problem.clip(rng.uniform(problem.lo, problem.hi))


def _neighbor(problem: SearchProblem, x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return problem.clip(x + rng.normal(0.0, sigma, size=x.shape))


def _climb(tr: _Tracker, x: np.ndarray, fx: float, sigma: float, rng) -> Tuple[np.ndarray, float]:
    k = 0
    while k < tr.config.patience:
        aux = _neighbor(tr.problem, x, sigma, rng)
        fa = tr.score(aux)
        if fa > fx:
            x, fx, k = aux, fa, -1
        k += 1
    return x, fx


def _anneal(tr: _Tracker, x: np.ndarray, fx: float, sigma: float, rng) -> Tuple[np.ndarray, float]:
    t = tr.config.t0
    while t >= tr.config.t_min:
        for _ in range(tr.config.iters_per_temp):
            aux = _neighbor(tr.problem, x, sigma, rng)
            fa = tr.score(aux)
            if fa > fx or (math.isfinite(fa) and rng.random() < math.exp((fa - fx) / t)):
                x, fx = aux, fa
        t *= tr.config.gamma
    # the frozen tail is a plain hill climb
    return _climb(tr, x, fx, sigma, rng)


def run_search(problem: SearchProblem, config: SearchConfig) -> GapReport:
    rng = np.random.default_rng(config.seed)
    tr = _Tracker(problem, config)
    sigma = config.sigma if config.sigma is not None else 0.1 * problem.scale
    if problem.integral:
        sigma = max(sigma, 0.5)
    runs = 0
    try:
        if problem.dim == 0:
            tr.score(np.zeros(0))
        elif config.method == "random":
            while config.restarts is None or runs < config.restarts:
                tr.score(_random_point(problem, rng))
                runs += 1
        else:
            step = _climb if config.method == "hill_climb" else _anneal
            while config.restarts is None or runs < config.restarts:
                x = _random_point(problem, rng)
                fx = tr.score(x)
                step(tr, x, fx, sigma, rng)
                runs += 1
    except _Budget:
        pass
    x = tr.best_x if tr.best_x is not None else np.zeros(problem.dim)
    s, ref, heur = tr.best
    gap = tr.sign * s if math.isfinite(s) else math.nan
    solver = {"backend": "black-box", "evaluations": tr.evals, "runs": runs,
              "wall_time": time.perf_counter() - tr.start, "search": config.to_dict()}
    return GapReport(problem.name, problem.heuristic_name, problem.reference_name, config.method, gap, ref,
                     heur, problem.input_key, problem.to_input(x), "Completed", math.isfinite(gap), math.nan,
                     solver, tr.series, problem.config or {})


def random_search(problem: SearchProblem, config: SearchConfig) -> GapReport:
    return run_search(problem, SearchConfig(**dict(config.to_dict(), method="random")))


def hill_climb(problem: SearchProblem, config: SearchConfig) -> GapReport:
    return run_search(problem, SearchConfig(**dict(config.to_dict(), method="hill_climb")))


def simulated_annealing(problem: SearchProblem, config: SearchConfig) -> GapReport:
    return run_search(problem, SearchConfig(**dict(config.to_dict(), method="simulated_annealing")))

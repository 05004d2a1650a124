"""Adversarial demand search for traffic-engineering heuristics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..model import LinExpr, Model, ModelError
from ..report import REPLAY_TOL, GapReport, best_so_far
from ..rewrite import (Aggregate, BilevelSpec, ComposedModel, QuantizationScheme, RewriteChoice,
                       compose, default_plan)
from ..solver import SolveParams, solve_milp
from .encode import (DemandVars, DPConfig, POPConfig, RealisticSpec, demand_name,
                     dp_follower, opt_max_flow_follower, pop_follower_sample, pop_objective,
                     realistic_input_constraints)
from .simulate import simulate_dp, simulate_opt, simulate_pop_aggregate
from .topology import Pair, Topology

HEURISTICS = ("dp", "modified_dp", "pop", "dp_pop_parallel")
REFERENCES = ("opt",) + HEURISTICS
MODIFIED_DP_HOPS = 4


@dataclass
class Goalpost:
    """Keep demands within ``distance`` of the anchors (unanchored pairs are free)."""

    anchors: Dict[Pair, float]
    distance: float
    norm: str = "l1"            # or "linf"

    def __post_init__(self):
        if not self.distance >= 0:
            raise ValueError("goalpost distance must be non-negative")
        if self.norm not in ("l1", "linf"):
            raise ValueError(f"unknown goalpost norm {self.norm!r}")


@dataclass
class TEBuild:
    bilevel: BilevelSpec
    plan: dict
    demands: DemandVars


@dataclass
class TEAnalysis:
    """Everything needed to search for demands that separate two TE algorithms."""

    topology: Topology
    heuristic: str = "dp"
    reference: str = "opt"
    d_max: Optional[float] = None
    dp: DPConfig = field(default_factory=DPConfig)
    pop: POPConfig = field(default_factory=POPConfig)
    rewrite: Optional[str] = None          # default: qpd with quantiles, else kkt
    quantiles: Optional[List[float]] = None
    dual_bound: Optional[float] = None
    slack_bound: Optional[float] = None
    objective_mode: str = "max_gap"
    realistic: Optional[RealisticSpec] = None
    goalpost: Optional[Goalpost] = None
    pairs: Optional[List[Pair]] = None     # pairs whose demand is searched
    fixed: Dict[Pair, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"unknown TE heuristic {self.heuristic!r}")
        if self.reference not in REFERENCES:
            raise ValueError(f"unknown TE reference {self.reference!r}")
        if self.reference == self.heuristic:
            raise ValueError("reference and heuristic must differ")
        if self.objective_mode not in ("max_gap", "min_gap"):
            raise ValueError(f"unknown objective mode {self.objective_mode!r}")
        if self.rewrite is not None and self.rewrite not in ("kkt", "pd", "qpd"):
            raise ValueError(f"unknown rewrite {self.rewrite!r}")
        if self.resolved_rewrite in ("pd", "qpd") and not self.quantiles:
            raise ValueError(f"{self.resolved_rewrite} needs quantiles")

    # -- configuration -----------------------------------------------------
    @property
    def resolved_rewrite(self) -> str:
        if self.rewrite is not None:
            return self.rewrite
        return "qpd" if self.quantiles else "kkt"

    @property
    def resolved_d_max(self) -> float:
        return self.topology.average_capacity / 2.0 if self.d_max is None else float(self.d_max)

    def dp_config(self, name: str) -> DPConfig:
        if name == "modified_dp" and self.dp.hop_limit is None:
            return replace(self.dp, hop_limit=MODIFIED_DP_HOPS)
        if name == "dp" and self.dp.hop_limit is not None:
            return replace(self.dp, hop_limit=None)
        return self.dp

    def demand_pairs(self) -> List[Pair]:
        searched = list(self.topology.pairs if self.pairs is None else self.pairs)
        extra = [p for p in self.fixed if p not in searched]
        return searched + extra

    def to_dict(self) -> dict:
        def pairs_out(ps):
            return None if ps is None else [list(p) for p in ps]

        out = {
            "heuristic": self.heuristic, "reference": self.reference,
            "d_max": self.resolved_d_max, "rewrite": self.resolved_rewrite,
            "quantiles": self.quantiles, "dual_bound": self.dual_bound,
            "slack_bound": self.slack_bound, "objective_mode": self.objective_mode,
            "dp": asdict(self.dp), "pop": asdict(self.pop),
            "dp_threshold": self.dp.resolved_threshold(self.topology),
            "realistic": asdict(self.realistic) if self.realistic else None,
            "pairs": pairs_out(self.pairs),
            "fixed": [[s, t, v] for (s, t), v in self.fixed.items()],
        }
        if self.goalpost is not None:
            out["goalpost"] = {"anchors": [[s, t, v] for (s, t), v in self.goalpost.anchors.items()],
                               "distance": self.goalpost.distance, "norm": self.goalpost.norm}
        return out

    # -- oracle ------------------------------------------------------------
    def simulate(self, name: str, demands: Mapping[Pair, float]) -> float:
        pairs = self.demand_pairs()
        full = {p: float(demands.get(p, 0.0)) for p in pairs}
        if name == "opt":
            return simulate_opt(self.topology, full).objective
        if name in ("dp", "modified_dp"):
            return simulate_dp(self.topology, full, self.dp_config(name)).objective
        if name == "pop":
            return simulate_pop_aggregate(self.topology, full, self.pop, pairs)
        dp = simulate_dp(self.topology, full, self.dp_config("dp")).objective
        pop = simulate_pop_aggregate(self.topology, full, self.pop, pairs)
        return max(dp, pop)

    def evaluate(self, demands: Mapping[Pair, float]) -> Tuple[float, float, float]:
        """(gap, reference value, heuristic value) by direct simulation."""
        ref = self.simulate(self.reference, demands)
        heur = self.simulate(self.heuristic, demands)
        return ref - heur, ref, heur

    # -- model -------------------------------------------------------------
    def build(self) -> TEBuild:
        leader = Model("te-leader")
        demands = DemandVars.create(leader, self.topology, self.resolved_d_max, self.demand_pairs())
        for p, v in self.fixed.items():
            if not 0.0 <= v <= demands.d_max + 1e-9:
                raise ModelError(f"fixed demand {p}={v} outside [0, d_max]")
            leader.fix(demands.vars[p], float(v))
        registry = demands.quantize(self.quantiles) if self.quantiles else {}
        if self.realistic is not None:
            realistic_input_constraints(leader, demands, self.realistic)
        if self.goalpost is not None:
            self._goalpost_rows(leader, demands)

        followers = {}

        def placeholder(name: str):
            if name == "opt":
                if "opt" not in followers:
                    followers["opt"] = opt_max_flow_follower(self.topology, demands, "opt")
                return "opt"
            if name in ("dp", "modified_dp"):
                if name not in followers:
                    followers[name] = dp_follower(self.topology, demands, self.dp_config(name), name)
                return name
            if name == "pop":
                samples = []
                for s in self.pop.sample_seeds():
                    key = f"pop{s}"
                    if key not in followers:
                        followers[key] = pop_follower_sample(self.topology, demands, self.pop, s, key)
                    samples.append(followers[key])
                return pop_objective(samples, self.pop)
            return Aggregate("max", (placeholder("dp"), placeholder("pop")))

        ref = placeholder(self.reference)
        heur = placeholder(self.heuristic)
        sense = "max" if self.objective_mode == "max_gap" else "min"
        bilevel = BilevelSpec(leader, list(followers.values()), [(1.0, ref), (-1.0, heur)], sense,
                              selectors=registry)
        scheme = QuantizationScheme(default=list(self.quantiles)) if self.quantiles else None
        plan = default_plan(bilevel, self.resolved_rewrite, scheme)
        for name, choice in plan.items():
            if choice.kind in ("kkt", "pd", "qpd"):
                plan[name] = RewriteChoice(choice.kind, scheme if choice.kind != "kkt" else None,
                                           self.dual_bound, self.slack_bound)
        return TEBuild(bilevel, plan, demands)

    def _goalpost_rows(self, leader: Model, demands: DemandVars) -> None:
        gp = self.goalpost
        devs = []
        for p, anchor in gp.anchors.items():
            if p not in demands.vars:
                raise ModelError(f"goalpost anchor {p} is not a demand pair")
            d = demands.vars[p]
            if gp.norm == "linf":
                leader.add_le(d, anchor + gp.distance, "goalpost")
                leader.add_ge(d, anchor - gp.distance, "goalpost")
                continue
            t = leader.continuous(f"goalpost[{p[0]},{p[1]}]", 0.0, math.inf)
            leader.add_ge(t - d, -anchor, "goalpost")
            leader.add_ge(t + d, anchor, "goalpost")
            devs.append(t)
        if devs:
            leader.add_le(LinExpr.sum(devs), gp.distance, "goalpost")

    def compose(self) -> Tuple[ComposedModel, TEBuild]:
        built = self.build()
        model = compose(built.bilevel, built.plan, "te", built.demands.ctx)
        return model, built

    # -- solving -----------------------------------------------------------
    def clean_demands(self, values: Mapping[str, float], demands: DemandVars) -> Dict[Pair, float]:
        """Leader values snapped to their quantization levels (or to a 1e-6 grid)."""
        out = {}
        for p in demands.pairs:
            v = float(values[demand_name(p)])
            if p in demands.selectors:
                levels = [0.0] + [lv for lv, _ in demands.selectors[p]]
                v = min(levels, key=lambda lv: abs(lv - v))
            else:
                v = round(v, 6)
            out[p] = min(max(v, 0.0), demands.upper(p))
        return out

    def solve(self, params: Optional[SolveParams] = None) -> GapReport:
        params = params or SolveParams()
        model, built = self.compose()
        model.freeze()
        sol, report = solve_milp(model, params)
        sign = 1.0 if self.objective_mode == "max_gap" else -1.0
        solver = dict(report.to_dict(), bound=sol.bound, mip_gap=sol.mip_gap,
                      params=params.to_dict(), variables=len(model.vars),
                      constraints=len(model.constraints), integral=model.num_integral)
        solver.pop("incumbent_history", None)
        series = best_so_far([(t, v) for t, v in report.incumbent_history],
                             "max" if sign > 0 else "min")
        if not sol.has_point:
            return GapReport("te", self.heuristic, self.reference, "composed", math.nan, math.nan,
                             math.nan, "demands", [], sol.status.value, False, math.nan, solver,
                             series, self.to_dict())
        demands = self.clean_demands(model.leader_values(sol), built.demands)
        gap, ref, heur = self.evaluate(demands)
        validated = math.isfinite(gap) and abs(gap - sol.objective) <= REPLAY_TOL * max(1.0, abs(gap))
        rows = [{"src": s, "dst": t, "value": v} for (s, t), v in demands.items()]
        return GapReport("te", self.heuristic, self.reference, "composed", gap, ref, heur, "demands",
                         rows, sol.status.value, validated, sol.objective, solver, series,
                         self.to_dict())

    # -- black-box interface -----------------------------------------------
    def search_space(self) -> Tuple[List[Pair], np.ndarray, np.ndarray]:
        pairs = self.demand_pairs()
        lo = np.array([self.fixed.get(p, 0.0) for p in pairs], dtype=float)
        hi = np.array([self.fixed.get(p, self.resolved_d_max) for p in pairs], dtype=float)
        return pairs, lo, hi


def analyze_te(topology: Topology, heuristic: str = "dp", params: Optional[SolveParams] = None,
               **kwargs) -> GapReport:
    return TEAnalysis(topology, heuristic, **kwargs).solve(params)


def demands_from_rows(rows: Sequence[Mapping]) -> Dict[Pair, float]:
    return {(str(r["src"]), str(r["dst"])): float(r["value"]) for r in rows}


def load_demands(path) -> Dict[Pair, float]:
    """Demand vector from JSON (list of {src, dst, value} or a report) or CSV (src,dst,value)."""
    path = str(path)
    if path.endswith(".csv"):
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh)]
        return demands_from_rows(rows)
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["demands"]
    return demands_from_rows(data)


def save_demands(path, demands: Mapping[Pair, float]) -> None:
    rows = [{"src": s, "dst": t, "value": v} for (s, t), v in demands.items()]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")

"""Direct implementations of OPT, DP and POP used as oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..model import LinExpr, Model, Status
from ..solver import solve_lp
from .encode import DPConfig, POPConfig, pop_items, pop_partition
from .topology import Pair, Topology


@dataclass
class TEResult:
    objective: float
    flows: Dict[Pair, List[float]] = field(default_factory=dict)
    feasible: bool = True
    pinned: List[Pair] = field(default_factory=list)


def _max_flow(topology: Topology, demands: Sequence[Tuple[Pair, float]],
              capacity: Mapping[Tuple[str, str], float]) -> Tuple[float, List[List[float]]]:
    """Path-based max flow for (pair, volume) entries on the given capacities."""
    m = Model("maxflow")
    pvars = []
    load: Dict[Tuple[str, str], LinExpr] = {}
    for i, (pair, vol) in enumerate(demands):
        vs = [m.continuous(f"x{i}_{j}", 0.0, max(vol, 0.0)) for j in range(len(topology.paths[pair]))]
        for v, path in zip(vs, topology.paths[pair]):
            for e in topology.path_edges(path):
                load.setdefault(e, LinExpr()).iadd(v)
        m.add_le(LinExpr.sum(vs), max(vol, 0.0))
        pvars.append(vs)
    for e, expr in load.items():
        m.add_le(expr, max(capacity[e], 0.0))
    m.maximize(LinExpr.sum(v for vs in pvars for v in vs))
    if not pvars:
        return 0.0, []
    sol = solve_lp(m.freeze())
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"max-flow LP ended {sol.status.value}")
    return sol.objective, [[sol.assignment[v.id] for v in vs] for vs in pvars]


def _caps(topology: Topology, scale: float = 1.0) -> Dict[Tuple[str, str], float]:
    return {(s, t): c * scale for s, t, c in topology.edges}


def simulate_opt(topology: Topology, demands: Mapping[Pair, float]) -> TEResult:
    entries = [(p, float(v)) for p, v in demands.items()]
    obj, flows = _max_flow(topology, entries, _caps(topology))
    return TEResult(obj, {p: f for (p, _), f in zip(entries, flows)})


def simulate_dp(topology: Topology, demands: Mapping[Pair, float],
                config: Optional[DPConfig] = None) -> TEResult:
    """Pin small demands on their shortest path, then route the rest optimally."""
    config = config or DPConfig()
    threshold = config.resolved_threshold(topology)
    residual = _caps(topology)
    pinned, rest = [], []
    flows: Dict[Pair, List[float]] = {}
    pinned_total = 0.0
    for p, v in demands.items():
        v = float(v)
        if v <= threshold and config.pins(topology, p):
            pinned.append(p)
            paths = topology.paths[p]
            flows[p] = [v] + [0.0] * (len(paths) - 1)
            for e in topology.path_edges(paths[0]):
                residual[e] -= v
            pinned_total += v
        else:
            rest.append((p, v))
    if any(c < -1e-9 for c in residual.values()):
        # pinned traffic alone overloads a link
        return TEResult(math.nan, flows, False, pinned)
    obj, rflows = _max_flow(topology, rest, residual)
    for (p, _), f in zip(rest, rflows):
        flows[p] = f
    return TEResult(pinned_total + obj, flows, True, pinned)


def simulate_pop(topology: Topology, demands: Mapping[Pair, float], config: POPConfig,
                 seed: int, pairs: Optional[Sequence[Pair]] = None) -> TEResult:
    """One POP run: random partitions, each solved on capacities c_e / c."""
    pairs = list(pairs) if pairs is not None else list(demands)
    items = pop_items(pairs, config)
    part = pop_partition(items, config.partitions, seed)
    caps = _caps(topology, 1.0 / config.partitions)
    split = config.client_split
    total = 0.0
    flows: Dict[Pair, List[float]] = {}
    for c in range(config.partitions):
        entries = []
        for (label, p, lvl, share), pc in zip(items, part):
            if pc != c:
                continue
            d = float(demands.get(p, 0.0))
            active = split is None or split.level(d) == lvl
            entries.append((p, d * share if active else 0.0))
        obj, fl = _max_flow(topology, entries, caps)
        total += obj
        for (p, _), f in zip(entries, fl):
            acc = flows.setdefault(p, [0.0] * len(f))
            flows[p] = [a + b for a, b in zip(acc, f)]
    return TEResult(total, flows)


def simulate_pop_aggregate(topology: Topology, demands: Mapping[Pair, float], config: POPConfig,
                           pairs: Optional[Sequence[Pair]] = None) -> float:
    """Mean (or percentile) POP objective over the configured sample seeds."""
    from ..rewrite import percentile_index
    vals = [simulate_pop(topology, demands, config, s, pairs).objective for s in config.sample_seeds()]
    if config.mode == "expected":
        return sum(vals) / len(vals)
    return sorted(vals)[percentile_index(len(vals), config.q)]

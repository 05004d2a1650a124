"""Follower encodings for max-flow traffic engineering and its heuristics."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .. import helpers as H
from ..model import LinExpr, Model, ModelError, Var
from ..rewrite import Aggregate, FollowerSpec
from .topology import Pair, Topology


def demand_name(pair: Pair) -> str:
    return f"d[{pair[0]},{pair[1]}]"


@dataclass
class DPConfig:
    threshold: Optional[float] = None     # default: 5% of the average link capacity
    variant: str = "auto"                 # "bigM", "quantized", or auto-pick from the demands
    hop_limit: Optional[int] = None       # pin only when the shortest path is shorter

    def __post_init__(self):
        if self.variant not in ("auto", "bigM", "quantized"):
            raise ValueError(f"unknown DP variant {self.variant!r}")
        if self.threshold is not None and self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if self.hop_limit is not None and self.hop_limit < 1:
            raise ValueError("hop_limit must be at least 1")

    def resolved_threshold(self, topology: Topology) -> float:
        return 0.05 * topology.average_capacity if self.threshold is None else float(self.threshold)

    def pins(self, topology: Topology, pair: Pair) -> bool:
        return self.hop_limit is None or topology.hops(pair) < self.hop_limit


@dataclass
class ClientSplit:
    threshold: float
    max_splits: int = 2

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("client split threshold must be positive")
        if self.max_splits < 0:
            raise ValueError("max_splits must be non-negative")

    def level(self, demand: float) -> int:
        """Number of halvings applied to one demand."""
        lvl = 0
        while lvl < self.max_splits and demand / 2 ** lvl >= self.threshold:
            lvl += 1
        return lvl


@dataclass
class POPConfig:
    partitions: int = 2
    samples: int = 5
    mode: str = "expected"                # or "percentile"
    q: float = 0.5
    client_split: Optional[ClientSplit] = None
    seed: int = 0

    def __post_init__(self):
        if self.partitions < 1:
            raise ValueError("partitions must be at least 1")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.mode not in ("expected", "percentile"):
            raise ValueError(f"unknown POP mode {self.mode!r}")

    def sample_seeds(self) -> List[int]:
        return [self.seed + i for i in range(self.samples)]


@dataclass
class RealisticSpec:
    max_hops: Optional[int] = None        # locality: farther pairs limited to far_bound
    far_bound: float = 0.0
    max_nonzero: Optional[int] = None     # sparsity budget


@dataclass
class DemandVars:
    """Leader demand variables d_k in [0, d_max] for every routable pair."""

    leader: Model
    topology: Topology
    pairs: List[Pair]
    vars: Dict[Pair, Var]
    d_max: float
    ctx: H.BigMContext = field(default_factory=H.BigMContext)
    selectors: Dict[Pair, List[Tuple[float, Var]]] = field(default_factory=dict)
    pin_flags: Dict[Tuple[Pair, float], Var] = field(default_factory=dict)
    split_flags: Dict[Pair, List[LinExpr]] = field(default_factory=dict)

    @classmethod
    def create(cls, leader: Model, topology: Topology, d_max: Optional[float] = None,
               pairs: Optional[Sequence[Pair]] = None) -> "DemandVars":
        if d_max is None:
            d_max = topology.average_capacity / 2.0
        if d_max < 0:
            raise ModelError("d_max must be non-negative")
        pairs = list(topology.pairs if pairs is None else pairs)
        for p in pairs:
            if not topology.paths.get(p):
                raise ModelError(f"pair {p} has no path")
        vars_ = {p: leader.continuous(demand_name(p), 0.0, d_max) for p in pairs}
        return cls(leader, topology, pairs, vars_, float(d_max))

    def names(self) -> Dict[Pair, str]:
        return {p: demand_name(p) for p in self.pairs}

    def values(self, assignment: Dict[str, float]) -> Dict[Pair, float]:
        return {p: float(assignment[demand_name(p)]) for p in self.pairs}

    def upper(self, pair: Pair) -> float:
        return self.leader.vars[self.vars[pair].id].upper

    def is_fixed(self, pair: Pair) -> bool:
        d = self.leader.vars[self.vars[pair].id]
        return d.lower == d.upper

    def quantize(self, levels: Sequence[float]) -> Dict[str, List[Tuple[float, str]]]:
        """Restrict every free demand to {0} + levels via selector binaries."""
        levels = sorted(set(float(v) for v in levels) - {0.0})
        for p in self.pairs:
            if self.is_fixed(p):
                continue
            if p in self.selectors:
                raise ModelError("demands are already quantized")
            d = self.vars[p]
            sel = []
            for k, lv in enumerate(levels):
                if lv > self.upper(p) + 1e-9:
                    raise ModelError(f"level {lv} exceeds the demand bound {self.upper(p)}")
                sel.append((lv, self.leader.binary(f"q.{demand_name(p)}.{k + 1}")))
            self.leader.add_le(LinExpr.sum(x for _, x in sel), 1.0, "quantize")
            self.leader.add_eq(d - LinExpr.sum(lv * x for lv, x in sel), 0.0, "quantize")
            self.selectors[p] = sel
        return self.selector_registry()

    def selector_registry(self) -> Dict[str, List[Tuple[float, str]]]:
        return {demand_name(p): [(lv, x.name) for lv, x in sel] for p, sel in self.selectors.items()}

    def pin_flag(self, pair: Pair, threshold: float) -> Var:
        """Leader binary equal to 1 exactly when d_k <= threshold."""
        key = (pair, float(threshold))
        if key not in self.pin_flags:
            self.pin_flags[key] = H.is_leq(self.leader, self.vars[pair], threshold, self.ctx,
                                           f"pin[{pair[0]},{pair[1]}]@{threshold:g}")
        return self.pin_flags[key]


def _mirror(fm: Model, name: str) -> Var:
    # leader variables appear in follower models by name; their bounds come from the leader
    return fm.var(name) if fm.has_var(name) else fm.continuous(name, -math.inf, math.inf)


def feasible_flow_constraints(model: Model, topology: Topology, items: Sequence[Tuple[str, Pair]],
                              demand_rhs: Dict[str, LinExpr], cap_scale: float = 1.0,
                              prefix: str = "f") -> Dict[str, List[Var]]:
    """Path flows f_k^p >= 0 with sum_p f_k^p <= rhs_k and per-edge load <= c_e * cap_scale.

    ``items`` are (label, pair) entries, so one pair may appear several times
    (split clients).  Returns the path-flow variables per label.
    """
    flows: Dict[str, List[Var]] = {}
    load: Dict[Tuple[str, str], LinExpr] = {}
    for label, pair in items:
        pvars = []
        for j, path in enumerate(topology.paths[pair]):
            v = model.continuous(f"{prefix}[{label}][{j}]", 0.0, math.inf)
            pvars.append(v)
            for e in topology.path_edges(path):
                load.setdefault(e, LinExpr()).iadd(v)
        flows[label] = pvars
        model.add_le(LinExpr.sum(pvars) - demand_rhs[label], 0.0, f"demand:{label}")
    for e in topology.edge_keys:
        if e in load:
            model.add_le(load[e], topology.capacity(*e) * cap_scale, f"capacity:{e[0]}-{e[1]}")
    return flows


def total_flow(flows: Dict[str, List[Var]]) -> LinExpr:
    return LinExpr.sum(v for vs in flows.values() for v in vs)


def _label(pair: Pair) -> str:
    return f"{pair[0]},{pair[1]}"


def opt_max_flow_follower(topology: Topology, demands: DemandVars, name: str = "opt") -> FollowerSpec:
    fm = Model(name)
    rhs = {_label(p): LinExpr.of(_mirror(fm, demand_name(p))) for p in demands.pairs}
    flows = feasible_flow_constraints(fm, topology, [(_label(p), p) for p in demands.pairs], rhs)
    fm.maximize(total_flow(flows))
    return FollowerSpec(name, fm)


def dp_follower(topology: Topology, demands: DemandVars, config: DPConfig = None,
                name: str = "dp") -> FollowerSpec:
    """Max flow where demands at or below the threshold ride their shortest path in full."""
    config = config or DPConfig()
    threshold = config.resolved_threshold(topology)
    fm = Model(name)
    rhs = {_label(p): LinExpr.of(_mirror(fm, demand_name(p))) for p in demands.pairs}
    flows = feasible_flow_constraints(fm, topology, [(_label(p), p) for p in demands.pairs], rhs)
    variant = config.variant
    if variant == "auto":
        variant = "quantized" if demands.selectors else "bigM"
    if variant == "quantized" and not demands.selectors:
        raise ModelError("the quantized DP variant needs quantized demands")
    for p in demands.pairs:
        if not config.pins(topology, p):
            continue
        shortest, others = flows[_label(p)][0], flows[_label(p)][1:]
        d = _mirror(fm, demand_name(p))
        if demands.is_fixed(p):
            value = demands.upper(p)
            if value <= threshold:
                if others:
                    fm.add_le(LinExpr.sum(others), 0.0, f"pin:{_label(p)}")
                fm.add_ge(shortest, value, f"pin:{_label(p)}")
        elif variant == "bigM":
            flag = _mirror(fm, demands.pin_flag(p, threshold).name)
            big = demands.upper(p)
            # flag = 1 (d <= T): nothing off the shortest path and all of d on it
            if others:
                fm.add_le(LinExpr.sum(others) + big * flag, big, f"pin:{_label(p)}")
            fm.add_le(d - shortest + big * flag, big, f"pin:{_label(p)}")
        else:
            if p not in demands.selectors:
                raise ModelError(f"demand {p} is not quantized")
            low = [(lv, x) for lv, x in demands.selectors[p] if lv <= threshold]
            if low:
                fm.add_ge(shortest - LinExpr.sum(lv * _mirror(fm, x.name) for lv, x in low), 0.0,
                          f"pin:{_label(p)}")
    fm.maximize(total_flow(flows))
    return FollowerSpec(name, fm)


def pop_partition(items: Sequence, partitions: int, seed: int) -> List[int]:
    """Partition index per item: seeded Fisher-Yates shuffle, then round robin."""
    order = list(range(len(items)))
    random.Random(seed).shuffle(order)
    part = [0] * len(items)
    for rank, idx in enumerate(order):
        part[idx] = rank % partitions
    return part


def split_shares(max_splits: int) -> List[Tuple[int, float]]:
    """(level, share) for every virtual client: 1 at level 0, 2 at level 1, ..."""
    return [(lvl, 0.5 ** lvl) for lvl in range(max_splits + 1) for _ in range(2 ** lvl)]


def pop_client_split_constraints(leader: Model, demands: DemandVars,
                                 config: ClientSplit) -> Dict[Pair, List[LinExpr]]:
    """Per pair, one 0/1 activity expression per split level.

    Level j (j halvings) is active when 2^(j-1) d_th <= d_k < 2^j d_th; level 0
    covers d_k < d_th and the last level everything from 2^(s-1) d_th up.
    """
    if demands.split_flags:
        return demands.split_flags
    out = {}
    for p in demands.pairs:
        d = demands.vars[p]
        ge = [H.is_leq(leader, (2 ** (j - 1)) * config.threshold, d, demands.ctx,
                       f"split[{p[0]},{p[1]}]>={j}") for j in range(1, config.max_splits + 1)]
        acts = []
        for j in range(config.max_splits + 1):
            lower = LinExpr.of(1.0) if j == 0 else LinExpr.of(ge[j - 1])
            upper = LinExpr.of(ge[j]) if j < config.max_splits else LinExpr()
            acts.append(lower - upper)
        out[p] = acts
    demands.split_flags = out
    return out


def pop_items(pairs: Sequence[Pair], config: POPConfig) -> List[Tuple[str, Pair, int, float]]:
    """(label, pair, split level, share) for every (virtual) client."""
    if config.client_split is None:
        return [(_label(p), p, 0, 1.0) for p in pairs]
    out = []
    for p in pairs:
        for i, (lvl, share) in enumerate(split_shares(config.client_split.max_splits)):
            out.append((f"{_label(p)}#{i + 1}", p, lvl, share))
    return out


def pop_follower_sample(topology: Topology, demands: DemandVars, config: POPConfig,
                        seed: int, name: Optional[str] = None) -> FollowerSpec:
    """One random POP instance: per-partition max flow on capacities c_e / c."""
    name = name or f"pop{seed}"
    fm = Model(name)
    items = pop_items(demands.pairs, config)
    flags = (pop_client_split_constraints(demands.leader, demands, config.client_split)
             if config.client_split is not None else None)
    part = pop_partition(items, config.partitions, seed)
    all_flows = {}
    for c in range(config.partitions):
        chosen = [it for it, pc in zip(items, part) if pc == c]
        rhs = {}
        for label, p, lvl, share in chosen:
            rhs[label] = share * LinExpr.of(_mirror(fm, demand_name(p)))
        flows = feasible_flow_constraints(fm, topology, [(it[0], it[1]) for it in chosen], rhs,
                                          1.0 / config.partitions, f"f{c}")
        if flags is not None:
            for label, p, lvl, share in chosen:
                act = flags[p][lvl]
                gate = LinExpr({_mirror(fm, demands.leader.vars[v].name).id: k
                                for v, k in act.terms.items()}, act.constant)
                big = share * demands.upper(p)
                # inactive split levels carry no flow
                fm.add_le(LinExpr.sum(flows[label]) - big * gate, 0.0, f"split:{label}")
        all_flows.update(flows)
    fm.maximize(total_flow(all_flows))
    return FollowerSpec(name, fm)


def pop_objective(samples: Sequence[FollowerSpec], config: POPConfig):
    """Placeholder over the samples: their mean, or a percentile via a sorting network."""
    names = tuple(s.name for s in samples)
    if config.mode == "expected":
        return Aggregate("mean", names)
    return Aggregate("percentile", names, config.q)


def realistic_input_constraints(leader: Model, demands: DemandVars, spec: RealisticSpec) -> None:
    if spec.max_hops is not None:
        for p in demands.pairs:
            if demands.topology.hops(p) > spec.max_hops:
                leader.add_le(demands.vars[p], spec.far_bound, f"locality:{_label(p)}")
    if spec.max_nonzero is not None:
        active = []
        for p in demands.pairs:
            a = leader.binary(f"active[{_label(p)}]")
            leader.add_le(demands.vars[p] - demands.upper(p) * a, 0.0, f"sparsity:{_label(p)}")
            active.append(a)
        leader.add_le(LinExpr.sum(active), float(spec.max_nonzero), "sparsity:budget")

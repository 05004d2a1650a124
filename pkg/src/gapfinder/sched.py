"""Packet scheduling: PIFO, SP-PIFO and AIFO simulators, encodings and analysis.

Ranks are integers in [0, R_max]; a lower rank means a higher priority.  Queue
1 is the lowest-priority SP-PIFO queue and queue N the highest.  No packet
leaves during a trace, so the dequeue order is fixed once every packet has
arrived: higher queues first, FIFO inside a queue.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import helpers as H
from .model import LinExpr, Model, Operand, Var
from .report import REPLAY_TOL, GapReport, best_so_far
from .rewrite import BilevelSpec, FollowerSpec, compose, default_plan
from .solver import SolveParams, solve_milp

SCHEDULERS = ("pifo", "sp_pifo", "aifo")
METRICS = ("weighted_delay", "inversions")


@dataclass
class PacketTrace:
    ranks: List[int]
    r_max: int
    history: Optional[List[int]] = None    # AIFO window contents before the trace, oldest first

    def __post_init__(self):
        self.ranks = [int(r) for r in self.ranks]
        if self.r_max < 0:
            raise ValueError("r_max must be non-negative")
        for r in self.ranks:
            if not 0 <= r <= self.r_max:
                raise ValueError(f"rank {r} outside [0, {self.r_max}]")
        if self.history is not None:
            self.history = [int(r) for r in self.history]

    def to_dict(self) -> dict:
        out = {"r_max": self.r_max, "ranks": self.ranks}
        if self.history is not None:
            out["history"] = self.history
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PacketTrace":
        return cls(data["ranks"], int(data["r_max"]), data.get("history"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PacketTrace":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SpPifoConfig:
    queues: int = 4
    queue_capacity: Optional[int] = None

    def __post_init__(self):
        if self.queues < 2:
            raise ValueError("SP-PIFO needs at least two queues")
        if self.queue_capacity is not None and self.queue_capacity < 1:
            raise ValueError("queue_capacity must be at least 1")


@dataclass
class AifoConfig:
    capacity: int = 12          # C, packets
    window: int = 4             # K
    burst: float = 1.0          # B
    normalized: bool = True     # compare g_p / K (False: the raw count g_p)

    def __post_init__(self):
        if self.capacity < 1 or self.window < 1 or not self.burst > 0:
            raise ValueError("AIFO needs C >= 1, K >= 1 and B > 0")


@dataclass
class ScheduleResult:
    order: List[int]
    admitted: List[bool]
    queues: List[int]                 # 1-based queue per packet, 0 when dropped
    weighted_delay: float
    inversions: int

    @property
    def normalized_delay(self) -> float:
        return self.weighted_delay / max(1, len(self.admitted))

    def to_dict(self) -> dict:
        return {"wdelay": self.weighted_delay, "wdelay_normalized": self.normalized_delay,
                "order": self.order, "inversions": self.inversions, "admitted": self.admitted,
                "queues": self.queues}

    def metric(self, name: str) -> float:
        return float(self.weighted_delay if name == "weighted_delay" else self.inversions)


def weighted_delay(order: Sequence[int], ranks: Sequence[int], r_max: int) -> float:
    """Sum over packets of (R_max - rank) times the number of packets dequeued before it."""
    return float(sum((r_max - ranks[p]) * pos for pos, p in enumerate(order)))


def count_inversions(order: Sequence[int], ranks: Sequence[int]) -> int:
    """Pairs dequeued ahead of a strictly higher-priority (lower-rank) packet."""
    return sum(1 for a in range(len(order)) for b in range(a + 1, len(order))
               if ranks[order[a]] > ranks[order[b]])


def _result(trace: PacketTrace, order, admitted, queues) -> ScheduleResult:
    return ScheduleResult(list(order), list(admitted), list(queues),
                          weighted_delay(order, trace.ranks, trace.r_max),
                          count_inversions(order, trace.ranks))


def pifo_simulate(trace: PacketTrace) -> ScheduleResult:
    order = sorted(range(len(trace.ranks)), key=lambda p: (trace.ranks[p], p))
    n = len(trace.ranks)
    return _result(trace, order, [True] * n, [1] * n)


def sp_pifo_simulate(trace: PacketTrace, config: SpPifoConfig = None) -> ScheduleResult:
    config = config or SpPifoConfig()
    N = config.queues
    bound = [0] * N                       # index 0 is queue 1 (lowest priority)
    queues: List[List[int]] = [[] for _ in range(N)]
    where = [0] * len(trace.ranks)
    admitted = [False] * len(trace.ranks)
    for p, r in enumerate(trace.ranks):
        if r < bound[N - 1]:
            # push down: lower every queue bound so the top queue admits r
            deficit = bound[N - 1] - r
            bound = [b - deficit for b in bound]
        q = next(i for i in range(N) if bound[i] <= r)
        if config.queue_capacity is not None and len(queues[q]) >= config.queue_capacity:
            continue
        queues[q].append(p)
        bound[q] = r                      # push up
        where[p] = q + 1
        admitted[p] = True
    order = [p for q in reversed(range(N)) for p in queues[q]]
    return _result(trace, order, admitted, where)


def modified_sp_pifo_simulate(trace: PacketTrace, groups: int, config: SpPifoConfig = None) -> ScheduleResult:
    """SP-PIFO per contiguous rank range; groups with lower ranks are served first."""
    config = config or SpPifoConfig()
    if groups < 1:
        raise ValueError("groups must be at least 1")
    width = math.ceil((trace.r_max + 1) / groups)
    per_group = max(2, config.queues // groups)
    order: List[int] = []
    admitted = [False] * len(trace.ranks)
    where = [0] * len(trace.ranks)
    for g in range(groups):
        members = [p for p, r in enumerate(trace.ranks) if g * width <= r < (g + 1) * width]
        if not members:
            continue
        sub = PacketTrace([trace.ranks[p] for p in members], trace.r_max)
        res = sp_pifo_simulate(sub, SpPifoConfig(per_group, config.queue_capacity))
        order += [members[i] for i in res.order]
        for i, p in enumerate(members):
            admitted[p] = res.admitted[i]
            where[p] = res.queues[i] + g * per_group if res.admitted[i] else 0
    return _result(trace, order, admitted, where)


def _admits(g: int, occupancy: int, config: AifoConfig) -> bool:
    # g/K <= B (C - occ) / C, cross-multiplied to stay exact for integer data
    C, K, B = config.capacity, config.window, config.burst
    rhs = B * (C - occupancy) * (K if config.normalized else 1)
    return g * C <= rhs + 1e-9


def aifo_simulate(trace: PacketTrace, config: AifoConfig = None) -> ScheduleResult:
    config = config or AifoConfig()
    K = config.window
    hist = list(trace.history) if trace.history is not None else []
    # empty window slots never count as lower-ranked
    seen = [trace.r_max + 1] * max(0, K - len(hist)) + hist[-K:]
    admitted, order = [], []
    for p, r in enumerate(trace.ranks):
        window = seen[-K:]
        g = sum(1 for w in window if w < r)
        ok = _admits(g, len(order), config)
        admitted.append(ok)
        if ok:
            order.append(p)
        seen.append(r)
    return _result(trace, order, admitted, [1 if a else 0 for a in admitted])


def simulate(name: str, trace: PacketTrace, sp: SpPifoConfig = None, aifo: AifoConfig = None) -> ScheduleResult:
    if name == "pifo":
        return pifo_simulate(trace)
    if name == "sp_pifo":
        return sp_pifo_simulate(trace, sp)
    if name == "aifo":
        return aifo_simulate(trace, aifo)
    raise ValueError(f"unknown scheduler {name!r}")


def sp_pifo_theorem_trace(P: int, r_max: int) -> Tuple[PacketTrace, int, int, int]:
    """(trace, predicted SP-PIFO minus PIFO weighted delay, p, p*).

    p zero-rank packets, one packet of rank R_max, then p* = P - 1 - p packets of
    rank R_max - 1, with p = ceil((P + 1) / 2) clipped to [1, P - 2].
    """
    if P < 3 or r_max < 2:
        raise ValueError("the construction needs P >= 3 and R_max >= 2")
    p = min(max(math.ceil((P + 1) / 2), 1), P - 2)
    p_star = P - 1 - p
    trace = PacketTrace([0] * p + [r_max] + [r_max - 1] * p_star, r_max)
    return trace, (r_max - 1) * p * p_star, p, p_star


# ---------------------------------------------------------------------------
# encodings

@dataclass
class SchedEncoding:
    """Per-packet delivery flags and pairwise 'p leaves after j' indicators."""

    delivered: List[LinExpr]
    after: Dict[Tuple[int, int], LinExpr]
    queue: List[List[Var]] = field(default_factory=list)   # SP-PIFO admission per queue


def rank_name(p: int) -> str:
    return f"R[{p}]"


def _mirror_rank(model: Model, name: str, r_max: int) -> Var:
    return model.var(name) if model.has_var(name) else model.integer(name, 0.0, float(r_max))


def _pairwise_after(model: Model, keys: Sequence[Operand], ctx) -> Dict[Tuple[int, int], LinExpr]:
    """after[p, j] = 1 iff p leaves after j, for sort keys where larger leaves first and
    earlier arrival wins ties."""
    after = {}
    n = len(keys)
    for p in range(n):
        for j in range(p):
            # j arrived first: p leaves after j unless p's key is strictly larger
            a = LinExpr.of(H.is_leq(model, keys[p], keys[j], ctx))
            after[p, j] = a
            after[j, p] = 1 - a
    return after


def pifo_constraints(model: Model, ranks: Sequence[Operand], ctx=None) -> SchedEncoding:
    ctx = ctx or H.BigMContext(epsilon=0.5)
    keys = [-LinExpr.of(r) for r in ranks]
    return SchedEncoding([LinExpr.of(1.0) for _ in ranks], _pairwise_after(model, keys, ctx))


def sp_pifo_constraints(model: Model, config: SpPifoConfig, ranks: Sequence[Operand], r_max: int,
                        ctx=None) -> SchedEncoding:
    ctx = ctx or H.BigMContext(epsilon=0.5)
    N = config.queues
    M = r_max + 2
    eps = 0.5
    bound: List[LinExpr] = [LinExpr() for _ in range(N)]
    admitted: List[List[Var]] = []
    occ = [LinExpr() for _ in range(N)]
    for p, r in enumerate(ranks):
        r = LinExpr.of(r)
        # push down by max(0, l_N - R_p)
        deficit = H.max_of(model, [bound[N - 1] - r], 0.0, ctx, f"push_down[{p}]")
        hat = [b - deficit for b in bound]
        x = [model.binary(f"x[{p}][{q + 1}]") for q in range(N)]
        for q in range(N):
            # x = 1 only if queue q admits (hat_q <= R) and queue q-1 does not (R < hat_{q-1})
            model.add_le(M * x[q] + hat[q] - r, M, f"which_queue[{p}]")
            prev = LinExpr.of(r_max + 1.0) if q == 0 else hat[q - 1]
            model.add_le(M * x[q] + r - prev, M - eps, f"which_queue[{p}]")
        model.add_eq(LinExpr.sum(x), 1.0, f"which_queue[{p}]")
        adm = []
        for q in range(N):
            if config.queue_capacity is not None and p >= config.queue_capacity:
                full = H.is_leq(model, float(config.queue_capacity), occ[q], ctx, f"full[{p}][{q + 1}]")
                adm.append(H.and_(model, [x[q], 1 - full], f"admit[{p}][{q + 1}]"))
            else:
                adm.append(x[q])
        new_bound = []
        for q in range(N):
            # push up: admitted queue takes the packet's rank
            # bounds stay ordered l_1 >= ... >= l_N >= 0, so every l lies in [0, R_max]
            l = model.continuous(f"l[{p}][{q + 1}]", 0.0, float(r_max))
            Mb = r_max + 1
            model.add_le(l - hat[q] - Mb * adm[q], 0.0, f"push_up[{p}]")
            model.add_ge(l - hat[q] + Mb * adm[q], 0.0, f"push_up[{p}]")
            model.add_le(l - r + Mb * adm[q], Mb, f"push_up[{p}]")
            model.add_ge(l - r - Mb * adm[q], -Mb, f"push_up[{p}]")
            new_bound.append(LinExpr.of(l))
            occ[q] = occ[q] + adm[q]
        bound = new_bound
        admitted.append(adm)
    delivered = [LinExpr.sum(a) for a in admitted]
    keys = [LinExpr.sum((q + 1) * admitted[p][q] for q in range(N)) for p in range(len(ranks))]
    enc = SchedEncoding(delivered, _pairwise_after(model, keys, ctx), admitted)
    return enc


def aifo_constraints(model: Model, config: AifoConfig, ranks: Sequence[Operand], r_max: int,
                     history: Optional[Sequence[Operand]] = None, ctx=None) -> SchedEncoding:
    """Window counts g_p, the occupancy-scaled threshold and admission a_p."""
    ctx = ctx or H.BigMContext(epsilon=1e-3)
    K, C, B = config.window, config.capacity, config.burst
    hist = list(history) if history is not None else []
    seen: List[LinExpr] = [LinExpr.of(float(r_max + 1))] * max(0, K - len(hist))
    seen += [LinExpr.of(h) for h in hist[-K:]]
    admitted: List[Var] = []
    for p, r in enumerate(ranks):
        r = LinExpr.of(r)
        flags = []
        for w in seen[-K:]:
            if not w.terms and w.constant > r_max:
                continue
            # g_pj = 1 iff the window rank is strictly lower: w + 1 <= R_p
            flags.append(H.is_leq(model, w + 1, r, ctx))
        g = LinExpr.sum(flags)
        occ = LinExpr.sum(admitted)
        scale = K if config.normalized else 1
        # admit iff C g <= scale B (C - occ)
        diff = C * g - scale * B * (C - occ)
        admitted.append(H.is_leq(model, diff, 0.0, ctx, f"admit[{p}]"))
        seen.append(r)
    n = len(ranks)
    after = {}
    for p in range(n):
        for j in range(n):
            if p != j:
                after[p, j] = LinExpr.of(1.0 if j < p else 0.0)
    return SchedEncoding([LinExpr.of(a) for a in admitted], after, [[a] for a in admitted])


def _rank_bits(model: Model, r: Operand, r_max: int, cache: Dict) -> List[Tuple[float, Var]]:
    key = tuple(sorted(LinExpr.of(r).terms.items())), LinExpr.of(r).constant
    if key not in cache:
        nbits = max(1, int(r_max).bit_length())
        bits = [(float(2 ** k), model.binary()) for k in range(nbits)]
        model.add_eq(LinExpr.sum(w * b for w, b in bits) - LinExpr.of(r), 0.0, "rank_bits")
        cache[key] = bits
    return cache[key]


def _pair_terms(model: Model, enc: SchedEncoding, p: int, j: int, extra: Sequence[Operand] = ()) -> LinExpr:
    parts = [enc.delivered[p], enc.delivered[j], enc.after[p, j], *extra]
    parts = [LinExpr.of(x) for x in parts]
    if any(not x.terms and x.constant == 0 for x in parts):
        return LinExpr()
    live = [x for x in parts if x.terms or x.constant != 1]
    if not live:
        return LinExpr.of(1.0)
    return LinExpr.of(H.and_(model, live))


def weighted_delay_expr(model: Model, enc: SchedEncoding, ranks: Sequence[Operand], r_max: int,
                        ctx=None) -> LinExpr:
    """Sum_p (R_max - R_p) * #{delivered j leaving before delivered p}."""
    ctx = ctx or H.BigMContext(epsilon=0.5)
    cache: Dict = {}
    total = LinExpr()
    n = len(ranks)
    for p in range(n):
        count = LinExpr.sum(_pair_terms(model, enc, p, j) for j in range(n) if j != p)
        if not count.terms:
            continue
        r = LinExpr.of(ranks[p])
        if not r.terms:
            total.iadd(count, r_max - r.constant)
            continue
        total.iadd(count, float(r_max))
        for w, bit in _rank_bits(model, r, r_max, cache):
            total.iadd(H.multiply(model, bit, count, ctx), -w)
    return total


def priority_inversion_expr(model: Model, enc: SchedEncoding, ranks: Sequence[Operand], ctx=None) -> LinExpr:
    """Delivered pairs where a strictly lower-priority packet leaves first."""
    ctx = ctx or H.BigMContext(epsilon=0.5)
    n = len(ranks)
    total = LinExpr()
    for p in range(n):
        for j in range(n):
            if j == p:
                continue
            # j leaves before p although R_j > R_p
            higher = H.is_leq(model, LinExpr.of(ranks[p]) + 1, ranks[j], ctx)
            total.iadd(_pair_terms(model, enc, p, j, [higher]))
    return total


def scheduler_follower(name: str, P: int, r_max: int, metric: str, sp: SpPifoConfig = None,
                       aifo: AifoConfig = None, history: Optional[Sequence[int]] = None,
                       free_history: bool = False) -> FollowerSpec:
    """Feasibility follower whose output is the scheduler's metric on the leader ranks."""
    fm = Model(name)
    ranks = [_mirror_rank(fm, rank_name(p), r_max) for p in range(P)]
    if name == "pifo":
        enc = pifo_constraints(fm, ranks)
    elif name == "sp_pifo":
        enc = sp_pifo_constraints(fm, sp or SpPifoConfig(), ranks, r_max)
    elif name == "aifo":
        cfg = aifo or AifoConfig()
        if free_history:
            hist = [_mirror_rank(fm, f"H[{k}]", r_max) for k in range(cfg.window)]
        else:
            hist = list(history) if history is not None else None
        enc = aifo_constraints(fm, cfg, ranks, r_max, hist)
    else:
        raise ValueError(f"unknown scheduler {name!r}")
    if metric == "weighted_delay":
        out = weighted_delay_expr(fm, enc, ranks, r_max)
    elif metric == "inversions":
        out = priority_inversion_expr(fm, enc, ranks)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return FollowerSpec(name, fm, output=out)


@dataclass
class SchedAnalysis:
    """Search rank traces that make one scheduler worse than another."""

    packets: int = 7
    r_max: int = 8
    heuristic: str = "sp_pifo"
    reference: str = "pifo"
    metric: str = "weighted_delay"
    sp: SpPifoConfig = field(default_factory=SpPifoConfig)
    aifo: AifoConfig = field(default_factory=AifoConfig)
    objective_mode: str = "max_gap"
    history: Optional[List[int]] = None
    free_history: bool = False

    def __post_init__(self):
        if self.heuristic not in SCHEDULERS or self.reference not in SCHEDULERS:
            raise ValueError("schedulers must be pifo, sp_pifo or aifo")
        if self.heuristic == self.reference:
            raise ValueError("reference and heuristic must differ")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.objective_mode not in ("max_gap", "min_gap"):
            raise ValueError(f"unknown objective mode {self.objective_mode!r}")
        if self.packets < 1:
            raise ValueError("need at least one packet")

    def to_dict(self) -> dict:
        return {"packets": self.packets, "r_max": self.r_max, "heuristic": self.heuristic,
                "reference": self.reference, "metric": self.metric, "sp_pifo": asdict(self.sp),
                "aifo": asdict(self.aifo), "objective_mode": self.objective_mode,
                "history": self.history, "free_history": self.free_history}

    def build(self):
        leader = Model("sched-leader")
        for p in range(self.packets):
            leader.integer(rank_name(p), 0.0, float(self.r_max))
        if self.free_history:
            for k in range(self.aifo.window):
                leader.integer(f"H[{k}]", 0.0, float(self.r_max))
        followers = [scheduler_follower(n, self.packets, self.r_max, self.metric, self.sp, self.aifo,
                                        self.history, self.free_history)
                     for n in (self.heuristic, self.reference)]
        sense = "max" if self.objective_mode == "max_gap" else "min"
        # a worse schedule has the larger metric, so the gap is heuristic minus reference
        bilevel = BilevelSpec(leader, followers, [(1.0, self.heuristic), (-1.0, self.reference)], sense)
        return bilevel, default_plan(bilevel)

    def compose(self):
        bilevel, plan = self.build()
        return compose(bilevel, plan, "sched", H.BigMContext(epsilon=0.5))

    def trace(self, ranks: Sequence[int], history: Optional[Sequence[int]] = None) -> PacketTrace:
        hist = list(history) if history is not None else self.history
        return PacketTrace(list(ranks), self.r_max, hist)

    def evaluate(self, ranks: Sequence[int], history: Optional[Sequence[int]] = None) -> Tuple[float, float, float]:
        """(gap, reference metric, heuristic metric) by direct simulation."""
        tr = self.trace([int(round(r)) for r in ranks], history)
        heur = simulate(self.heuristic, tr, self.sp, self.aifo).metric(self.metric)
        ref = simulate(self.reference, tr, self.sp, self.aifo).metric(self.metric)
        return heur - ref, ref, heur

    def solve(self, params: Optional[SolveParams] = None) -> GapReport:
        params = params or SolveParams()
        model = self.compose()
        model.freeze()
        sol, report = solve_milp(model, params)
        solver = dict(report.to_dict(), bound=sol.bound, mip_gap=sol.mip_gap, params=params.to_dict(),
                      variables=len(model.vars), constraints=len(model.constraints),
                      integral=model.num_integral)
        solver.pop("incumbent_history", None)
        series = best_so_far(report.incumbent_history, "max" if self.objective_mode == "max_gap" else "min")
        if not sol.has_point:
            return GapReport("sched", self.heuristic, self.reference, "composed", math.nan, math.nan,
                             math.nan, "ranks", [], sol.status.value, False, math.nan, solver, series,
                             self.to_dict())
        vals = model.leader_values(sol)
        ranks = [int(round(vals[rank_name(p)])) for p in range(self.packets)]
        history = ([int(round(vals[f"H[{k}]"])) for k in range(self.aifo.window)]
                   if self.free_history else None)
        gap, ref, heur = self.evaluate(ranks, history)
        validated = abs(gap - sol.objective) <= REPLAY_TOL
        extra = {"history": history} if history is not None else {}
        return GapReport("sched", self.heuristic, self.reference, "composed", gap, ref, heur, "ranks",
                         ranks, sol.status.value, validated, sol.objective, solver, series,
                         self.to_dict(), extra)

    def search_space(self):
        n = self.packets
        return list(range(n)), np.zeros(n), np.full(n, float(self.r_max))

"""Random fixed-input cases comparing encodings against the oracle simulators.

Each ``*_case`` returns ``(ok, detail)``: the encoded model, with its inputs
pinned, must reproduce the simulator's value.
"""

import math
import random

from gapfinder.model import Model, Status
from gapfinder.sched import (SCHEDULERS, AifoConfig, PacketTrace, SpPifoConfig, rank_name,
                             scheduler_follower, simulate as sched_simulate)
from gapfinder.solver import SolveParams, solve_milp
from gapfinder.te import DPConfig, Goalpost, POPConfig, TEAnalysis, random_topology
from gapfinder.te.simulate import simulate_dp, simulate_opt, simulate_pop
from gapfinder.vbp import VbpInstance, ffd_feasibility_constraints, ffd_order, ffd_simulate

TOL = 1e-6
FAST = SolveParams(backend="highs", time_limit=60, target_mip_gap=1e-9)


def te_case(rng: random.Random, heuristic: str):
    """Pin the demands with a zero-width goalpost so the free-demand encoding is exercised."""
    n = rng.randint(4, 7)
    # small capacities so that demands congest links and the heuristics lose flow
    topo = random_topology(n, seed=rng.randrange(10 ** 6), capacities=(10.0, 20.0, 30.0))
    pairs = rng.sample(topo.pairs, min(len(topo.pairs), rng.randint(3, 10)))
    d_max = 30.0
    threshold = float(rng.choice([4, 8, 12]))
    quantized = rng.random() < 0.4
    levels = [0.0, threshold / 2, threshold, d_max] if quantized else None
    if quantized:
        demands = {p: rng.choice(levels) for p in pairs}
    else:
        demands = {p: round(rng.uniform(0, d_max), 3) if rng.random() < 0.6 else
                   round(rng.uniform(0, threshold), 3) for p in pairs}
    seed = rng.randrange(1000)
    pop = POPConfig(partitions=2, samples=1, seed=seed)
    analysis = TEAnalysis(topo, heuristic, d_max=d_max, dp=DPConfig(threshold=threshold), pop=pop,
                          quantiles=levels, pairs=pairs, goalpost=Goalpost(demands, 0.0, "linf"))
    if heuristic == "dp":
        sim = simulate_dp(topo, demands, DPConfig(threshold=threshold))
        want, key = sim.objective, "dp"
    else:
        want, key = simulate_pop(topo, demands, pop, seed, pairs).objective, f"pop{seed}"
    want_opt = simulate_opt(topo, demands).objective
    model, _ = analysis.compose()
    model.freeze()
    sol, _ = solve_milp(model, FAST)
    if not math.isfinite(want):
        # pinned traffic alone overloads a link: the follower has no feasible point
        return sol.status is Status.INFEASIBLE, (demands, sol.status)
    if not sol.has_point:
        return False, (demands, sol.status)
    got, got_opt = model.follower_value(sol, key), model.follower_value(sol, "opt")
    ok = abs(got - want) <= TOL * max(1, abs(want)) and abs(got_opt - want_opt) <= TOL * max(1, want_opt)
    return ok, (demands, got, want, got_opt, want_opt)


def _grid_balls(rng, n, dims):
    return [[rng.randint(1, 20) / 20 for _ in range(dims)] for _ in range(n)]


def ffd_case(rng: random.Random):
    n, dims = rng.randint(1, 6), rng.randint(1, 3)
    inst = VbpInstance(dims, _grid_balls(rng, n, dims))
    order = ffd_order(inst.balls)
    sorted_inst = VbpInstance(dims, [inst.balls[i] for i in order])
    _, want = ffd_simulate(inst)
    values = []
    for sense in ("max", "min"):
        m = Model("ffd")
        enc = ffd_feasibility_constraints(m, sorted_inst)
        m.maximize(enc.bins_used) if sense == "max" else m.minimize(enc.bins_used)
        sol, _ = solve_milp(m.freeze(), FAST)
        values.append(sol.objective if sol.has_point else math.nan)
    return all(abs(v - want) <= TOL for v in values), (inst.balls, values, want)


def random_sched(rng: random.Random, max_packets: int = 10):
    P, r_max = rng.randint(1, max_packets), rng.randint(2, 8)
    trace = PacketTrace([rng.randint(0, r_max) for _ in range(P)], r_max)
    sp = SpPifoConfig(rng.randint(2, 4), rng.choice([None, None, 1, 2, 3]))
    aifo = AifoConfig(rng.randint(1, 8), rng.randint(1, 4), rng.choice([0.5, 1.0, 2.0]),
                      rng.choice([True, False]))
    return trace, sp, aifo


def sched_case(rng: random.Random, name: str, metric: str):
    """Max and min of the metric over the encoding's feasible set must both equal the simulator."""
    assert name in SCHEDULERS
    trace, sp, aifo = random_sched(rng)
    want = sched_simulate(name, trace, sp, aifo).metric(metric)
    values = []
    for sense in ("max", "min"):
        f = scheduler_follower(name, len(trace.ranks), trace.r_max, metric, sp, aifo)
        m = f.model
        for p, r in enumerate(trace.ranks):
            m.fix(m.var(rank_name(p)), r)
        m.maximize(f.output) if sense == "max" else m.minimize(f.output)
        sol, _ = solve_milp(m.freeze(), FAST)
        values.append(sol.objective if sol.has_point else math.nan)
    return all(abs(v - want) <= TOL for v in values), (trace, sp, aifo, values, want)


def run_cases(fn, count: int, seed: int, *args):
    rng = random.Random(seed)
    failures = []
    for _ in range(count):
        ok, detail = fn(rng, *args)
        if not ok:
            failures.append(detail)
    return failures

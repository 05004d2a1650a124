import itertools

import pytest
from hypothesis import given, settings, strategies as st

from fidelity import FAST, run_cases, sched_case
from gapfinder.sched import (AifoConfig, PacketTrace, SchedAnalysis, SpPifoConfig, aifo_simulate,
                             count_inversions, modified_sp_pifo_simulate, pifo_simulate, rank_name,
                             scheduler_follower, sp_pifo_simulate, sp_pifo_theorem_trace,
                             weighted_delay)
from gapfinder.solver import solve_milp

ranks_st = st.integers(2, 8).flatmap(
    lambda r: st.tuples(st.just(r), st.lists(st.integers(0, r), min_size=1, max_size=9)))


def reference_sp_pifo(ranks, n_queues, cap=None):
    """Queue bounds keyed by priority level, highest level served first."""
    bounds = {q: 0 for q in range(1, n_queues + 1)}       # q = n_queues is the top queue
    content = {q: [] for q in bounds}
    for p, r in enumerate(ranks):
        top = bounds[n_queues]
        if r < top:
            for q in bounds:
                bounds[q] -= top - r
        chosen = None
        for q in range(1, n_queues + 1):
            if bounds[q] <= r:
                chosen = q
                break
        if cap is not None and len(content[chosen]) == cap:
            continue
        content[chosen].append(p)
        bounds[chosen] = r
    return [p for q in range(n_queues, 0, -1) for p in content[q]]


def reference_aifo(ranks, r_max, C, K, B):
    admitted, window = [], []
    for r in ranks:
        recent = window[-K:]
        lower = sum(1 for w in recent if w < r)
        if lower / K <= B * (C - len(admitted)) / C + 1e-12:
            admitted.append(len(window))
        window.append(r)
    return admitted


# -- simulators ----------------------------------------------------------------

def test_pifo_two_equal_packets():
    res = pifo_simulate(PacketTrace([0, 0], 5))
    assert res.weighted_delay == 5
    assert res.order == [0, 1]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=6))
def test_pifo_minimizes_weighted_delay(ranks):
    best = min(weighted_delay(perm, ranks, 4) for perm in itertools.permutations(range(len(ranks))))
    assert pifo_simulate(PacketTrace(ranks, 4)).weighted_delay == best


@settings(max_examples=80, deadline=None)
@given(ranks_st, st.integers(2, 4), st.sampled_from([None, 1, 2, 3]))
def test_sp_pifo_matches_reference(data, queues, cap):
    r_max, ranks = data
    res = sp_pifo_simulate(PacketTrace(ranks, r_max), SpPifoConfig(queues, cap))
    assert res.order == reference_sp_pifo(ranks, queues, cap)


@settings(max_examples=80, deadline=None)
@given(ranks_st, st.integers(1, 6), st.integers(1, 4), st.sampled_from([0.5, 1.0, 2.0]))
def test_aifo_matches_reference(data, C, K, B):
    r_max, ranks = data
    res = aifo_simulate(PacketTrace(ranks, r_max), AifoConfig(C, K, B))
    assert res.order == reference_aifo(ranks, r_max, C, K, B)


def test_aifo_first_packet_admitted():
    assert aifo_simulate(PacketTrace([5], 8), AifoConfig(1, 4, 0.5)).admitted == [True]


def test_aifo_full_queue_admits_only_top_quantile():
    # after C admissions the threshold is zero: only packets with no lower-ranked window entry enter
    res = aifo_simulate(PacketTrace([3, 3, 4, 2], 8), AifoConfig(2, 2, 1.0))
    assert res.admitted == [True, True, False, True]


def test_aifo_raw_comparison_flag():
    # one lower-ranked packet in a window of two: 1/2 of the window vs 3/4 of the queue free
    trace = PacketTrace([0, 8], 8)
    norm = aifo_simulate(trace, AifoConfig(4, 2, 1.0, normalized=True))
    raw = aifo_simulate(trace, AifoConfig(4, 2, 1.0, normalized=False))
    assert norm.admitted[1] and not raw.admitted[1]


def test_sp_pifo_equal_ranks_match_pifo():
    trace = PacketTrace([3] * 5, 8)
    assert sp_pifo_simulate(trace, SpPifoConfig(2)).order == pifo_simulate(trace).order


@settings(max_examples=40, deadline=None)
@given(ranks_st, st.integers(2, 4))
def test_pifo_never_worse_than_sp_pifo(data, queues):
    r_max, ranks = data
    trace = PacketTrace(ranks, r_max)
    assert pifo_simulate(trace).weighted_delay <= sp_pifo_simulate(trace, SpPifoConfig(queues)).weighted_delay


def test_inversions_counted_in_dequeue_order():
    assert count_inversions([1, 0], [0, 5]) == 1
    assert pifo_simulate(PacketTrace([4, 1, 3, 0], 4)).inversions == 0
    assert sp_pifo_simulate(PacketTrace([2], 4)).inversions == 0


# -- worst-case trace -------------------------------------------------------------

@pytest.mark.parametrize("P,r_max", [(P, r) for P in (3, 4, 5, 7, 9, 15, 21) for r in (2, 8, 100)])
def test_worst_case_trace_gap(P, r_max):
    trace, gap, p, p_star = sp_pifo_theorem_trace(P, r_max)
    sp = sp_pifo_simulate(trace, SpPifoConfig(4))
    pifo = pifo_simulate(trace)
    assert sp.weighted_delay - pifo.weighted_delay == gap == (r_max - 1) * p * p_star
    assert pifo.weighted_delay == r_max * p * (p - 1) / 2 + p * p_star + p_star * (p_star - 1) / 2
    assert sp.inversions == p * p_star


def test_worst_case_trace_examples():
    assert sp_pifo_theorem_trace(7, 8)[1] == 56
    assert sp_pifo_theorem_trace(21, 100)[1] == 99 * 9 * 11
    with pytest.raises(ValueError):
        sp_pifo_theorem_trace(2, 8)


def test_modified_sp_pifo():
    trace, _, _, _ = sp_pifo_theorem_trace(9, 8)
    cfg = SpPifoConfig(4)
    assert modified_sp_pifo_simulate(trace, 1, cfg).order == sp_pifo_simulate(trace, cfg).order
    assert modified_sp_pifo_simulate(trace, 9, cfg).order == pifo_simulate(trace).order
    base = sp_pifo_simulate(trace, cfg).weighted_delay - pifo_simulate(trace).weighted_delay
    mod = modified_sp_pifo_simulate(trace, 2, cfg).weighted_delay - pifo_simulate(trace).weighted_delay
    assert mod < base


def test_trace_validation_and_roundtrip(tmp_path):
    with pytest.raises(ValueError):
        PacketTrace([9], 8)
    trace = PacketTrace([1, 2], 4)
    trace.save(tmp_path / "t.json")
    assert PacketTrace.load(tmp_path / "t.json") == trace


# -- encodings -----------------------------------------------------------------

@pytest.mark.parametrize("name", ["pifo", "sp_pifo", "aifo"])
@pytest.mark.parametrize("metric", ["weighted_delay", "inversions"])
def test_encoding_fidelity_sample(name, metric):
    assert run_cases(sched_case, 25, 3, name, metric) == []


def test_sp_pifo_queue_choice_matches_simulator():
    trace, _, _, _ = sp_pifo_theorem_trace(7, 8)
    cfg = SpPifoConfig(3)
    f = scheduler_follower("sp_pifo", 7, 8, "weighted_delay", cfg)
    for p, r in enumerate(trace.ranks):
        f.model.fix(f.model.var(rank_name(p)), r)
    f.model.minimize(f.output)
    sol, _ = solve_milp(f.model.freeze(), FAST)
    queues = [next(q for q in range(1, 4) if sol[f.model.var(f"x[{p}][{q}]")] > 0.5) for p in range(7)]
    assert queues == sp_pifo_simulate(trace, cfg).queues


def test_single_packet_lowest_queue():
    assert sp_pifo_simulate(PacketTrace([5], 8), SpPifoConfig(3)).queues == [1]


# -- analysis ------------------------------------------------------------------

def test_analysis_matches_enumeration():
    a = SchedAnalysis(packets=4, r_max=3, heuristic="sp_pifo", reference="pifo", sp=SpPifoConfig(2))
    best = max(a.evaluate(list(r))[0] for r in itertools.product(range(4), repeat=4))
    rep = a.solve(FAST)
    assert rep.validated
    assert rep.gap == best > 0


def test_analysis_aifo_inversions_with_free_history():
    a = SchedAnalysis(packets=4, r_max=3, heuristic="aifo", reference="sp_pifo", metric="inversions",
                      sp=SpPifoConfig(2), aifo=AifoConfig(4, 2, 1.0), free_history=True)
    rep = a.solve(FAST)
    assert rep.validated
    assert len(rep.extra["history"]) == 2
    best = max(a.evaluate(list(r), list(h))[0]
               for r in itertools.product(range(4), repeat=4) for h in itertools.product(range(4), repeat=2))
    assert rep.gap == best


def test_analysis_rejects_same_schedulers():
    with pytest.raises(ValueError):
        SchedAnalysis(heuristic="pifo", reference="pifo")

import itertools
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from fidelity import ffd_case, run_cases
from gapfinder.solver import SolveParams, solve_milp
from gapfinder.vbp import (VbpAnalysis, VbpInstance, ball_name, ffd_order, ffd_simulate, opt_bins,
                           opt_bins_bruteforce, theorem2_construct, vbp_opt_milp, vbp_result, weight)

HIGHS = SolveParams(backend="highs", time_limit=120)


def reference_ffd(balls, dims):
    """Plain first-fit decreasing over unit bins, written independently."""
    order = sorted(range(len(balls)), key=lambda i: (-round(sum(balls[i]), 9), i))
    bins = []
    for i in order:
        for load in bins:
            if all(load[d] + balls[i][d] <= 1.0 + 1e-9 for d in range(dims)):
                for d in range(dims):
                    load[d] += balls[i][d]
                break
        else:
            bins.append(list(balls[i]))
    return len(bins)


def test_weights():
    assert weight([0.2, 0.3]) == pytest.approx(0.5)
    assert weight([0.2, 0.3], "prod") == pytest.approx(0.06)
    assert weight([0.2, 0.4], "div") == pytest.approx(0.5)
    with pytest.raises(ValueError):
        weight([0.1], "nope")


def test_ffd_order_ties_by_index():
    assert ffd_order([[0.5, 0.0], [0.2, 0.3], [0.6, 0.0]]) == [2, 0, 1]


def test_ffd_exact_fill_fits():
    inst = VbpInstance(1, [[0.5], [0.5]])
    assert ffd_simulate(inst)[1] == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3).flatmap(lambda d: st.tuples(
    st.just(d), st.lists(st.lists(st.integers(0, 20).map(lambda k: k / 20), min_size=d, max_size=d),
                         min_size=1, max_size=7))))
def test_ffd_matches_reference(data):
    dims, balls = data
    _, used = ffd_simulate(VbpInstance(dims, balls))
    assert used == reference_ffd(balls, dims)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.integers(1, 10).map(lambda k: k / 10), min_size=2, max_size=2),
                min_size=1, max_size=6))
def test_opt_enumeration_matches_milp(balls):
    inst = VbpInstance(2, balls)
    spec = vbp_opt_milp(inst)
    for i, b in enumerate(balls):
        for d, v in enumerate(b):
            spec.model.fix(spec.model.var(ball_name(i, d)), v)
    sol, _ = solve_milp(spec.model.freeze(), HIGHS)
    assert sol.objective == pytest.approx(opt_bins_bruteforce(inst))
    assert opt_bins_bruteforce(inst) <= ffd_simulate(inst)[1]


def test_opt_lower_bound_by_volume():
    rng = random.Random(2)
    for _ in range(20):
        balls = [[rng.random(), rng.random()] for _ in range(6)]
        inst = VbpInstance(2, balls)
        vol = max(sum(b[d] for b in balls) for d in range(2))
        assert opt_bins(inst) >= math.ceil(vol - 1e-9)


@pytest.mark.parametrize("m,p", [(1, 0), (0, 1), (2, 0), (1, 1), (2, 1)])
def test_ffd_worst_case_construction(m, p):
    inst = theorem2_construct(m, p)
    assert len(inst.balls) == 6 * m + 9 * p
    assert ffd_simulate(inst)[1] == 4 * m + 6 * p
    assert opt_bins(inst) == 2 * m + 3 * p


def test_ffd_construction_rejects_empty():
    with pytest.raises(ValueError):
        theorem2_construct(0, 0)


def test_ffd_encoding_fidelity_sample():
    assert run_cases(ffd_case, 40, 5) == []


def test_instance_roundtrip(tmp_path):
    inst = theorem2_construct(1, 0)
    inst.save(tmp_path / "i.json")
    assert VbpInstance.load(tmp_path / "i.json").balls == inst.balls
    assert vbp_result(inst)["ratio"] == 2.0


def test_invalid_instance():
    with pytest.raises(ValueError):
        VbpInstance(2, [[0.5]])
    with pytest.raises(ValueError):
        VbpAnalysis(weight_fn="prod")


def test_composed_optimum_matches_enumeration():
    # every 4-ball 2-d input on the grid {0.25, 0.5, 0.75, 1}
    a = VbpAnalysis(balls=4, dims=2, granularity=0.25, strict_order=False, min_size=0.25)
    grid = [0.25, 0.5, 0.75, 1.0]
    best = max(a.evaluate([list(c[i:i + 2]) for i in (0, 2, 4, 6)])[0]
               for c in itertools.product(grid, repeat=8))
    rep = a.solve(HIGHS)
    assert rep.validated
    assert best == 1.0
    assert rep.gap == best


def test_evaluate_is_ffd_minus_opt():
    a = VbpAnalysis(balls=6, dims=2)
    gap, ffd, opt = a.evaluate(theorem2_construct(1, 0).balls)
    assert (gap, ffd, opt) == (2.0, 4.0, 2.0)

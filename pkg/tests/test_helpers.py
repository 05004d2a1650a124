import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapfinder import helpers as H
from gapfinder.model import Model, ModelError, Status
from gapfinder.solver import SolveParams, solve_milp


def feasible(m: Model) -> bool:
    if m.objective is None:
        m.minimize(0)
    sol, _ = solve_milp(m.freeze(), SolveParams(target_mip_gap=1e-9))
    return sol.status is Status.OPTIMAL


def fixed_var(m, name, value, lo=-10, hi=10, integer=True):
    v = m.integer(name, lo, hi) if integer else m.continuous(name, lo, hi)
    m.fix(v, value)
    return v


def binary_forced(build, expected: int):
    m = Model()
    b = build(m)
    m.fix(b, 1 - expected)
    assert not feasible(m), "opposite value must be infeasible"
    m = Model()
    b = build(m)
    m.fix(b, expected)
    assert feasible(m)


def test_is_leq_examples():
    binary_forced(lambda m: H.is_leq(m, fixed_var(m, "x", 3), fixed_var(m, "y", 5)), 1)
    binary_forced(lambda m: H.is_leq(m, fixed_var(m, "x", 5), fixed_var(m, "y", 3)), 0)


@pytest.mark.parametrize("x,y", list(itertools.product(range(-4, 5), repeat=2)))
def test_is_leq_grid(x, y):
    binary_forced(lambda m: H.is_leq(m, fixed_var(m, "x", x, -4, 4), fixed_var(m, "y", y, -4, 4)),
                  int(x <= y))


def test_is_leq_needs_magnitude():
    m = Model()
    x = m.continuous("x", 0, float("inf"))
    with pytest.raises(ModelError):
        H.is_leq(m, x, 3)
    H.is_leq(m, x, 3, H.BigMContext({x.id: 100.0}))


def test_all_leq_and_all_eq_examples():
    binary_forced(lambda m: H.all_leq(m, [fixed_var(m, "a", 1), fixed_var(m, "b", 2)], 2), 1)
    binary_forced(lambda m: H.all_leq(m, [fixed_var(m, "a", 1), fixed_var(m, "b", 3)], 2), 0)
    binary_forced(lambda m: H.all_eq(m, [fixed_var(m, f"a{i}", 0) for i in range(3)], 0), 1)
    binary_forced(lambda m: H.all_eq(m, [fixed_var(m, "a", 0), fixed_var(m, "b", 1)], 0), 0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_and_or_truth_tables(n):
    for bits in itertools.product((0, 1), repeat=n):
        def make(kind):
            def build(m):
                us = [fixed_var(m, f"u{i}", v, 0, 1) for i, v in enumerate(bits)]
                return (H.and_ if kind == "and" else H.or_)(m, us)
            return build
        binary_forced(make("and"), int(all(bits)))
        binary_forced(make("or"), int(any(bits)))


def test_and_or_empty():
    m = Model()
    a, o = H.and_(m, []), H.or_(m, [])
    assert m.bounds(a) == (1.0, 1.0) and m.bounds(o) == (0.0, 0.0)


def test_if_then():
    m = Model()
    b = m.binary("b")
    m.fix(b, 1)
    x = m.continuous("x", -20, 20)
    H.if_then(m, b, [(x, 7)])
    m.maximize(x)
    sol, _ = solve_milp(m.freeze())
    assert sol[x] == pytest.approx(7)
    m = Model()
    b = m.binary("b")
    m.fix(b, 0)
    x, y = m.continuous("x", -20, 20), m.continuous("y", -5, 5)
    H.if_then_else(m, b, [(x, 7)], [(y, 0)])
    m.maximize(x + y)
    sol, _ = solve_milp(m.freeze())
    assert sol[x] == pytest.approx(20) and sol[y] == pytest.approx(0)


@pytest.mark.parametrize("bval", [0, 1])
@pytest.mark.parametrize("xval", list(np.arange(-3, 3.01, 0.5)))
def test_multiply_grid(bval, xval):
    for lo in (-3.0, 0.0):
        if xval < lo:
            continue
        for sense in ("max", "min"):
            m = Model()
            b = fixed_var(m, "b", bval, 0, 1)
            x = fixed_var(m, "x", float(xval), lo, 3.0, integer=False)
            y = H.multiply(m, b, x)
            m.maximize(y) if sense == "max" else m.minimize(y)
            sol, _ = solve_milp(m.freeze())
            assert sol[y] == pytest.approx(bval * xval, abs=1e-7)


def test_multiply_nonnegative_uses_fewer_rows():
    m = Model()
    b, x = m.binary("b"), m.continuous("x", 0, 5)
    H.multiply(m, b, x)
    m2 = Model()
    b2, x2 = m2.binary("b"), m2.continuous("x", -1, 5)
    H.multiply(m2, b2, x2)
    assert len(m.constraints) < len(m2.constraints)
    assert all(c.tag.startswith("multiply") for c in m.constraints)


def extremum_value(xs, const, largest):
    for sense in ("max", "min"):
        m = Model()
        vs = [fixed_var(m, f"x{i}", v) for i, v in enumerate(xs)]
        y = (H.max_of if largest else H.min_of)(m, vs, const)
        m.maximize(y) if sense == "max" else m.minimize(y)
        sol, _ = solve_milp(m.freeze())
        yield sol[y]


def test_max_min_examples():
    assert all(v == pytest.approx(4) for v in extremum_value([1, 4, 2], 0, True))
    assert all(v == pytest.approx(3) for v in extremum_value([], 3, True))
    assert all(v == pytest.approx(0) for v in extremum_value([1, 4, 2], 0, False))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-10, 10), min_size=1, max_size=3), st.one_of(st.none(), st.integers(-10, 10)),
       st.booleans())
def test_max_min_random(xs, const, largest):
    pool = xs + ([const] if const is not None else [])
    want = max(pool) if largest else min(pool)
    assert all(v == pytest.approx(want) for v in extremum_value(xs, const, largest))


def chosen_sets(xs, us, largest):
    """All feasible selections, by enumerating the 0/1 outputs."""
    out = set()
    for bits in itertools.product((0, 1), repeat=len(xs)):
        m = Model()
        vs = [fixed_var(m, f"x{i}", v) for i, v in enumerate(xs)]
        uv = [fixed_var(m, f"u{i}", u, 0, 1) for i, u in enumerate(us)]
        bs = (H.find_largest_value if largest else H.find_smallest_value)(m, vs, uv)
        for b, bit in zip(bs, bits):
            m.fix(b, bit)
        if feasible(m):
            out.add(bits)
    return out


def expected_ok(xs, us, largest, bits):
    members = [x for x, u in zip(xs, us) if u]
    if not members:
        return not any(bits)
    best = max(members) if largest else min(members)
    if not any(bits):
        return False
    return all(not b or (u and x == best) for x, u, b in zip(xs, us, bits))


def test_find_largest_example():
    sets = chosen_sets([2, 9, 9], [1, 1, 0], True)
    assert sets == {(0, 1, 0)}


@pytest.mark.parametrize("largest", [True, False])
def test_find_extreme_grid(largest):
    rng = np.random.default_rng(1 if largest else 2)
    for _ in range(12):
        xs = list(rng.integers(-3, 4, 3))
        us = list(rng.integers(0, 2, 3))
        got = chosen_sets(xs, us, largest)
        want = {bits for bits in itertools.product((0, 1), repeat=3)
                if expected_ok(xs, us, largest, bits)}
        assert got == want, (xs, us)


def rank_value(y, xs):
    m = Model()
    yv = fixed_var(m, "y", y)
    r = H.rank(m, yv, [fixed_var(m, f"x{i}", v) for i, v in enumerate(xs)])
    m.maximize(r)
    hi, _ = solve_milp(m.freeze())
    return hi[r]


def test_rank_examples():
    assert rank_value(5, [1, 5, 9]) == pytest.approx(2)
    assert rank_value(0, [1, 5, 9]) == pytest.approx(0)


@settings(max_examples=30, deadline=None)
@given(st.integers(-4, 4), st.lists(st.integers(-4, 4), max_size=4))
def test_rank_grid(y, xs):
    assert rank_value(y, xs) == pytest.approx(sum(x <= y for x in xs))


@pytest.mark.parametrize("binary_v", [False, True])
@pytest.mark.parametrize("x,y", [(1, 2), (2, 2), (3, 2), (-4, 4), (4, -4)])
def test_force_to_zero(binary_v, x, y):
    for sense in ("max", "min"):
        m = Model()
        v = m.binary("v") if binary_v else m.continuous("v", -3, 6)
        H.force_to_zero_if_leq(m, v, fixed_var(m, "x", x), fixed_var(m, "y", y))
        m.maximize(v) if sense == "max" else m.minimize(v)
        sol, _ = solve_milp(m.freeze())
        lo, hi = (0, 1) if binary_v else (-3, 6)
        want = 0 if x <= y else (hi if sense == "max" else lo)
        assert sol[v] == pytest.approx(want)
        assert all(c.tag.startswith("force_to_zero_if_leq") for c in m.constraints)


def test_force_to_zero_expression():
    # v = d - f with d the demand and f a flow; small demands pin f = d
    m = Model()
    d = fixed_var(m, "d", 3, 0, 10, integer=False)
    f = m.continuous("f", 0, 10)
    H.force_to_zero_if_leq(m, d - f, d, 5)
    m.minimize(f)
    sol, _ = solve_milp(m.freeze())
    assert sol[f] == pytest.approx(3)


def test_helpers_do_not_touch_existing_rows():
    m = Model()
    x = m.integer("x", -4, 4)
    m.add_le(x, 3, "mine")
    before = [(c.lhs.copy().terms, c.sense, c.rhs, c.tag) for c in m.constraints]
    H.is_leq(m, x, 1)
    H.max_of(m, [x], 0)
    after = [(c.lhs.terms, c.sense, c.rhs, c.tag) for c in m.constraints[:1]]
    assert before == after

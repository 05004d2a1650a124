import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from gapfinder.model import LinExpr, Model, Status
from gapfinder.rewrite import (ALIGNED, FEASIBILITY, MISALIGNED, Aggregate, BilevelSpec,
                               FollowerSpec, QuantizationScheme, RewriteChoice, RewriteError,
                               check_plan, classify_alignment, compose, compose_combination,
                               percentile_index, sorting_network,
                               suggest_quantiles)
from gapfinder.solver import SolveParams, solve_milp

EXACT = SolveParams(target_mip_gap=1e-9)


def random_follower(rng, n_leader=2):
    """A small parametric LP: rows a.x (sense) b0 + e.I with random data."""
    fm = Model("f")
    ivars = [fm.continuous(f"I{k}", 0, 10) for k in range(n_leader)]
    xs = []
    for j in range(3):
        lo = float(rng.integers(-2, 1))
        hi = float(rng.integers(1, 6)) if rng.random() < 0.7 else math.inf
        xs.append(fm.continuous(f"x{j}", lo, hi))
    rows = []
    for _ in range(rng.integers(1, 4)):
        a = rng.integers(-3, 4, 3).astype(float)
        e = rng.integers(-1, 2, n_leader).astype(float)
        b0 = float(rng.integers(0, 8))
        sense = rng.choice(["<=", ">=", "=="], p=[0.6, 0.25, 0.15])
        lhs = LinExpr.sum(a[j] * xs[j] for j in range(3)) - LinExpr.sum(e[k] * ivars[k] for k in range(n_leader))
        {"<=": fm.add_le, ">=": fm.add_ge, "==": fm.add_eq}[sense](lhs, b0)
        rows.append((a, e, b0, sense))
    c = rng.integers(-3, 4, 3).astype(float)
    obj = LinExpr.sum(c[j] * xs[j] for j in range(3))
    sense = str(rng.choice(["max", "min"]))
    fm.maximize(obj) if sense == "max" else fm.minimize(obj)
    return fm, xs, rows, c, sense


def reference_value(fm, xs, rows, c, sense, ivals):
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for a, e, b0, s in rows:
        rhs = b0 + e @ ivals
        if s == "<=":
            A_ub.append(a); b_ub.append(rhs)
        elif s == ">=":
            A_ub.append(-a); b_ub.append(-rhs)
        else:
            A_eq.append(a); b_eq.append(rhs)
    bounds = [(fm.vars[x.id].lower, None if math.isinf(fm.vars[x.id].upper) else fm.vars[x.id].upper)
              for x in xs]
    res = linprog(-c if sense == "max" else c, A_ub=A_ub or None, b_ub=b_ub or None,
                  A_eq=A_eq or None, b_eq=b_eq or None, bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return -res.fun if sense == "max" else res.fun


def fidelity_case(kind, seed):
    rng = np.random.default_rng(seed)
    fm, xs, rows, c, sense = random_follower(rng)
    ivals = rng.integers(0, 8, 2).astype(float)
    leader = Model("leader")
    ivars = [leader.continuous(f"I{k}", 0, 10) for k in range(2)]
    scheme = None
    if kind == "qpd":
        # the quantized grid contains the target value; the constrained set selects it
        for v, x in zip(ivals, ivars):
            leader.add_eq(x, float(v))
        scheme = QuantizationScheme(default=sorted(set(float(v) for v in ivals) | {10.0}))
    else:
        for v, x in zip(ivals, ivars):
            leader.fix(x, float(v))
    # a misaligned follower forces the optimality rewrite
    spec = BilevelSpec(leader, [FollowerSpec("h", fm)], [(-1.0 if sense == "max" else 1.0, "h")])
    try:
        out = compose(spec, {"h": RewriteChoice(kind, scheme, dual_bound=1e3)})
    except RewriteError:
        out = compose(spec, {"h": RewriteChoice(kind, scheme, dual_bound=1e3, slack_bound=1e3)})
    got = []
    for s in ("max", "min"):
        m = out.copy()
        (m.maximize if s == "max" else m.minimize)(out.placeholders["h"])
        sol, _ = solve_milp(m.freeze(), EXACT)
        got.append(sol.objective if sol.status is Status.OPTIMAL else None)
    return got, reference_value(fm, xs, rows, c, sense, ivals)


@pytest.mark.parametrize("kind", ["kkt", "pd", "qpd"])
def test_follower_fidelity(kind):
    """For fixed inputs the rewritten set pins the follower value to its LP optimum."""
    solved = infeasible = 0
    for seed in range(200):
        got, ref = fidelity_case(kind, seed)
        if ref is None:
            assert got == [None, None], seed
            infeasible += 1
        else:
            assert got[0] == pytest.approx(ref, abs=1e-6), seed
            assert got[1] == pytest.approx(ref, abs=1e-6), seed
            solved += 1
    assert solved >= 100 and solved + infeasible == 200


def simple_bilevel(d_value=5.0):
    """Follower max f s.t. f <= d, f <= 8 with a leader-fixed d."""
    leader = Model("leader")
    d = leader.continuous("d", 0, 10)
    leader.fix(d, d_value)
    fm = Model("h")
    fd, f = fm.continuous("d", 0, 10), fm.continuous("f", 0, math.inf)
    fm.add_le(f, fd)
    fm.add_le(f, 8)
    fm.maximize(f)
    return leader, FollowerSpec("h", fm)


@pytest.mark.parametrize("kind", ["kkt", "pd"])
def test_rewrite_forces_analytic_optimum(kind):
    leader, h = simple_bilevel(5.0)
    spec = BilevelSpec(leader, [h], [(-1.0, "h")])
    out = compose(spec, {"h": RewriteChoice(kind)})
    sol, _ = solve_milp(out.freeze(), EXACT)
    assert out.follower_value(sol, "h") == pytest.approx(5.0)


def test_alignment_rules():
    leader, h = simple_bilevel()
    opt = FollowerSpec("opt", h.model.copy())
    feas = Model("ffd")
    feas.add_le(feas.continuous("d", 0, 10), 10)
    spec = BilevelSpec(leader, [opt, h, FollowerSpec("ffd", feas, output=LinExpr())],
                       [(1.0, "opt"), (-1.0, "h"), (1.0, "ffd")])
    assert classify_alignment(spec, "opt") == ALIGNED
    assert classify_alignment(spec, "h") == MISALIGNED
    assert classify_alignment(spec, "ffd") == FEASIBILITY
    # a minimization follower under a negative sign is aligned
    mm = h.model.copy()
    mm.minimize(LinExpr())
    spec2 = BilevelSpec(leader, [FollowerSpec("vbp", mm)], [(-1.0, "vbp")])
    assert classify_alignment(spec2, "vbp") == ALIGNED
    # a minimizing leader flips every sign
    spec3 = BilevelSpec(leader, [opt], [(1.0, "opt")], sense="min")
    assert classify_alignment(spec3, "opt") == MISALIGNED


def test_plan_validation():
    leader, h = simple_bilevel()
    spec = BilevelSpec(leader, [h], [(-1.0, "h")])
    with pytest.raises(RewriteError):
        check_plan(spec, {"h": RewriteChoice("inline")})
    with pytest.raises(RewriteError):
        check_plan(spec, {})
    with pytest.raises(RewriteError):
        RewriteChoice("qpd")
    integer = h.model.copy()
    integer.integer("k", 0, 3)
    spec_int = BilevelSpec(leader, [FollowerSpec("h", integer)], [(-1.0, "h")])
    with pytest.raises(RewriteError):
        check_plan(spec_int, {"h": RewriteChoice("kkt")})
    aligned = BilevelSpec(leader, [h], [(1.0, "h")])
    with pytest.raises(RewriteError):
        check_plan(aligned, {"h": RewriteChoice("kkt")})
    check_plan(aligned, {"h": RewriteChoice("kkt")}, strict=False)
    coef = FollowerSpec("h", h.model.copy(), coefficient_terms=[(0, "d", "f", 1.0)])
    with pytest.raises(RewriteError):
        check_plan(BilevelSpec(leader, [coef], [(-1.0, "h")]), {"h": RewriteChoice("kkt")})
    assert coef.leader_var_positions(["d"]) == {"d": {"rhs", "coefficient"}}


def test_empty_follower_is_zero():
    leader = Model("leader")
    leader.continuous("d", 0, 1)
    spec = BilevelSpec(leader, [FollowerSpec("e", Model("e"))], [(1.0, "e")])
    out = compose(spec)
    sol, _ = solve_milp(out.freeze())
    assert sol.objective == pytest.approx(0.0)


def test_unbounded_follower_has_no_dual():
    leader = Model("leader")
    leader.fix(leader.continuous("d", 0, 10), 1.0)
    fm = Model("h")
    fm.continuous("d", 0, 10)
    f = fm.continuous("f", 0, math.inf)
    fm.add_ge(f, 1)
    fm.maximize(f)
    spec = BilevelSpec(leader, [FollowerSpec("h", fm)], [(-1.0, "h")])
    out = compose(spec, {"h": RewriteChoice("pd", slack_bound=100.0)})
    sol, _ = solve_milp(out.freeze())
    assert sol.status is Status.INFEASIBLE


def test_strong_duality_residual_zero_at_optimum():
    leader, h = simple_bilevel(3.0)
    out = compose(BilevelSpec(leader, [h], [(-1.0, "h")]), {"h": RewriteChoice("pd")})
    sol, _ = solve_milp(out.freeze(), EXACT)
    row = [c for c in out.constraints if c.tag.endswith("strong_duality")][0]
    assert abs(row.slack(sol.assignment)) < 1e-9 or row.slack(sol.assignment) <= 0


def test_qpd_scheme_zero_only_gives_zero():
    leader = Model("leader")
    leader.continuous("d", 0, 10)
    _, h = simple_bilevel()
    opt = FollowerSpec("opt", h.model.copy())
    spec = BilevelSpec(leader, [opt, h], [(1.0, "opt"), (-1.0, "h")])
    out = compose(spec, {"opt": RewriteChoice("inline"),
                         "h": RewriteChoice("qpd", QuantizationScheme(default=[0.0]))})
    sol, _ = solve_milp(out.freeze(), EXACT)
    assert sol.objective == pytest.approx(0.0)
    assert out.leader_values(sol)["d"] == pytest.approx(0.0)


def test_qpd_needs_levels_for_bilinear_vars():
    leader = Model("leader")
    leader.continuous("d", 0, 10)
    _, h = simple_bilevel()
    spec = BilevelSpec(leader, [h], [(-1.0, "h")])
    with pytest.raises(RewriteError):
        compose(spec, {"h": RewriteChoice("pd")})
    with pytest.raises(RewriteError):
        compose(spec, {"h": RewriteChoice("qpd", QuantizationScheme(levels={"other": [1.0]}))})


def constant_follower(name, value):
    fm = Model(name)
    v = fm.continuous("v", -100, 100)
    fm.add_eq(v, value)
    fm.maximize(v)
    return FollowerSpec(name, fm)


def test_combination_of_constants():
    leader = Model("leader")
    leader.continuous("d", 0, 1)
    spec = BilevelSpec(leader, [constant_follower("a", 3.0), constant_follower("b", 5.0)],
                       [(1.0, "a"), (1.0, "b")])
    out = compose_combination(spec, ["a", "b"])
    sol, _ = solve_milp(out.freeze(), EXACT)
    assert sol.objective == pytest.approx(5.0)
    single = compose_combination(spec, ["a"])
    sol, _ = solve_milp(single.freeze(), EXACT)
    assert sol.objective == pytest.approx(8.0)


def test_heuristic_vs_heuristic_and_min_gap():
    leader = Model("leader")
    leader.continuous("d", 0, 10)
    fa = Model("a")
    da, fa_f = fa.continuous("d", 0, 10), fa.continuous("f", 0, 10)
    fa.add_le(fa_f, da)
    fa.maximize(fa_f)
    fb = Model("b")
    db, fb_f = fb.continuous("d", 0, 10), fb.continuous("f", 0, 10)
    fb.add_le(fb_f, 0.5 * db)
    fb.maximize(fb_f)
    h1, h2 = FollowerSpec("h1", fa), FollowerSpec("h2", fb)
    spec = BilevelSpec(leader, [h1, h2], [(1.0, "h1"), (-1.0, "h2")])
    sol, _ = solve_milp(compose(spec).freeze(), EXACT)
    assert sol.objective == pytest.approx(5.0)   # d = 10: 10 - 5
    suitable = BilevelSpec(leader, [h1, h2], [(1.0, "h1"), (-1.0, "h2")], sense="min")
    out = compose(suitable)
    sol, _ = solve_milp(out.freeze(), EXACT)
    assert sol.objective == pytest.approx(0.0)
    assert out.leader_values(sol)["d"] == pytest.approx(0.0)


@pytest.mark.parametrize("n", range(1, 9))
def test_sorting_network_zero_one_principle(n):
    pairs = sorting_network(n)
    for bits in itertools.product((0, 1), repeat=n):
        v = list(bits)
        for a, b in pairs:
            if v[a] > v[b]:
                v[a], v[b] = v[b], v[a]
        assert v == sorted(bits)


def test_percentile_aggregate():
    leader = Model("leader")
    leader.continuous("d", 0, 1)
    fol = [constant_follower(f"s{i}", v) for i, v in enumerate([4.0, -2.0, 9.0, 1.0, 6.0])]
    for q, want in [(0.0, -2.0), (0.5, 4.0), (0.9, 9.0), (0.2, -2.0), (0.4, 1.0)]:
        agg = Aggregate("percentile", tuple(f.name for f in fol), q)
        spec = BilevelSpec(leader, fol, [(1.0, agg)])
        sol, _ = solve_milp(compose(spec).freeze(), SolveParams(backend="highs"))
        assert sol.objective == pytest.approx(want), q
        assert sorted([4, -2, 9, 1, 6])[percentile_index(5, q)] == want
    spec = BilevelSpec(leader, fol, [(1.0, Aggregate("mean", tuple(f.name for f in fol)))])
    sol, _ = solve_milp(compose(spec).freeze())
    assert sol.objective == pytest.approx(18.0 / 5)


def test_suggest_quantiles():
    assert suggest_quantiles([], 2, {"d": 10.0}) == {"d": [0.0, 10.0]}
    sols = [{"d": 7.0}] * 5 + [{"d": 0.0}] * 4 + [{"d": 3.0}]
    assert suggest_quantiles(sols, 2, {"d": 10.0}) == {"d": [0.0, 7.0, 10.0]}


def test_plan_round_trip():
    choice = RewriteChoice.from_dict({"follower": "dp", "rewrite": "qpd", "quantiles": [0, 50, 100]})
    assert choice.scheme.levels_for("any") == [0.0, 50.0, 100.0]
    assert RewriteChoice.from_dict(choice.to_dict()).to_dict() == choice.to_dict()


def test_inline_matches_kkt_on_small_instances():
    """Merging an aligned follower leaves the composed optimum unchanged versus KKT."""
    rng = np.random.default_rng(7)
    checked = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        fm, *_ = random_follower(rng, 1)
        leader = Model("leader")
        leader.continuous("I0", 0, 10)
        leader.add_le(leader.var("I0"), float(rng.integers(1, 10)))
        sign = 1.0 if fm.objective.sense == "max" else -1.0
        spec = BilevelSpec(leader, [FollowerSpec("h", fm)], [(sign, "h")])
        a, _ = solve_milp(compose(spec, {"h": RewriteChoice("inline")}).freeze(), EXACT)
        try:
            out = compose(spec, {"h": RewriteChoice("kkt", dual_bound=1e3)}, strict=False)
        except RewriteError:
            out = compose(spec, {"h": RewriteChoice("kkt", dual_bound=1e3, slack_bound=1e3)},
                          strict=False)
        b, _ = solve_milp(out.freeze(), EXACT)
        if a.status is Status.OPTIMAL:
            assert b.objective == pytest.approx(a.objective, abs=1e-6), seed
            checked += 1
    assert checked >= 10

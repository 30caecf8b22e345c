"""Acceptance criteria, one test (or group) per criterion.

The terminal summary prints one ``criterion NN: PASS|FAIL`` line each.
"""

import numpy as np
import pytest
from scipy.optimize import brentq

from oracles import (
    deterministic_quadratic_fp,
    enumerable_toy,
    grid_points,
    grid_sup,
    lp_min_max,
    lp_ratio_root,
)
from robfrac import conic
from robfrac.casestudies import (
    appendix_a_check,
    dea_simulate,
    load_dea,
    newsvendor_program,
    newsvendor_solve,
    perfect_hindsight,
    rank_from_efficiencies,
)
from robfrac.expr import (
    AffineResidual,
    ChiSquareDivergence,
    HellingerDivergence,
    MaxNeg,
    QuadBiaffine,
    ScenarioVariance,
    concave_conjugate,
)
from robfrac.reformulate import (
    FractionalProgram,
    build_s1,
    robust_feasible,
    robust_value,
    robustify_constraint,
)
from robfrac.rootfind import (
    ParametricFamily,
    bisect,
    dinkelbach,
    evaluate_F,
    worst_case_ratio,
)
from robfrac.usets import (
    make_box,
    make_budget_set,
    make_chi2_simplex,
    make_hellinger_simplex,
    make_singleton,
)

criterion = pytest.mark.criterion


# ---------------------------------------------------------------------------
# instance suites


def objective_only_instance(seed):
    """Variance-to-mean ratio on the scaled simplex with a chi2 (odd seeds)
    or Hellinger (even seeds) set; constraints are certain."""
    rng = np.random.default_rng(1000 + seed)
    # fewer assets than scenarios, so no portfolio has zero variance
    S = int(rng.integers(3, 11))
    n = int(rng.integers(2, min(4, S - 1) + 1))
    R = 1.0 + 0.3 * rng.normal(size=(S, n))
    p = rng.dirichlet(np.full(S, 3.0))
    # radii below min(p) keep the ball off the simplex faces, so the set is
    # strictly convex and the worst case at the optimum is unique
    rho = float(rng.uniform(0.2, 0.9) * p.min())
    U = make_chi2_simplex(p, rho) if seed % 2 else make_hellinger_simplex(p, rho)
    return FractionalProgram(ScenarioVariance(R), QuadBiaffine.scenario_mean(R), n, U,
                             A_eq=np.ones((1, n)), b_eq=[1.0], lower=np.zeros(n),
                             name=f"objective-only-{seed}")


def enumerable_ratio_instance(seed):
    """Certain linear ratio with one robust row over a box or budget set on
    up to six coordinates; returns ``(fp, vertices, row)``."""
    rng = np.random.default_rng(2000 + seed)
    m = int(rng.integers(2, 7))
    center, half = rng.uniform(0.5, 1.5, m), rng.uniform(0.05, 0.4, m)
    U = make_box(center, half) if seed % 2 else make_budget_set(center, half, float(seed % 4 + 1))
    h = QuadBiaffine(m, m, c0=-float(m), B=np.eye(m))
    # f >= 0.1 m on [0, 2]^m
    f = QuadBiaffine(m, 0, c0=float(m), cx=-rng.uniform(0.1, 0.45, m))
    g = QuadBiaffine(m, 0, c0=1.0, cx=rng.uniform(0.2, 1.0, m))
    fp = FractionalProgram(f, g, m, make_singleton(np.zeros(0)), constraints=[(h, U)],
                           lower=np.zeros(m), upper=np.full(m, 2.0), name=f"enum-{seed}")
    return fp, U.vertices(), h


SUITE4 = list(range(50))
SUITE5 = list(range(20))
SUITE7 = list(range(1, 21))
SUITE8 = list(range(12))


def root_of_F(fp):
    F = lambda al: evaluate_F(fp, al)[0]  # noqa: E731
    hi = 1.0
    while F(hi) > 0:
        hi *= 2.0
    return brentq(F, 0.0, hi, xtol=1e-12, rtol=1e-14)


# ---------------------------------------------------------------------------
# 1-3: data-driven reproductions


@criterion(1, "DEA rankings over the gamma sweep")
def test_dea_rankings(dea_gamma_table):
    gammas, table = dea_gamma_table
    wrong = []
    for gm, eff in zip(gammas, table):
        expected = (1, 2, 3, 5, 4) if gm <= 0.2 + 1e-9 else (1, 2, 5, 3, 4)
        got = rank_from_efficiencies(eff)[0]
        if got != expected:
            wrong.append((float(gm), got))
    assert not wrong, f"rankings differ at {len(wrong)} budgets: {wrong}"


def test_dea_switch_between_units_3_and_5(dea_gamma_table):
    gammas, table = dea_gamma_table
    for gm, eff in zip(gammas, table):
        if gm <= 0.2 + 1e-9:
            assert eff[2] > eff[4], gm
        else:
            assert eff[4] > eff[2], gm


@criterion(2, "DEA simulation fraction")
def test_dea_simulation():
    d = load_dea()
    uniform = dea_simulate(d, 100, seed=0, mode="uniform")
    endpoints = dea_simulate(d, 100, seed=0, mode="endpoints")
    assert 0.55 <= uniform <= 0.95
    assert endpoints > 0.5


@criterion(3, "nonconvex counterexample")
def test_appendix_a():
    out = appendix_a_check()
    assert out.val_at_lin_point == pytest.approx(0.2078, abs=1e-3)
    assert out.best_found_val <= 0.06 + 1e-3
    assert out.best_found_val < out.val_at_lin_point


# ---------------------------------------------------------------------------
# 4-9: property suites


@criterion(4, "single solve equals the root of F")
@pytest.mark.parametrize("seed", SUITE4)
def test_single_solve_duality(seed):
    fp = deterministic_quadratic_fp(seed)
    res = conic.solve(build_s1(fp))
    assert res.ok
    assert float(res.value("alpha")[0]) == pytest.approx(root_of_F(fp), abs=1e-6)


@criterion(5, "perfect hindsight at the worst case equals the robust optimum")
@pytest.mark.parametrize("seed", SUITE5)
def test_hindsight_equality(seed):
    fp = objective_only_instance(seed)
    sol, _ = bisect(fp, tol=1e-9)
    _, a0 = worst_case_ratio(fp, sol.x)
    assert perfect_hindsight(fp, a0).alpha == pytest.approx(sol.alpha, abs=1e-6)


def test_hindsight_bounded_on_flat_faces():
    """A chi2 ball that reaches a simplex face can have several worst cases;
    hindsight at any of them is at most the robust optimum."""
    rng = np.random.default_rng(13)
    R = 1.0 + 0.3 * rng.normal(size=(4, 3))
    p = np.array([0.12, 0.17, 0.12, 0.59])
    fp = FractionalProgram(ScenarioVariance(R), QuadBiaffine.scenario_mean(R), 3,
                           make_chi2_simplex(p, 0.32), A_eq=np.ones((1, 3)), b_eq=[1.0],
                           lower=np.zeros(3))
    sol, _ = bisect(fp, tol=1e-8)
    _, a0 = worst_case_ratio(fp, sol.x)
    assert perfect_hindsight(fp, a0).alpha <= sol.alpha + 1e-6


def _conjugate_cases(rng):
    """``(label, closed form, brute force)`` pairs for 100 random arguments."""
    cases = []
    for k in range(100):
        dim = 2 + k % 2
        p = rng.dirichlet(np.full(dim, 2.0))
        kind = k % 5
        if kind == 0:
            tau = ChiSquareDivergence(p, float(rng.uniform(0.1, 1.0)))
            v = rng.uniform(-1.5, 1.5, dim)
            pts = grid_points(dim, radius=1.5, step=0.05) + 0.5
            cases.append(("chi2", tau.convex_conjugate(v),
                          grid_sup(np.array([tau.value(a) for a in pts]), v, pts, polish=tau.value)))
        elif kind == 1:
            tau = HellingerDivergence(p, float(rng.uniform(0.01, 0.2)))
            v = rng.uniform(-2.0, 0.5, dim)
            pts = grid_points(dim, radius=2.25, step=0.05) + 2.25

            def val(a, tau=tau):
                return tau.value(a) if np.all(a >= 0) else np.inf

            cases.append(("hellinger", tau.convex_conjugate(v),
                          grid_sup(np.array([val(a) for a in pts]), v, pts, polish=val)))
        elif kind == 2:
            tau = MaxNeg(dim)
            v = -rng.dirichlet(np.ones(dim))
            pts = grid_points(dim, radius=2.0, step=0.05)
            cases.append(("max-neg", tau.convex_conjugate(v),
                          grid_sup(np.array([tau.value(a) for a in pts]), v, pts)))
        elif kind == 3:
            w, c = rng.normal(size=dim), float(rng.normal())
            tau = AffineResidual(w, c)
            pts = grid_points(dim, radius=2.0, step=0.05)
            cases.append(("affine", tau.convex_conjugate(w),
                          grid_sup(np.array([tau.value(a) for a in pts]), w, pts)))
        else:
            M = rng.normal(size=(dim, 2))
            f = ScenarioVariance(M)
            x = rng.normal(size=2)
            u = M @ x
            z = float(rng.uniform(-1.0, 1.0))
            s = u ** 2 + u * z
            pts = grid_points(dim, radius=3.0, step=0.01 if dim == 2 else 0.05)
            vals = pts @ u ** 2 - (pts @ u) ** 2
            cases.append(("variance", concave_conjugate(f, s, x), -grid_sup(-vals, -s, pts)))
    return cases


@criterion(6, "closed-form conjugates against brute force and the Fenchel inequality")
def test_conjugates_against_grid():
    rng = np.random.default_rng(6)
    bad = [(label, closed, brute) for label, closed, brute in _conjugate_cases(rng)
           if abs(closed - brute) > 1e-2]
    assert not bad, bad[:5]


@criterion(6, "closed-form conjugates against brute force and the Fenchel inequality")
def test_fenchel_pairs():
    rng = np.random.default_rng(66)
    worst = -np.inf
    for k in range(1000):
        dim = 2 + k % 2
        p = rng.dirichlet(np.full(dim, 2.0))
        tau = [ChiSquareDivergence(p, 0.5), HellingerDivergence(p, 0.05), MaxNeg(dim),
               AffineResidual(np.ones(dim), -1.0)][k % 4]
        a = tau.sample_a(rng)
        # arguments inside each conjugate's domain
        v = [rng.normal(size=dim), rng.uniform(-2.0, 0.9, dim), -rng.dirichlet(np.ones(dim)),
             np.ones(dim)][k % 4]
        cv = tau.convex_conjugate(v)
        assert np.isfinite(cv)
        worst = max(worst, v @ a - tau.value(a) - cv)
    assert worst <= 1e-9


@criterion(7, "F is nonincreasing and changes sign at the optimum")
@pytest.mark.parametrize("seed", SUITE7)
def test_F_characterization(seed):
    fp, rows_f, rows_g = enumerable_toy(seed)
    star = lp_ratio_root(rows_f, rows_g, fp.lower, fp.upper, fp.A_ub, fp.b_ub)
    fam = ParametricFamily(fp)
    alphas = np.linspace(0.0, 2.0 * star + 0.5, 50)
    F = np.array([evaluate_F(fp, al, family=fam)[0] for al in alphas])
    assert np.all(np.diff(F) <= 1e-9)
    above, below = alphas > star + 1e-6, alphas < star - 1e-6
    assert np.all(F[above] < 0) and np.all(F[below] > 0)


@criterion(8, "counterparts match vertex enumeration")
@pytest.mark.parametrize("seed", SUITE8)
def test_constraint_counterpart_enumeration(seed):
    from scipy.optimize import linprog

    fp, verts, h = enumerable_ratio_instance(seed)
    m = fp.n
    rng = np.random.default_rng(seed)
    cost = -rng.uniform(0.5, 1.5, m)
    b = conic.ProgramBuilder()
    x = b.var("x", m)
    robustify_constraint(h, fp.constraints[0][1], b, x)
    b.nonneg(x)
    b.nonneg(2.0 - x)
    b.minimize(x.dot(cost))
    res = conic.solve(b.build())
    ref = linprog(cost, A_ub=verts, b_ub=np.full(len(verts), float(m)),
                  bounds=[(0, 2)] * m, method="highs")
    assert res.objective == pytest.approx(ref.fun, abs=1e-6)
    xt = rng.uniform(0.0, 2.0, m)
    assert robust_value(h, fp.constraints[0][1], xt)[0] == pytest.approx(
        max(h.value(xt, v) for v in verts), abs=1e-6)


@criterion(8, "counterparts match vertex enumeration")
@pytest.mark.parametrize("seed", range(1, 13))
def test_objective_counterpart_enumeration(seed):
    fp, rows_f, rows_g = enumerable_toy(seed)
    for alpha in (0.2, 0.8, 1.5):
        ref, _ = lp_min_max(rows_f, rows_g, alpha, fp.lower, fp.upper, fp.A_ub, fp.b_ub)
        assert evaluate_F(fp, alpha)[0] == pytest.approx(ref, abs=1e-6)


def _suite_instances():
    out = [("det", s) for s in SUITE4] + [("objective", s) for s in SUITE5]
    out += [("toy", s) for s in SUITE7] + [("enum", s) for s in SUITE8]
    return out


def _build(kind, seed):
    if kind == "det":
        return deterministic_quadratic_fp(seed)
    if kind == "objective":
        return objective_only_instance(seed)
    if kind == "toy":
        return enumerable_toy(seed)[0]
    return enumerable_ratio_instance(seed)[0]


@criterion(9, "bisection and both Dinkelbach variants agree")
@pytest.mark.parametrize("kind,seed", _suite_instances(), ids=lambda v: str(v))
def test_cross_method_agreement(kind, seed):
    tol = 1e-7
    fp = _build(kind, seed)
    a_bis = bisect(fp, tol=tol)[0].alpha
    a_b = dinkelbach(fp, "b", tol=tol)[0].alpha
    a_c = dinkelbach(fp, "c", tol=tol)[0].alpha
    assert a_b == pytest.approx(a_bis, abs=10 * tol)
    assert a_c == pytest.approx(a_bis, abs=10 * tol)


# ---------------------------------------------------------------------------
# 10-12: case-study properties


@criterion(10, "mean-variance orderings and hindsight")
def test_meanvar_properties(meanvar_seed1):
    d, s = meanvar_seed1
    assert s["seed"] == 1 and d.rho == 1.0 and d.capital == 100.0
    np.testing.assert_allclose(d.p_hat, 0.02)
    assert s["nominal_at_estimate"] <= s["robust_at_estimate"]
    assert s["robust_worst"] <= s["nominal_worst"]
    assert s["hindsight_at_robust_worst"] == pytest.approx(s["robust_value"], abs=1e-6)


@criterion(11, "newsvendor orderings, hindsight and dual recovery")
def test_newsvendor_properties(newsvendor_bundled):
    data, s = newsvendor_bundled
    # returns on investment are maximized
    assert s["nominal_at_estimate"] >= s["robust_at_estimate"]
    assert s["robust_worst"] >= s["nominal_worst"]
    assert s["hindsight_at_robust_worst"] == pytest.approx(s["robust_value"], abs=1e-6)
    _, roi, info = newsvendor_solve(data)
    fp = newsvendor_program(data)
    assert robust_feasible(fp, info["x"])
    assert -worst_case_ratio(fp, info["x"])[0] == pytest.approx(roi, abs=1e-6)


@criterion(12, "bisection gains a digit every few iterations")
def test_bisection_rate(meanvar_seed1):
    _, s = meanvar_seed1
    trace = s["trace"]
    widths = np.concatenate([[trace.ub0 - trace.lb0], trace.widths])
    assert np.mean(np.diff(np.log10(widths))) <= -0.25

"""Case studies: DEA with interval data, mean-variance portfolio, robust
newsvendor, the nonconvex counterexample and perfect hindsight."""

import cvxpy as cp
import numpy as np
import pytest
from scipy.optimize import linprog

from robfrac.casestudies import (
    appendix_a_check,
    dea_efficiency,
    dea_program,
    dea_simulate,
    dispersion,
    load_dea,
    meanvar_generate,
    meanvar_program,
    meanvar_solve,
    meanvar_worst_case,
    newsvendor_solve,
    nominal_efficiency,
    perfect_hindsight,
    rank_from_efficiencies,
)
from robfrac.casestudies.appendix_a import X_BETTER, X_LIN, inner_max, ratio
from robfrac.errors import InputError
from robfrac.rootfind import solve_fp


def ccr_lp(xs, ys, k):
    """Classical efficiency: ``max u@y_k`` s.t. ``v@x_k = 1``, ``u@y_i <= v@x_i``."""
    n_out, n_in = ys.shape[1], xs.shape[1]
    c = np.concatenate([-ys[k], np.zeros(n_in)])
    A_ub = np.hstack([ys, -xs])
    A_eq = np.concatenate([np.zeros(n_out), xs[k]])[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(xs)), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (n_out + n_in), method="highs")
    return -res.fun


def nominal_dispersion_oracle(d):
    """``min var / mean`` at ``p_hat`` by Dinkelbach with cvxpy QPs."""
    S, n = d.R.shape
    p = d.p_hat
    x = cp.Variable(n, nonneg=True)
    u = d.R @ x
    mean = p @ u
    var = cp.sum(cp.multiply(p, cp.square(u - mean)))
    alpha = cp.Parameter()
    prob = cp.Problem(cp.Minimize(var - alpha * mean), [cp.sum(x) == d.capital])
    xv = np.full(n, d.capital / n)
    for _ in range(50):
        alpha.value = dispersion(d, xv, p)
        prob.solve(solver=cp.CLARABEL)
        if prob.value >= -1e-10:
            break
        xv = x.value
    return dispersion(d, xv, p)


class TestDea:
    def test_gamma_zero_matches_ccr(self):
        d = load_dea()
        for k in range(d.n_dmu):
            assert nominal_efficiency(d.xbar, d.ybar, k) == pytest.approx(
                ccr_lp(d.xbar, d.ybar, k), abs=1e-6)

    def test_gamma_zero_bisection(self):
        d = load_dea()
        eff = [dea_efficiency(d, k, 0.0, tol=1e-8) for k in range(d.n_dmu)]
        ref = [ccr_lp(d.xbar, d.ybar, k) for k in range(d.n_dmu)]
        np.testing.assert_allclose(eff, ref, atol=1e-6)

    @pytest.mark.parametrize("gamma,expected", [(0.0, (1, 2, 3, 5, 4)), (1.0, (1, 2, 5, 3, 4))])
    def test_rankings(self, gamma, expected):
        d = load_dea()
        eff = [dea_efficiency(d, k, gamma) for k in range(d.n_dmu)]
        assert rank_from_efficiencies(eff)[0] == expected

    def test_efficiency_nonincreasing_in_gamma(self):
        d = load_dea()
        gammas = [0.0, 0.5, 1.0, 2.0]
        for k in range(d.n_dmu):
            eff = [dea_efficiency(d, k, gm, tol=1e-6) for gm in gammas]
            assert np.all(np.diff(eff) <= 1e-5)

    def test_robust_rows_use_budget_sets(self):
        fp = dea_program(load_dea(), 0, 1.0)
        assert fp.objective_set.kind == "budget"
        assert len(fp.constraints) == 5

    def test_ties_reported(self):
        order, ties = rank_from_efficiencies([1.0, 0.5, 1.0 - 1e-8])
        assert order == (1, 3, 2)
        assert ties == [(1, 3)]

    def test_simulation_at_midpoints(self):
        d = load_dea()
        assert dea_simulate(d, 1, mode="midpoints") == 1.0
        assert nominal_efficiency(d.xbar, d.ybar, 2) > nominal_efficiency(d.xbar, d.ybar, 4)

    def test_simulation_seeded(self):
        d = load_dea()
        assert dea_simulate(d, 10, seed=3) == dea_simulate(d, 10, seed=3)

    def test_simulation_rejects_bad_mode(self):
        with pytest.raises(ValueError):
            dea_simulate(load_dea(), 2, mode="corners")


class TestMeanVar:
    def test_seed_determinism(self):
        a, b = meanvar_generate(1), meanvar_generate(1)
        assert a.R.tobytes() == b.R.tobytes()

    def test_generator_parameters(self):
        d = meanvar_generate(1)
        assert d.R.shape == (50, 10)
        assert d.mu.min() == pytest.approx(0.01)
        assert d.mu.max() == pytest.approx(0.20)
        np.testing.assert_allclose(d.p_hat, 0.02)
        assert d.rho == 1.0 and d.capital == 100.0

    def test_nominal_matches_oracle(self):
        d = meanvar_generate(1)
        x, alpha, _ = meanvar_solve(d, 0.0, tol=1e-9)
        assert alpha == pytest.approx(nominal_dispersion_oracle(d), abs=1e-6)
        assert x.sum() == pytest.approx(100.0, abs=1e-6)

    def test_worst_case_at_zero_radius(self):
        d = meanvar_generate(1)
        x = np.full(10, 10.0)
        val, p = meanvar_worst_case(d, x, 0.0)
        assert val == pytest.approx(dispersion(d, x, d.p_hat))

    def test_worst_case_is_member(self, meanvar_seed1):
        d, study = meanvar_seed1
        fp = meanvar_program(d, 1.0)
        assert fp.objective_set.contains(study["p_worst"], tol=1e-6)

    def test_orderings(self, meanvar_seed1):
        _, s = meanvar_seed1
        assert s["nominal_at_estimate"] <= s["robust_at_estimate"]
        assert s["robust_worst"] <= s["nominal_worst"]
        assert s["hindsight_at_robust_worst"] == pytest.approx(s["robust_value"], abs=1e-6)


class TestNewsvendor:
    def test_zero_radius_matches_lp(self, newsvendor_bundled):
        data, _ = newsvendor_bundled
        I, S = data.d.shape
        # variables (Q, u, t) of the Charnes-Cooper LP
        n = I + I * S + 1
        c = np.zeros(n)
        c[I:I + I * S] = -data.p_hat.ravel()
        A, b = [], []
        for i in range(I):
            for s in range(S):
                k = I + i * S + s
                row = np.zeros(n)
                row[k], row[i], row[-1] = 1.0, data.c[i] - data.r[i], -data.d[i, s] * (data.v[i] - data.r[i])
                A.append(row)
                row = np.zeros(n)
                row[k], row[i], row[-1] = 1.0, data.c[i] - data.v[i] - data.l[i], data.d[i, s] * data.l[i]
                A.append(row)
                b += [0.0, 0.0]
        eq = np.concatenate([data.c, np.zeros(I * S + 1)])[None, :]
        bnds = [(0, None)] * I + [(None, None)] * (I * S) + [(0, None)]
        ref = linprog(c, A_ub=A, b_ub=b, A_eq=eq, b_eq=[1.0], bounds=bnds, method="highs")
        _, roi, _ = newsvendor_solve(data, 0.0)
        assert roi == pytest.approx(-ref.fun, abs=1e-7)

    def test_orderings(self, newsvendor_bundled):
        _, s = newsvendor_bundled
        assert s["robust_worst"] >= s["nominal_worst"]
        assert s["nominal_at_estimate"] >= s["robust_at_estimate"]
        assert s["hindsight_at_robust_worst"] == pytest.approx(s["robust_value"], abs=1e-6)

    def test_robust_value_is_worst_case_of_plan(self, newsvendor_bundled):
        _, s = newsvendor_bundled
        assert s["robust_worst"] == pytest.approx(s["robust_value"], abs=1e-6)


class TestHindsight:
    def test_singleton_is_nominal(self):
        fp = dea_program(load_dea(), 2, 0.0)
        a = fp.objective_set.nominal
        assert perfect_hindsight(fp, a).alpha == pytest.approx(solve_fp(fp).alpha, abs=1e-8)

    def test_rejects_nonmember(self):
        fp = meanvar_program(meanvar_generate(1))
        p = np.zeros(50)
        p[0] = 1.0
        with pytest.raises(InputError):
            perfect_hindsight(fp, p)


class TestAppendixA:
    def test_hand_values(self):
        assert ratio(X_LIN, 0.0) == pytest.approx(1 / 4.8125)
        assert ratio(X_BETTER, 1.0) == pytest.approx(2.875 / 52)

    def test_check(self):
        out = appendix_a_check()
        assert out.val_at_lin_point == pytest.approx(0.2078, abs=1e-3)
        assert out.best_found_val <= 0.061
        assert out.passed
        v1, v2 = out
        assert v2 < v1

    def test_inner_max_beats_grid(self):
        grid = np.linspace(0.0, 1.0, 2001)
        for x in (X_LIN, X_BETTER, (1.0, 1.0, 1.0)):
            assert inner_max(x)[0] >= ratio(x, grid).max() - 1e-15

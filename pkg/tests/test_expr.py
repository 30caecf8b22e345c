"""Atoms: values, conjugates against grid oracles, Fenchel inequality and
curvature certification."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_points, grid_sup
from robfrac.errors import DomainError, InputError, UnsupportedAtomError
from robfrac.expr import (
    AffineResidual,
    ChiSquareDivergence,
    CustomResidual,
    ConjugateForm,
    HellingerDivergence,
    MaxNeg,
    NormBallResidual,
    QuadBiaffine,
    ScenarioVariance,
    SumAtom,
    certify_curvature,
    concave_conjugate,
    convex_conjugate,
    evaluate,
    perspective_conjugate,
    psd_factor,
)


class TestEvaluate:
    def test_affine_value(self):
        h = QuadBiaffine(1, 0, c0=2.0, cx=[3.0])
        assert evaluate(h, [1.0], []) == 5.0

    def test_scenario_variance_value(self):
        f = ScenarioVariance(np.zeros((2, 0)), u0=[1.0, -1.0])
        assert evaluate(f, [], [0.5, 0.5]) == pytest.approx(1.0)

    def test_chi2_residual_at_center(self):
        tau = ChiSquareDivergence([0.5, 0.5], 1.0)
        assert evaluate(tau, None, [0.5, 0.5]) == -1.0

    def test_dimension_mismatch(self):
        h = QuadBiaffine(2, 1, c0=1.0)
        with pytest.raises(InputError):
            h.value([1.0], [0.0])
        with pytest.raises(InputError):
            h.value([1.0, 2.0], [0.0, 1.0])

    def test_scenario_mean_matches_definition(self, rng):
        M = rng.normal(size=(4, 3))
        g = QuadBiaffine.scenario_mean(M, u0=np.arange(4.0))
        x, p = rng.normal(size=3), rng.dirichlet(np.ones(4))
        assert g.value(x, p) == pytest.approx(p @ (M @ x + np.arange(4.0)))

    def test_variance_fix_a_is_the_quadratic(self, rng):
        M = rng.normal(size=(5, 3))
        f = ScenarioVariance(M)
        p = rng.dirichlet(np.ones(5))
        x = rng.normal(size=3)
        assert f.fix_a(p).value(x, []) == pytest.approx(f.value(x, p))
        assert f.fix_x(x).value([], p) == pytest.approx(f.value(x, p))

    def test_psd_factor_reproduces_matrix(self, rng):
        A = rng.normal(size=(3, 2))
        Q = A @ A.T
        F = psd_factor(Q)
        np.testing.assert_allclose(F @ F.T, Q, atol=1e-12)


class TestConvexConjugate:
    def test_chi2_at_zero(self):
        tau = ChiSquareDivergence([0.5, 0.5], 1.0)
        assert convex_conjugate(tau, [0.0, 0.0]) == pytest.approx(1.0)

    def test_chi2_at_two_matches_grid(self):
        tau = ChiSquareDivergence([0.5, 0.5], 1.0)
        pts = grid_points(2, radius=3.0, step=1e-3)
        vals = np.sum((pts - 0.5) ** 2 / 0.5, axis=1) - 1.0
        assert convex_conjugate(tau, [2.0, 2.0]) == pytest.approx(4.0)
        assert grid_sup(vals, np.array([2.0, 2.0]), pts) == pytest.approx(4.0, abs=1e-5)

    def test_affine_half_of_simplex(self):
        tau2 = AffineResidual([1.0, 1.0], -1.0)
        assert convex_conjugate(tau2, [1.0, 1.0]) == 1.0
        assert convex_conjugate(tau2, [1.0, 0.9]) == np.inf

    def test_max_neg_domain(self):
        tau1 = MaxNeg(3)
        assert convex_conjugate(tau1, [-0.5, -0.5, 0.0]) == 0.0
        assert convex_conjugate(tau1, [-0.5, -0.4, 0.0]) == np.inf
        assert convex_conjugate(tau1, [0.1, -1.1, 0.0]) == np.inf

    def test_hellinger_closed_form(self):
        tau = HellingerDivergence([0.25, 0.75], 0.1)
        v = np.array([0.5, -1.0])
        expected = 0.1 + 0.25 * 0.5 / 0.5 + 0.75 * (-1.0) / 2.0
        assert convex_conjugate(tau, v) == pytest.approx(expected)
        assert convex_conjugate(tau, [1.0, 0.0]) == np.inf

    def test_norm_ball_dual_norm(self):
        tau = NormBallResidual([1.0, -1.0], [2.0, 1.0], 0.5, 1)
        # dual of the 1-norm is the inf-norm on scale * v
        assert convex_conjugate(tau, [0.5, 1.0]) == pytest.approx(0.5 - 1.0 + 0.5)
        assert convex_conjugate(tau, [0.6, 0.0]) == np.inf

    def test_unregistered_kind(self):
        class Bare(MaxNeg):
            def conjugate_form(self):
                return super(MaxNeg, self).conjugate_form()

        with pytest.raises(UnsupportedAtomError):
            convex_conjugate(Bare(2), [0.0, 0.0])


class TestConcaveConjugate:
    def test_scenario_mean_pins_argument(self):
        u = np.array([1.0, 2.0, -1.0])
        g = QuadBiaffine.scenario_mean(np.zeros((3, 0)), u0=u)
        assert concave_conjugate(g, u, np.zeros(0)) == 0.0
        assert concave_conjugate(g, u + 0.1, np.zeros(0)) == -np.inf

    def test_variance_single_scenario(self):
        f = ScenarioVariance(np.zeros((1, 0)), u0=[1.0])
        assert concave_conjugate(f, [1.0], np.zeros(0)) == pytest.approx(0.0)

    def test_variance_inconsistent_system(self):
        f = ScenarioVariance(np.zeros((2, 0)), u0=[1.0, 2.0])
        assert concave_conjugate(f, [2.0, 2.0], np.zeros(0)) == -np.inf

    def test_variance_value_matches_grid(self):
        u = np.array([1.0, -0.5])
        f = ScenarioVariance(np.zeros((2, 0)), u0=u)
        z = 0.8
        s = u ** 2 + u * z
        pts = grid_points(2, radius=5.0, step=1e-2)
        vals = pts @ u ** 2 - (pts @ u) ** 2
        inf_val = -grid_sup(-vals, -s, pts)
        assert concave_conjugate(f, s, np.zeros(0)) == pytest.approx(-z * z / 4)
        assert inf_val == pytest.approx(-z * z / 4, abs=1e-2)

    def test_sum_rule_numeric(self, rng):
        M = rng.normal(size=(3, 2))
        f = ScenarioVariance(M)
        g = QuadBiaffine.scenario_mean(M).scaled(-0.7)
        h = SumAtom([f, g])
        x = rng.normal(size=2)
        u = M @ x
        z = 0.3
        s = u ** 2 + u * z - 0.7 * u
        assert concave_conjugate(h, s, x) == pytest.approx(-z * z / 4)


class TestPerspectiveConjugate:
    def test_unit_scale_is_conjugate(self):
        h = QuadBiaffine(2, 2, c0=1.0, cx=[1.0, -1.0], ca=[0.5, 0.0], B=[[1.0, 0.0], [0.0, 2.0]])
        x = np.array([0.3, -0.2])
        s = h.slope_a(x)
        assert perspective_conjugate(h, s, x, 1.0) == concave_conjugate(h, s, x)

    def test_homogeneity(self):
        h = QuadBiaffine(1, 1, c0=2.0, cx=[1.0], B=[[3.0]])
        y = np.array([0.4])
        s = h.slope_a(y)
        one = perspective_conjugate(h, s, y, 1.0)
        two = perspective_conjugate(h, 2 * s, 2 * y, 2.0)
        assert two == pytest.approx(2 * one)

    def test_scenario_mean_half_scale(self):
        u = np.array([1.0, 3.0])
        g = QuadBiaffine.scenario_mean(np.zeros((2, 0)), u0=u)
        assert perspective_conjugate(g, 0.5 * u, [], 0.5) == 0.0

    def test_nonpositive_scale(self):
        g = QuadBiaffine(1, 1, c0=1.0)
        with pytest.raises(DomainError):
            perspective_conjugate(g, [0.0], [1.0], 0.0)


class TestFenchel:
    residuals = [
        MaxNeg(3),
        AffineResidual([1.0, 1.0, 1.0], -1.0),
        ChiSquareDivergence([0.2, 0.3, 0.5], 0.7),
        HellingerDivergence([0.2, 0.3, 0.5], 0.1),
        NormBallResidual([0.0, 1.0, 2.0], [1.0, 0.5, 2.0], 1.0, 2),
        NormBallResidual([0.0, 1.0, 2.0], [1.0, 0.5, 2.0], 1.5, 1),
        NormBallResidual([0.0, 1.0, 2.0], [1.0, 0.0, 2.0], 0.5, np.inf),
    ]

    @pytest.mark.parametrize("tau", residuals, ids=lambda t: t.kind)
    def test_fenchel_inequality(self, tau, rng):
        form = tau.conjugate_form()
        for _ in range(300):
            a = tau.sample_a(rng)
            v = rng.normal(size=tau.L)
            cv = form(v)
            va = tau.value(a)
            if np.isfinite(cv) and np.isfinite(va):
                assert v @ a - va <= cv + 1e-9

    def test_concave_fenchel_variance(self, rng):
        M = rng.normal(size=(3, 2))
        f = ScenarioVariance(M)
        for _ in range(300):
            x = rng.normal(size=2)
            u = M @ x
            z = rng.normal()
            s = u ** 2 + u * z
            p = rng.normal(size=3)
            assert s @ p - f.value(x, p) >= concave_conjugate(f, s, x) - 1e-9


class TestCustomResidual:
    def test_accepts_consistent_form(self):
        tau = CustomResidual(
            1, lambda a: float(a[0] ** 2),
            ConjugateForm(lambda v: True, lambda v: float(v[0] ** 2 / 4)))
        assert tau.convex_conjugate([2.0]) == pytest.approx(1.0)

    def test_rejects_inconsistent_form(self):
        with pytest.raises(UnsupportedAtomError):
            CustomResidual(1, lambda a: float(a[0] ** 2),
                           ConjugateForm(lambda v: True, lambda v: float(v[0] ** 2 / 8)))


class TestCurvature:
    atoms = [
        QuadBiaffine(2, 2, c0=1.0, cx=[1.0, 0.0], B=np.eye(2), Q=np.eye(2)),
        QuadBiaffine(2, 2, c0=1.0, B=np.eye(2), Q=-np.eye(2)),
        ScenarioVariance(np.arange(6.0).reshape(3, 2)),
        ChiSquareDivergence([0.5, 0.5], 1.0),
        HellingerDivergence([0.5, 0.5], 0.2),
        MaxNeg(3),
    ]

    @pytest.mark.parametrize("atom", atoms, ids=lambda a: a.kind)
    def test_declared_curvature_passes(self, atom):
        rep = certify_curvature(atom, n_pairs=1000, tol=1e-9)
        assert rep.passed, rep

    def test_indefinite_quadratic_flagged(self):
        atom = QuadBiaffine(2, 0, Q=np.diag([1.0, -1.0]))
        assert atom.curvature_x == "indefinite"
        assert not certify_curvature(atom, n_pairs=10).passed


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2))
def test_chi2_conjugate_matches_stationary_point(v):
    # the supremum is attained at a = p_hat * (1 + v / 2)
    p = np.array([0.4, 0.6])
    tau = ChiSquareDivergence(p, 0.5)
    v = np.array(v)
    a = p * (1.0 + v / 2.0)
    assert tau.convex_conjugate(v) == pytest.approx(v @ a - tau.value(a), abs=1e-12)

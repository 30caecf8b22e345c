"""Conic layer: building, validation, solving, certificates and dumps."""

import numpy as np
import pytest
from scipy.optimize import linprog

from robfrac import conic
from robfrac.errors import InvalidProgramError


def tiny_lp():
    b = conic.ProgramBuilder()
    x = b.var("x")
    b.nonneg(x - 1.0, tag="lower")
    b.minimize(x)
    return b.build()


def random_lp(rng, n=4, m=6):
    A = rng.uniform(0.1, 1.0, (m, n))
    rhs = rng.uniform(1.0, 2.0, m)
    cost = rng.uniform(0.5, 1.5, n)
    b = conic.ProgramBuilder()
    x = b.var("x", n, nonneg=True)
    b.nonneg(A @ x - rhs, tag="cover")
    b.minimize(x.dot(cost))
    return b.build(), (A, rhs, cost)


class TestSolve:
    def test_lower_bound(self):
        res = conic.solve(tiny_lp())
        assert res.status == "optimal"
        assert res.objective == pytest.approx(1.0, abs=1e-8)
        np.testing.assert_allclose(res.dual("lower"), [1.0], atol=1e-8)

    def test_euclidean_norm(self):
        b = conic.ProgramBuilder()
        t = b.var("t")
        b.soc(t, conic.Affine.constant(np.array([3.0, 4.0])))
        b.minimize(t)
        res = conic.solve(b.build())
        assert res.objective == pytest.approx(5.0, abs=1e-7)

    def test_matches_highs(self, rng):
        for _ in range(5):
            prog, (A, rhs, cost) = random_lp(rng)
            res = conic.solve(prog)
            ref = linprog(cost, A_ub=-A, b_ub=-rhs, bounds=[(0, None)] * cost.size,
                          method="highs")
            assert res.objective == pytest.approx(ref.fun, abs=1e-7)

    def test_weak_duality(self, rng):
        prog, _ = random_lp(rng)
        res = conic.solve(prog)
        assert res.objective >= res.stats["dual_objective"] - 1e-7

    def test_scaling_leaves_argmin(self, rng):
        prog, _ = random_lp(rng)
        one = conic.solve(prog)
        ten = conic.solve(prog.replace(c=10.0 * prog.c))
        np.testing.assert_allclose(ten.value("x"), one.value("x"), atol=1e-6)

    def test_deterministic(self, rng):
        prog, _ = random_lp(rng)
        r1, r2 = conic.solve(prog), conic.solve(prog)
        assert r1.x.tobytes() == r2.x.tobytes()

    def test_primal_infeasible_certificate(self):
        b = conic.ProgramBuilder()
        x = b.var("x")
        b.nonneg(x - 2.0, tag="low")
        b.nonneg(1.0 - x, tag="high")
        b.minimize(x)
        res = conic.solve(b.build())
        assert res.status == "primal-infeasible"
        assert res.certificate is not None
        assert np.all(res.certificate >= -1e-9)
        assert np.abs(res.certificate).sum() > 0

    def test_unbounded(self):
        b = conic.ProgramBuilder()
        x = b.var("x")
        b.nonneg(1.0 - x)
        b.minimize(x)
        res = conic.solve(b.build())
        assert res.status == "dual-infeasible"
        assert res.certificate[0] < 0

    def test_iteration_limit_is_reported(self, rng):
        prog, _ = random_lp(rng)
        res = conic.solve(prog, conic.SolverSettings(max_iter=1))
        assert res.status == "numerical-limit"
        assert np.isnan(res.objective)


class TestValidate:
    def test_well_formed(self):
        assert conic.validate(tiny_lp()) == []

    def test_soc_dimension(self):
        prog = tiny_lp()
        blk = conic.ConeBlock("soc", np.ones((1, 1)), np.zeros(1), "bad")
        diags = conic.validate(prog.replace(blocks=prog.blocks + (blk,)))
        assert any("SOC dimension < 2" in d for d in diags)

    def test_orphan_variable(self):
        prog = tiny_lp()
        prog = prog.replace(c=np.append(prog.c, 0.0),
                            blocks=tuple(conic.ConeBlock(b.kind, np.hstack([b.A, np.zeros((b.size, 1))]),
                                                         b.b, b.tag) for b in prog.blocks))
        diags = conic.validate(prog)
        assert any("orphan variable 1" in d for d in diags)

    def test_solve_refuses_invalid(self):
        prog = tiny_lp()
        blk = conic.ConeBlock("soc", np.ones((1, 1)), np.zeros(1), "bad")
        with pytest.raises(InvalidProgramError):
            conic.solve(prog.replace(blocks=prog.blocks + (blk,)))


class TestDump:
    def test_roundtrip(self, rng):
        prog, _ = random_lp(rng)
        text = conic.dump(prog)
        back = conic.load(text)
        assert conic.dump(back) == text
        assert conic.solve(back).objective == pytest.approx(conic.solve(prog).objective, abs=1e-9)

    def test_header(self):
        text = conic.dump(tiny_lp())
        assert text.splitlines()[0] == "robfrac-conic 1"
        assert "block 0 nonneg 1 lower" in text

    def test_rejects_other_text(self):
        with pytest.raises(ValueError):
            conic.load("hello\n")

"""Multi-item newsvendor maximizing the worst-case return on investment.

Decision ``x = (Q, u)`` with order quantities ``Q`` and per-scenario profit
contributions ``u[i, s]``; item ``i`` faces demand ``d[i, s]`` with an
uncertain probability row ``p[i]`` in a Hellinger ball around ``p_hat[i]``.
In minimization form the ratio is ``-sum(p * u) / (c @ Q)``: a sign-free
numerator over a certain affine denominator, solved through the
Charnes-Cooper transform and the optimistic dual.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .. import conic
from ..errors import InfeasibleError, InputError, SolverError
from ..expr import QuadBiaffine
from ..reformulate import FractionalProgram, build_optimistic_dual, charnes_cooper, recover_x_dual
from ..rootfind import Solution, solve_fp, worst_case_ratio
from ..usets import make_hellinger_simplex, make_product
from .._toml import read_toml
from .hindsight import perfect_hindsight

logger = logging.getLogger(__name__)

DEFAULT_RHO = 0.03
# plans are read off the multipliers, whose error scales with the demand
# magnitudes, so the dual solve runs tighter than the conic default
RECOVERY_SETTINGS = conic.SolverSettings(tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)


@dataclass
class NewsvendorData:
    """Item economics (``c`` cost, ``v`` price, ``r`` salvage, ``l`` loss),
    demands ``d[i, s]`` and probability estimates ``p_hat[i, s]``."""

    c: np.ndarray
    v: np.ndarray
    r: np.ndarray
    l: np.ndarray
    d: np.ndarray
    p_hat: np.ndarray
    rho: float = DEFAULT_RHO
    seed: int = None

    def __post_init__(self):
        for name in ("c", "v", "r", "l"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        self.d = np.atleast_2d(np.asarray(self.d, dtype=float))
        self.p_hat = np.atleast_2d(np.asarray(self.p_hat, dtype=float))
        I = self.c.size
        if any(getattr(self, k).size != I for k in ("v", "r", "l")) or self.d.shape[0] != I:
            raise InputError("item data have inconsistent lengths")
        if self.p_hat.shape != self.d.shape:
            raise InputError("p_hat must match the demand table")
        if np.any(self.r > self.v + self.l):
            raise InputError("salvage price must not exceed price plus loss")
        if np.any(self.c <= 0):
            raise InputError("order costs must be positive")
        if np.any(self.p_hat < 0) or np.any(np.abs(self.p_hat.sum(axis=1) - 1.0) > 1e-9):
            raise InputError("each p_hat row must lie on the probability simplex")
        if self.rho < 0:
            raise InputError("rho must be nonnegative")

    @property
    def n_items(self):
        return self.c.size

    @property
    def n_scenarios(self):
        return self.d.shape[1]

    def with_rho(self, rho):
        return NewsvendorData(self.c, self.v, self.r, self.l, self.d, self.p_hat, rho, self.seed)

    def with_p_hat(self, p_hat):
        return NewsvendorData(self.c, self.v, self.r, self.l, self.d, p_hat, self.rho, self.seed)


def newsvendor_generate(seed=1, n_items=2, n_scenarios=3):
    """Synthetic instance: costs in [4, 6], prices and salvage values as
    multiples of cost, sorted integer demands in [50, 150] and Dirichlet estimates
    rounded to three decimals."""
    rng = np.random.default_rng(seed)
    c = np.round(rng.uniform(4.0, 6.0, n_items), 2)
    v = np.round(c * rng.uniform(1.3, 1.8, n_items), 2)
    r = np.round(c * rng.uniform(0.2, 0.5, n_items), 2)
    l = np.round(rng.uniform(0.0, 1.0, n_items), 2)
    d = np.sort(rng.integers(50, 151, (n_items, n_scenarios)), axis=1).astype(float)
    p = np.round(rng.dirichlet(np.full(n_scenarios, 4.0), n_items), 3)
    p[:, -1] = np.round(1.0 - p[:, :-1].sum(axis=1), 3)
    return NewsvendorData(c, v, r, l, d, p, DEFAULT_RHO, seed)


def write_newsvendor(data, stream):
    """CSV with one row per (item, scenario)."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["item", "c", "v", "r", "l", "scenario", "demand", "p_hat"])
    for i in range(data.n_items):
        for s in range(data.n_scenarios):
            w.writerow([i + 1, f"{data.c[i]:g}", f"{data.v[i]:g}", f"{data.r[i]:g}",
                        f"{data.l[i]:g}", s + 1, f"{data.d[i, s]:g}", f"{data.p_hat[i, s]:g}"])


def load_newsvendor(path=None, manifest=None):
    """Read the CSV table (bundled synthetic instance by default)."""
    pkg = resources.files(__package__)
    if path is None:
        text = pkg.joinpath("data/newsvendor.csv").read_text()
        meta = read_toml(pkg.joinpath("data/newsvendor_manifest.toml").read_text())
    else:
        with open(path) as fh:
            text = fh.read()
        meta = {}
        if manifest is not None:
            with open(manifest) as fh:
                meta = read_toml(fh.read())
    rows = list(csv.DictReader(text.splitlines()))
    items = sorted({int(r["item"]) for r in rows})
    scen = sorted({int(r["scenario"]) for r in rows})
    I, S = len(items), len(scen)
    c, v, r_, l = (np.zeros(I) for _ in range(4))
    d, p = np.zeros((I, S)), np.zeros((I, S))
    for row in rows:
        i, s = items.index(int(row["item"])), scen.index(int(row["scenario"]))
        c[i], v[i], r_[i], l[i] = (float(row[k]) for k in ("c", "v", "r", "l"))
        d[i, s], p[i, s] = float(row["demand"]), float(row["p_hat"])
    return NewsvendorData(c, v, r_, l, d, p, float(meta.get("rho", DEFAULT_RHO)),
                          meta.get("seed"))


# ---------------------------------------------------------------------------
# model


def newsvendor_set(data, rho=None):
    rho = data.rho if rho is None else rho
    return make_product([make_hellinger_simplex(data.p_hat[i], rho) for i in range(data.n_items)])


def newsvendor_program(data, rho=None, p_fixed=None):
    """Fractional program over ``x = (Q, vec(u))`` (``u`` row major).

    ``p_fixed`` replaces the Hellinger set by that single probability table.
    """
    I, S = data.n_items, data.n_scenarios
    n, L = I + I * S, I * S
    B = np.zeros((L, n))
    B[:, I:] = -np.eye(L)
    f = QuadBiaffine(n, L, B=B)
    g = QuadBiaffine(n, L, cx=np.concatenate([data.c, np.zeros(L)]))
    rows, rhs = [], []
    for i in range(I):
        for s in range(S):
            k = I + i * S + s
            a1 = np.zeros(n)
            a1[k], a1[i] = 1.0, data.c[i] - data.r[i]
            rows.append(a1)
            rhs.append(data.d[i, s] * (data.v[i] - data.r[i]))
            a2 = np.zeros(n)
            a2[k], a2[i] = 1.0, data.c[i] - data.v[i] - data.l[i]
            rows.append(a2)
            rhs.append(-data.d[i, s] * data.l[i])
    lower = np.concatenate([np.zeros(I), np.full(L, -np.inf)])
    if p_fixed is not None:
        uset = newsvendor_set(data.with_p_hat(np.reshape(p_fixed, (I, S))), 0.0)
    else:
        uset = newsvendor_set(data, rho)
    return FractionalProgram(f, g, n, uset, A_ub=np.array(rows), b_ub=np.array(rhs),
                             lower=lower, f_sign="free", name="newsvendor")


def best_contributions(data, Q):
    """Largest feasible ``u[i, s]`` for order quantities ``Q``."""
    Q = np.asarray(Q, dtype=float).reshape(-1, 1)
    up1 = data.d * (data.v - data.r)[:, None] - (data.c - data.r)[:, None] * Q
    up2 = -data.d * data.l[:, None] - (data.c - data.v - data.l)[:, None] * Q
    return np.minimum(up1, up2)


def newsvendor_roi(data, Q, p):
    """Expected return on investment of ``Q`` under probabilities ``p``."""
    u = best_contributions(data, Q)
    return float(np.sum(np.reshape(p, u.shape) * u) / (data.c @ np.asarray(Q, dtype=float)))


def newsvendor_worst_case(data, Q, rho=None):
    """``(worst-case ROI, worst probability table)`` for orders ``Q``."""
    fp = newsvendor_program(data, rho)
    x = np.concatenate([np.asarray(Q, dtype=float), best_contributions(data, Q).ravel()])
    ratio, p = worst_case_ratio(fp, x)
    return -ratio, np.reshape(p, data.d.shape)


def newsvendor_solve(data, rho=None, settings=None):
    """Robust orders through the optimistic dual.

    Returns ``(Q, roi, info)`` where ``roi`` is the dual optimum (the robust
    expected return on investment) and ``info`` carries the recovered
    ``(Q, u)`` vector, the recovery map and the solve result.
    """
    fp = newsvendor_program(data, rho)
    rlp = charnes_cooper(fp)
    program, recovery = build_optimistic_dual(rlp)
    res = conic.solve(program, settings or RECOVERY_SETTINGS)
    if settings is None and res.status == "numerical-limit":
        logger.info("tight dual solve stopped short; retrying at default tolerances")
        res = conic.solve(program)
    if res.status == "primal-infeasible":
        raise InfeasibleError("optimistic dual is infeasible", res)
    if res.status == "dual-infeasible":
        raise InfeasibleError("no plan with a finite return on investment", res)
    if not res.ok:
        raise SolverError(f"optimistic dual ended with {res.status}", res)
    x = recover_x_dual(res, recovery)
    Q = x[:data.n_items]
    return Q, res.objective, dict(x=x, recovery=recovery, result=res, p=res.value("a"))


def newsvendor_primal(data, rho=None, p_fixed=None):
    """Robust orders through the single Schaible solve (cross-check)."""
    sol = solve_fp(newsvendor_program(data, rho, p_fixed), method="s1")
    return sol.x[:data.n_items], -sol.alpha, sol


def newsvendor_hindsight(data, p, rho=None):
    """Best ROI when the probability table ``p`` (a member of the set) is
    known beforehand."""
    sol = perfect_hindsight(newsvendor_program(data, rho), np.ravel(p))
    return sol.x[:data.n_items], -sol.alpha, sol


def newsvendor_study(data, rho=None):
    """Nominal, robust and hindsight comparison."""
    rho = data.rho if rho is None else rho
    Qn, _, _ = newsvendor_solve(data, 0.0)
    Qr, roi_r, info = newsvendor_solve(data, rho)
    wc_n, _ = newsvendor_worst_case(data, Qn, rho)
    wc_r, _ = newsvendor_worst_case(data, Qr, rho)
    # the dual solve returns a saddle-point p, exact where a re-maximization
    # at the recovered plan is only accurate to the square root of its tolerance
    p_r = np.reshape(info["p"], data.d.shape)
    _, roi_h, _ = newsvendor_hindsight(data, p_r, rho)
    return dict(
        rho=rho, seed=data.seed,
        Q_nominal=Qn, Q_robust=Qr,
        nominal_at_estimate=newsvendor_roi(data, Qn, data.p_hat),
        robust_at_estimate=newsvendor_roi(data, Qr, data.p_hat),
        nominal_worst=wc_n, robust_worst=wc_r, robust_value=roi_r,
        hindsight_at_robust_worst=roi_h, p_worst=p_r,
    )


__all__ = [
    "NewsvendorData", "newsvendor_generate", "write_newsvendor", "load_newsvendor",
    "newsvendor_program", "newsvendor_set", "best_contributions", "newsvendor_roi",
    "newsvendor_worst_case", "newsvendor_solve", "newsvendor_primal", "newsvendor_hindsight",
    "newsvendor_study", "Solution",
]

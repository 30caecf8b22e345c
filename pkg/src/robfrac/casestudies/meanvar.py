"""Portfolio choice minimizing the worst-case dispersion index.

Scenario returns ``R[s, i]`` give portfolio returns ``u = R @ x``; the
ratio ``Var_p(u) / E_p(u)`` is minimized over ``x >= 0`` with
``sum(x) = C`` and a strictly positive expected return, for every ``p`` in a
modified chi-square ball around ``p_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..errors import InfeasibleError, InputError
from ..expr import QuadBiaffine, ScenarioVariance
from ..reformulate import FractionalProgram
from ..rootfind import bisect, worst_case_ratio
from ..usets import make_chi2_simplex
from .._toml import read_toml
from .hindsight import perfect_hindsight

MEANVAR_TOL = 1e-10
MAX_REGEN = 100


def default_config():
    text = resources.files(__package__).joinpath("data/meanvar.toml").read_text()
    return read_toml(text)


@dataclass
class MeanVarData:
    """Scenario returns ``R`` (scenarios x items) with estimates ``p_hat``."""

    R: np.ndarray
    p_hat: np.ndarray
    rho: float = 1.0
    capital: float = 100.0
    seed: int = None
    eps_strict: float = 1e-8
    mu: np.ndarray = None
    cov: np.ndarray = None
    regenerations: list = field(default_factory=list)

    def __post_init__(self):
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.p_hat = np.asarray(self.p_hat, dtype=float).reshape(-1)
        if self.p_hat.size != self.R.shape[0]:
            raise InputError("p_hat must have one entry per scenario")
        if self.capital <= 0:
            raise InputError("capital must be positive")
        if self.rho < 0:
            raise InputError("rho must be nonnegative")

    @property
    def n_items(self):
        return self.R.shape[1]

    @property
    def n_scenarios(self):
        return self.R.shape[0]


def meanvar_generate(seed=None, config=None):
    """Scenario data from a random covariance ``A @ A.T``.

    Expected returns are an affine map of the item variances sending the
    smallest to ``mu_min`` and the largest to ``mu_max``; scenarios are
    multivariate normal draws.  A covariance with an all-zero row triggers a
    regeneration with the next sub-seed, recorded in ``regenerations``.
    """
    cfg = dict(default_config())
    cfg.update(config or {})
    seed = cfg["seed"] if seed is None else seed
    I, S = int(cfg["items"]), int(cfg["scenarios"])
    regen = []
    for sub in range(MAX_REGEN):
        rng = np.random.default_rng([seed, sub] if sub else seed)
        A = rng.uniform(cfg["a_low"], cfg["a_high"], (I, I))
        cov = A @ A.T
        if np.any(np.all(cov == 0, axis=1)):
            regen.append(sub)
            continue
        var = np.diag(cov)
        span = var.max() - var.min()
        if span > 0:
            mu = cfg["mu_min"] + (var - var.min()) * (cfg["mu_max"] - cfg["mu_min"]) / span
        else:
            mu = np.full(I, cfg["mu_min"])
        R = rng.multivariate_normal(mu, cov, size=S)
        break
    else:
        raise InputError("could not generate a nondegenerate covariance")
    return MeanVarData(R, np.full(S, 1.0 / S), float(cfg["rho"]), float(cfg["capital"]), seed,
                       float(cfg["eps_strict"]), mu, cov, regen)


def meanvar_program(d, rho=None):
    """Fractional program over the holdings ``x``."""
    rho = d.rho if rho is None else rho
    S, n = d.R.shape
    f = ScenarioVariance(d.R)
    g = QuadBiaffine.scenario_mean(d.R)
    # sum_s p_s u_s >= eps for every p, written as -mean + eps <= 0
    h = QuadBiaffine(n, S, c0=d.eps_strict, B=-d.R)
    return FractionalProgram(f, g, n, make_chi2_simplex(d.p_hat, rho),
                             constraints=[(h, make_chi2_simplex(d.p_hat, rho))],
                             A_eq=np.ones((1, n)), b_eq=[d.capital], lower=np.zeros(n),
                             name=f"meanvar-rho{rho:g}")


def dispersion(d, x, p):
    """Variance-to-mean ratio of holdings ``x`` under probabilities ``p``."""
    u = d.R @ np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    m = p @ u
    return float((p @ u ** 2 - m ** 2) / m)


def meanvar_solve(d, rho=None, tol=MEANVAR_TOL, max_iter=200):
    """Robust holdings by bisection on ``F``; returns ``(x, alpha*, trace)``."""
    fp = meanvar_program(d, rho)
    try:
        sol, trace = bisect(fp, tol=tol, max_iter=max_iter)
    except InfeasibleError as exc:
        raise InfeasibleError("no portfolio has a positive expected return for every p",
                              exc.result) from exc
    return sol.x, sol.alpha, trace


def meanvar_worst_case(d, x, rho=None):
    """``(worst-case dispersion, maximizing p)`` for holdings ``x``."""
    return worst_case_ratio(meanvar_program(d, rho), x)


def meanvar_hindsight(d, p, rho=None):
    """Best dispersion when ``p`` is known, keeping the robust return row."""
    sol = perfect_hindsight(meanvar_program(d, rho), p)
    return sol.x, sol.alpha


def meanvar_study(d, rho=None, tol=MEANVAR_TOL):
    """Nominal versus robust comparison with the hindsight check."""
    rho = d.rho if rho is None else rho
    x_n, a_n, _ = meanvar_solve(d, 0.0, tol)
    x_r, a_r, trace = meanvar_solve(d, rho, tol)
    wc_n, _ = meanvar_worst_case(d, x_n, rho)
    wc_r, p_r = meanvar_worst_case(d, x_r, rho)
    _, hind = meanvar_hindsight(d, p_r, rho)
    return dict(
        rho=rho, seed=d.seed, x_nominal=x_n, x_robust=x_r,
        nominal_at_estimate=dispersion(d, x_n, d.p_hat),
        robust_at_estimate=dispersion(d, x_r, d.p_hat),
        nominal_worst=wc_n, robust_worst=wc_r, robust_value=a_r,
        hindsight_at_robust_worst=hind, p_worst=p_r, trace=trace,
        bracket=(trace.lb0, trace.ub0),
    )

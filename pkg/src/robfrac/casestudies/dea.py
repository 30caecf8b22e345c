"""Robust data envelopment analysis with interval data.

DMU ``k`` is scored by the reciprocal ratio ``v@x_k / u@y_k`` minimized over
nonnegative weights ``w = (u, v)`` with ``u@y_i <= v@x_i`` for every DMU,
all data ranging over per-DMU budget sets.  The ratio is scale invariant in
``w``, so the weights are normalized by ``sum(w) = 1`` to keep the feasible
set compact.  The robust efficiency is ``1 / alpha*``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..expr import QuadBiaffine
from ..reformulate import FractionalProgram
from ..rootfind import bisect, solve_fp
from ..usets import make_budget, make_singleton

DEA_TOL = 1e-4
TIE_TOL = 1e-6


@dataclass
class DeaData:
    """Interval inputs ``[x_lo, x_hi]`` and outputs ``[y_lo, y_hi]`` per DMU
    (rows) and factor (columns)."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray

    def __post_init__(self):
        for name in ("x_lo", "x_hi", "y_lo", "y_hi"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        if self.x_lo.shape != self.x_hi.shape or self.y_lo.shape != self.y_hi.shape:
            raise ValueError("interval bounds must have matching shapes")
        if self.x_lo.shape[0] != self.y_lo.shape[0]:
            raise ValueError("inputs and outputs must cover the same DMUs")
        if np.any(self.x_lo > self.x_hi) or np.any(self.y_lo > self.y_hi):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(self.x_lo <= 0) or np.any(self.y_lo <= 0):
            raise ValueError("DEA data must be positive")

    @property
    def n_dmu(self):
        return self.x_lo.shape[0]

    @property
    def n_in(self):
        return self.x_lo.shape[1]

    @property
    def n_out(self):
        return self.y_lo.shape[1]

    @property
    def xbar(self):
        return 0.5 * (self.x_lo + self.x_hi)

    @property
    def ybar(self):
        return 0.5 * (self.y_lo + self.y_hi)

    @property
    def dx(self):
        return 0.5 * (self.x_hi - self.x_lo)

    @property
    def dy(self):
        return 0.5 * (self.y_hi - self.y_lo)


def load_dea(path=None):
    """Read interval data; the bundled five-DMU table by default."""
    if path is None:
        text = resources.files(__package__).joinpath("data/dea_intervals.csv").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = list(csv.DictReader(text.splitlines()))
    n_in = sum(1 for k in rows[0] if k.startswith("input") and k.endswith("_lo"))
    n_out = sum(1 for k in rows[0] if k.startswith("output") and k.endswith("_lo"))

    def grab(prefix, n, side):
        return np.array([[float(r[f"{prefix}{j + 1}_{side}"]) for j in range(n)] for r in rows])

    return DeaData(grab("input", n_in, "lo"), grab("input", n_in, "hi"),
                   grab("output", n_out, "lo"), grab("output", n_out, "hi"))


# ---------------------------------------------------------------------------
# model


def _weight_maps(n_in, n_out):
    """Selection matrices with ``a = (x, y)`` of one DMU and ``w = (u, v)``."""
    L = n = n_in + n_out
    Bv = np.zeros((L, n))  # a @ Bv @ w = v @ x
    Bu = np.zeros((L, n))  # a @ Bu @ w = u @ y
    for j in range(n_in):
        Bv[j, n_out + j] = 1.0
    for j in range(n_out):
        Bu[n_in + j, j] = 1.0
    return Bv, Bu


def dea_program(d, k, gamma, xbar=None, ybar=None):
    """Robust fractional program scoring DMU ``k`` (0-based).

    ``xbar``/``ybar`` override the interval midpoints (used for certain
    data with ``gamma = 0``).
    """
    xbar = d.xbar if xbar is None else np.asarray(xbar, dtype=float)
    ybar = d.ybar if ybar is None else np.asarray(ybar, dtype=float)
    n_in, n_out = d.n_in, d.n_out
    n = L = n_in + n_out
    Bv, Bu = _weight_maps(n_in, n_out)

    def region(i):
        if gamma == 0:
            return make_singleton(np.concatenate([xbar[i], ybar[i]]))
        return make_budget(xbar[i], ybar[i], d.dx[i], d.dy[i], gamma)

    f = QuadBiaffine(n, L, B=Bv)
    g = QuadBiaffine(n, L, B=Bu)
    cons = [(QuadBiaffine(n, L, B=Bu - Bv), region(i)) for i in range(d.n_dmu)]
    return FractionalProgram(f, g, n, region(k), constraints=cons,
                             A_eq=np.ones((1, n)), b_eq=[1.0], lower=np.zeros(n),
                             name=f"dea-dmu{k + 1}-gamma{gamma:g}")


def dea_efficiency(d, k, gamma, tol=DEA_TOL):
    """Robust efficiency of DMU ``k`` (0-based): reciprocal of the root of
    ``F`` located by bisection to interval width ``tol``."""
    sol, _ = bisect(dea_program(d, k, gamma), tol=tol)
    return 1.0 / sol.alpha


def nominal_efficiency(xs, ys, k):
    """Classical efficiency of DMU ``k`` for certain data ``xs``, ``ys``."""
    d = DeaData(xs, xs, ys, ys)
    sol = solve_fp(dea_program(d, k, 0.0, xs, ys), method="s1")
    return 1.0 / sol.alpha


def _efficiency_row(args):
    d, gamma, tol = args
    return [dea_efficiency(d, k, gamma, tol) for k in range(d.n_dmu)]


def dea_sweep(d, gammas, tol=DEA_TOL, jobs=1):
    """Efficiency table with one row per ``gamma`` and one column per DMU."""
    tasks = [(d, float(gm), tol) for gm in gammas]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_efficiency_row, tasks))
    else:
        rows = [_efficiency_row(t) for t in tasks]
    return np.array(rows)


def rank_from_efficiencies(eff, tie_tol=TIE_TOL):
    """1-based DMU order, most efficient first, plus groups of tied DMUs.

    Efficiencies within ``tie_tol`` of each other are reported as ties; the
    order within a tie is by index.
    """
    eff = np.asarray(eff, dtype=float)
    order = sorted(range(eff.size), key=lambda i: (-eff[i], i))
    ties, group = [], [order[0]]
    for i in order[1:]:
        if abs(eff[group[-1]] - eff[i]) <= tie_tol:
            group.append(i)
        else:
            if len(group) > 1:
                ties.append(tuple(j + 1 for j in group))
            group = [i]
    if len(group) > 1:
        ties.append(tuple(j + 1 for j in group))
    return tuple(i + 1 for i in order), ties


def dea_rank(d, gamma, tol=DEA_TOL, return_details=False):
    """DMUs ordered by robust efficiency (1-based, ties by index)."""
    eff = _efficiency_row((d, float(gamma), tol))
    order, ties = rank_from_efficiencies(eff)
    if return_details:
        return order, np.array(eff), ties
    return order


# ---------------------------------------------------------------------------
# simulation


def draw_data(d, rng, mode="uniform"):
    """One realization of the interval data (``uniform`` or ``endpoints``)."""
    if mode == "uniform":
        xs = rng.uniform(d.x_lo, d.x_hi)
        ys = rng.uniform(d.y_lo, d.y_hi)
    elif mode == "endpoints":
        xs = np.where(rng.random(d.x_lo.shape) < 0.5, d.x_lo, d.x_hi)
        ys = np.where(rng.random(d.y_lo.shape) < 0.5, d.y_lo, d.y_hi)
    elif mode == "midpoints":
        xs, ys = d.xbar, d.ybar
    else:
        raise ValueError(f"unknown draw mode {mode!r}")
    return xs, ys


def _compare(args):
    xs, ys, i, j = args
    return nominal_efficiency(xs, ys, i) > nominal_efficiency(xs, ys, j)


def dea_simulate(d, n, seed=0, mode="uniform", pair=(3, 5), jobs=1):
    """Fraction of ``n`` random draws in which DMU ``pair[0]`` is strictly
    more efficient than DMU ``pair[1]`` (1-based) under the classical model."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    i, j = pair[0] - 1, pair[1] - 1
    tasks = [(*draw_data(d, rng, mode), i, j) for _ in range(n)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            wins = list(pool.map(_compare, tasks))
    else:
        wins = [_compare(t) for t in tasks]
    return float(np.mean(wins))

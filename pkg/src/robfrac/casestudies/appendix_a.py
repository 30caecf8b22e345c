"""Nonconvex min-max ratio showing why the curvature conditions matter.

The ratio

    (a^2 x1 x2 + x1^(2a) + a x3^3) / (5 (a - 1)^2 x1^4 + 2 x2^2 + 4 a x3)

over ``a in [0, 1]`` and ``0.5 <= x_i <= 5`` is neither convex in ``x`` nor
concave in ``a``.  A point reported optimal elsewhere, ``x = (0.5, 1.5, 0.5)``,
is beaten by ``x = (0.5, 5, 0.5)``; the inner maximum over ``a`` is found by
a dense grid followed by bounded scalar refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

GRID_STEP = 1e-4
X_LIN = (0.5, 1.5, 0.5)
X_BETTER = (0.5, 5.0, 0.5)


def ratio(x, a):
    """Objective ratio at ``x`` for scalar or array ``a``."""
    x1, x2, x3 = (float(v) for v in x)
    a = np.asarray(a, dtype=float)
    num = a ** 2 * x1 * x2 + x1 ** (2 * a) + a * x3 ** 3
    den = 5 * (a - 1) ** 2 * x1 ** 4 + 2 * x2 ** 2 + 4 * a * x3
    return num / den


def inner_max(x, step=GRID_STEP):
    """``(max over a in [0, 1] of the ratio, maximizer)``.

    The grid maximizer is refined on its two neighbouring cells with a
    bounded Brent search (golden-section with parabolic steps).
    """
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    vals = ratio(x, grid)
    k = int(np.argmax(vals))
    best_a, best = float(grid[k]), float(vals[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda a: -float(ratio(x, a)), bounds=(lo, hi),
                              method="bounded", options=dict(xatol=1e-12))
        if -res.fun > best:
            best_a, best = float(res.x), float(-res.fun)
    return best, best_a


@dataclass
class AppendixACheck:
    """Inner maxima at the two candidate points."""

    val_at_lin_point: float
    a_at_lin_point: float
    best_found_val: float
    a_at_best: float

    def __iter__(self):
        # unpacks as (val_at_lin_point, best_found_val)
        return iter((self.val_at_lin_point, self.best_found_val))

    @property
    def passed(self):
        return self.best_found_val < self.val_at_lin_point


def appendix_a_check():
    """Worst-case ratios at both candidate points; raises ``AssertionError``
    if the second point does not improve on the first."""
    v1, a1 = inner_max(X_LIN)
    v2, a2 = inner_max(X_BETTER)
    out = AppendixACheck(v1, a1, v2, a2)
    assert out.passed, "the second point does not improve the worst-case ratio"
    return out


# name used by the command line and the study registry
appendixA_check = appendix_a_check

__all__ = ["appendixA_check", "ratio", "inner_max", "appendix_a_check", "AppendixACheck", "X_LIN", "X_BETTER"]

"""Perfect-hindsight solves: the objective parameters are known in advance."""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from ..rootfind import solve_fp

MEMBER_TOL = 1e-6


def perfect_hindsight(fp, a_fixed, a_den=None, tol=MEMBER_TOL, settings=None):
    """Solve ``fp`` with the objective set replaced by ``{a_fixed}``.

    The constraints keep their robust counterparts, so the feasible set is
    the same fixed convex set as in the robust solve.  Raises
    :class:`InputError` if ``a_fixed`` is not a member of the objective set.
    """
    a_fixed = np.asarray(a_fixed, dtype=float).reshape(-1)
    if not fp.objective_set.contains(a_fixed, tol=tol):
        raise InputError("a_fixed is not a member of the objective uncertainty set")
    if fp.decoupled:
        a_den = fp.den_set.nominal if a_den is None else np.asarray(a_den, dtype=float).reshape(-1)
        if not fp.den_set.contains(a_den, tol=tol):
            raise InputError("a_den is not a member of the denominator uncertainty set")
    return solve_fp(fp.with_objective_point(a_fixed, a_den), method="s1", settings=settings)

"""Root finding on ``F(alpha)`` for robust fractional programs.

``F(alpha) = min_x max_{a in U0} f(a, x) - alpha g(a, x)`` is nonincreasing
in ``alpha`` and changes sign at the optimal ratio ``alpha*``.  Bisection
and two Dinkelbach-type iterations are provided, all recording a
:class:`RootFindTrace`.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import ConicProgram
from .errors import (
    InfeasibleError,
    InternalConsistencyError,
    SolverError,
    UnsupportedConfigurationError,
    WrongCaseError,
)
from .expr import SumAtom
from .reformulate import build_parametric, build_s1, classify, recover_x_schaible, robust_value

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
F_TOL = 1e-7
MAX_INNER = 100


@dataclass
class TraceRecord:
    k: int
    alpha: float
    F: float
    x: np.ndarray
    lb: float
    ub: float
    wall_ms: float
    a0: np.ndarray = None  # reserved for worst-case reuse

    @property
    def width(self):
        return self.ub - self.lb


@dataclass
class RootFindTrace:
    """Per-iteration records plus the terminating status
    (``converged``, ``iteration-limit`` or ``infeasible``)."""

    method: str
    records: list = field(default_factory=list)
    status: str = "running"
    lb0: float = np.nan
    ub0: float = np.nan

    def add(self, **kw):
        self.records.append(TraceRecord(k=len(self.records) + 1, **kw))

    @property
    def alphas(self):
        return np.array([r.alpha for r in self.records])

    @property
    def values(self):
        return np.array([r.F for r in self.records])

    @property
    def widths(self):
        return np.array([r.width for r in self.records])

    def rows(self):
        return [(r.k, r.alpha, r.F, r.width, r.wall_ms) for r in self.records]

    def to_csv(self, path_or_stream, timing=True):
        """Write columns ``k, alpha, F, width`` and, with ``timing``,
        ``wall_ms``."""
        own = isinstance(path_or_stream, (str, bytes)) or hasattr(path_or_stream, "__fspath__")
        stream = open(path_or_stream, "w", newline="") if own else path_or_stream
        try:
            w = csv.writer(stream, lineterminator="\n")
            w.writerow(["k", "alpha", "F", "width"] + (["wall_ms"] if timing else []))
            for k, a, F, width, ms in self.rows():
                row = [k, repr(float(a)), repr(float(F)), repr(float(width))]
                w.writerow(row + ([f"{ms:.3f}"] if timing else []))
        finally:
            if own:
                stream.close()


@dataclass
class Solution:
    """Outcome of a robust fractional solve."""

    x: np.ndarray
    alpha: float
    status: str
    case: object = None
    method: str = ""
    trace: RootFindTrace = None
    result: object = None
    bracket: tuple = None


# ---------------------------------------------------------------------------
# F(alpha)


def _blend(p0, p1, alpha):
    blocks = tuple(
        conic.ConeBlock(b0.kind, b0.A + alpha * (b1.A - b0.A), b0.b + alpha * (b1.b - b0.b), b0.tag)
        for b0, b1 in zip(p0.blocks, p1.blocks))
    return p0.replace(c=p0.c + alpha * (p1.c - p0.c), c0=p0.c0 + alpha * (p1.c0 - p0.c0),
                      blocks=blocks, meta=dict(p0.meta, alpha=alpha))


def _same_structure(p0, p1):
    if p0.n_vars != p1.n_vars or len(p0.blocks) != len(p1.blocks) or p0.pending or p1.pending:
        return False
    return all(b0.kind == b1.kind and b0.A.shape == b1.A.shape for b0, b1 in zip(p0.blocks, p1.blocks))


class ParametricFamily:
    """``alpha -> build_parametric(fp, alpha, scale_x)``.

    For a biaffine denominator the program data are affine in ``alpha``, so
    two builds are blended instead of rebuilding at every ``alpha``.
    """

    def __init__(self, fp, scale_x=None):
        self.fp = fp
        self.scale_x = scale_x
        self._ends = None
        if fp.g_biaffine():
            p0 = build_parametric(fp, 0.0, scale_x)
            p1 = build_parametric(fp, 1.0, scale_x)
            if _same_structure(p0, p1):
                self._ends = (p0, p1)

    def at(self, alpha):
        alpha = float(alpha)
        if self._ends is None or (alpha < 0 and not self.fp.g_biaffine()):
            return build_parametric(self.fp, alpha, self.scale_x)
        return _blend(*self._ends, alpha)


def _checked(result, what):
    if result.status == "primal-infeasible":
        raise InfeasibleError(f"{what} is infeasible", result)
    if result.status == "dual-infeasible":
        raise SolverError(f"{what} is unbounded; the feasible region must be compact", result)
    if not result.ok:
        raise SolverError(f"{what} ended with status {result.status}", result)
    return result


def evaluate_F(fp, alpha, scale_x=None, settings=None, family=None):
    """``(F(alpha), minimizer x, SolveResult)``."""
    program = family.at(alpha) if family is not None else build_parametric(fp, alpha, scale_x)
    res = _checked(conic.solve(program, settings), f"F({alpha:.6g})")
    return res.objective, res.value("x"), res


# ---------------------------------------------------------------------------
# worst-case ratio


def worst_case_ratio(fp, x, tol=1e-10, settings=None):
    """``max_{a in U0} f(a, x) / g(a, x)`` and a maximizer.

    For a shared set the maximum is located by a Dinkelbach iteration over
    ``a``: each step maximizes the concave function ``f - beta g`` over the
    set.  For decoupled sets the numerator and denominator are optimized
    separately.  Returns ``(ratio, a)`` (``a`` is a pair for decoupled sets).
    """
    x = np.asarray(x, dtype=float)
    f, g = fp.numerator, fp.denominator
    if fp.decoupled:
        fmax, af = robust_value(f, fp.objective_set, x, settings)
        if fmax >= 0:
            gneg, ag = robust_value(g.scaled(-1.0), fp.den_set, x, settings)
            gval = -gneg
        else:
            gval, ag = robust_value(g, fp.den_set, x, settings)
        if gval <= 0:
            raise InternalConsistencyError("denominator is not positive at the worst case")
        return fmax / gval, (af, ag)
    U = fp.objective_set
    a = U.nominal.copy()
    beta = fp.ratio(x, a)
    if U.singleton:
        return beta, a
    for _ in range(MAX_INNER):
        try:
            phi, a_new = robust_value(SumAtom([f, g.scaled(-beta)]), U, x, settings,
                                      allow_inexact=True)
        except SolverError:
            # beta is the exact ratio at a member, hence a valid lower value
            logger.warning("worst-case refinement stopped at beta=%.12g", beta)
            break
        gval = g.value(x, a_new)
        if gval <= 0:
            raise InternalConsistencyError("denominator is not positive over the set")
        beta_new = f.value(x, a_new) / gval
        improved = beta_new > beta
        if improved:
            beta, a = beta_new, a_new
        scale = max(1.0, abs(beta) * gval)
        if phi <= tol * scale or not improved:
            break
    else:
        logger.warning("inner worst-case iteration hit its limit")
    return beta, a


# ---------------------------------------------------------------------------
# bounds


def _nominal_lower_bound(fp, robust_constraints, settings):
    nom = fp.nominal(constraints=not robust_constraints)
    try:
        tag = classify(nom)
    except UnsupportedConfigurationError:
        tag = None
    if tag is not None and tag.case == "S1":
        res = _checked(conic.solve(build_s1(nom), settings), "nominal lower bound")
        return float(res.value("alpha")[0]), recover_x_schaible(res)
    sol, _ = dinkelbach(nom, "b", tol=F_TOL, settings=settings, _bounds=False)
    return sol.alpha, sol.x


def bounds(fp, robust_lb=False, settings=None, family=None):
    """``(alpha_LB, alpha_UB, info)`` bracketing ``alpha*``.

    The lower bound is the nominal optimal ratio (certain constraints at
    their nominal point unless ``robust_lb``); the upper bound is the
    worst-case ratio at the minimizer of ``F(alpha_LB)``, which is robust
    feasible.  ``info`` holds that point and ``F(alpha_LB)``.
    """
    lb, _ = _nominal_lower_bound(fp, robust_lb, settings)
    F_lb, x_lb, _ = evaluate_F(fp, lb, settings=settings, family=family)
    ub, _ = worst_case_ratio(fp, x_lb, settings=settings)
    if ub < lb:
        ub = lb
    return lb, ub, dict(x=x_lb, F_lb=F_lb)


# ---------------------------------------------------------------------------
# methods


def bisect(fp, tol=DEFAULT_TOL, max_iter=200, f_tol=None, settings=None, robust_lb=False,
           bracket=None):
    """Bisection on ``F``.

    Halves ``[alpha_LB, alpha_UB]`` by the sign of ``F`` at the midpoint
    (``|F| <= f_tol`` counts as nonpositive; default ``min(tol, 1e-7)``)
    until the width is below ``tol``.  The entry signs at the bracket ends
    are checked with the band ``max(f_tol, 1e-7)``.  Returns the bracket midpoint together with the last
    upper-side minimizer, which is robust feasible with worst-case ratio at
    most ``alpha_UB``.
    """
    f_tol = min(tol, F_TOL) if f_tol is None else f_tol
    family = ParametricFamily(fp)
    trace = RootFindTrace("bisect")
    if bracket is None:
        lb, ub, info = bounds(fp, robust_lb, settings, family)
        F_lb = info["F_lb"]
    else:
        lb, ub = map(float, bracket)
        F_lb = evaluate_F(fp, lb, settings=settings, family=family)[0]
    F_ub, x_ub, res_ub = evaluate_F(fp, ub, settings=settings, family=family)
    # entry checks catch wrong brackets, not solver noise, so their band never
    # drops below F_TOL even when a tight tol narrows the sign band
    entry_tol = max(f_tol, F_TOL)
    if F_lb < -entry_tol * max(1.0, abs(lb)):
        raise InternalConsistencyError(f"F(alpha_LB) = {F_lb:.3g} < 0 at alpha_LB = {lb:.6g}")
    if F_ub > entry_tol * max(1.0, abs(ub)):
        raise InternalConsistencyError(f"F(alpha_UB) = {F_ub:.3g} > 0 at alpha_UB = {ub:.6g}")
    trace.lb0, trace.ub0 = lb, ub
    status = "converged"
    k = 0
    while ub - lb >= tol:
        if k >= max_iter:
            status = "iteration-limit"
            break
        k += 1
        start = time.perf_counter()
        mid = 0.5 * (lb + ub)
        F_mid, x_mid, res = evaluate_F(fp, mid, settings=settings, family=family)
        if F_mid > f_tol:
            lb = mid
        else:
            ub, x_ub, res_ub = mid, x_mid, res
        trace.add(alpha=mid, F=F_mid, x=x_mid, lb=lb, ub=ub,
                  wall_ms=1e3 * (time.perf_counter() - start))
        logger.debug("bisect k=%d alpha=%.10g F=%.3g width=%.3g", k, mid, F_mid, ub - lb)
    trace.status = status
    return Solution(x_ub, 0.5 * (lb + ub), status, method="bisect", trace=trace,
                    result=res_ub, bracket=(lb, ub)), trace


def dinkelbach(fp, variant="b", tol=DEFAULT_TOL, max_iter=100, settings=None, x0=None,
               _bounds=True):
    """Dinkelbach-type iteration.

    Starts from the worst-case ratio of a robust-feasible point, solves
    ``F(alpha_k)`` and moves to the worst-case ratio of its minimizer while
    ``F(alpha_k) < -tol``.  Variant ``"c"`` scales the right-hand side of
    the objective row by ``g(a, x_k)``.  The ``alpha_k`` are nonincreasing;
    a violation raises :class:`InternalConsistencyError`.
    """
    if variant not in ("b", "c"):
        raise ValueError("variant must be 'b' or 'c'")
    trace = RootFindTrace(f"dinkelbach-{variant}")
    if x0 is None:
        if _bounds:
            _, _, info = bounds(fp, settings=settings)
            x0 = info["x"]
        else:
            x0 = _feasible_point(fp, settings)
    x = np.asarray(x0, dtype=float)
    alpha, a = worst_case_ratio(fp, x, settings=settings)
    trace.lb0 = trace.ub0 = alpha
    family = ParametricFamily(fp) if variant == "b" else None
    status, res = "iteration-limit", None
    for k in range(max_iter):
        start = time.perf_counter()
        scale = x if variant == "c" else None
        F, x_new, res = evaluate_F(fp, alpha, scale, settings, family)
        g_scale = 1.0 if variant == "c" else min(1.0, _g_scale(fp, x, a))
        trace.add(alpha=alpha, F=F, x=x_new, lb=alpha + min(F, 0.0), ub=alpha,
                  wall_ms=1e3 * (time.perf_counter() - start))
        if F >= -tol * g_scale:
            status = "converged"
            break
        alpha_new, a_new = worst_case_ratio(fp, x_new, settings=settings)
        if alpha_new > alpha + 10 * tol * max(1.0, abs(alpha)):
            raise InternalConsistencyError(
                f"ratio increased from {alpha:.10g} to {alpha_new:.10g}; solver accuracy too low")
        if alpha_new >= alpha:
            status = "converged"
            break
        alpha, a, x = alpha_new, a_new, x_new
    trace.status = status
    return Solution(x, alpha, status, method=trace.method, trace=trace, result=res,
                    bracket=(alpha, alpha)), trace


def _g_scale(fp, x, a):
    if fp.decoupled:
        return abs(fp.denominator.value(x, a[1]))
    return abs(fp.denominator.value(x, a))


def _feasible_point(fp, settings):
    """Any point satisfying the robust constraints (minimizer of ``F(0)``)."""
    return evaluate_F(fp, 0.0, settings=settings)[1]


# ---------------------------------------------------------------------------
# driver

METHODS = ("auto", "s1", "s2", "parametric", "bisect", "dinkelbach-b", "dinkelbach-c")


def solve_fp(fp, method="auto", tol=DEFAULT_TOL, max_iter=200, settings=None):
    """Classify and solve; returns a :class:`Solution`.

    ``auto`` uses the single Schaible solve for S1 and bisection otherwise.
    Forcing ``s1`` or ``s2`` on a program outside that case raises
    :class:`WrongCaseError`.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    tag = classify(fp)
    if method == "s1" and tag.case != "S1":
        raise WrongCaseError(f"method s1 needs case S1, problem is {tag.case} ({tag.reason})")
    if method == "s2" and tag.case != "S2":
        raise WrongCaseError(f"method s2 needs case S2, problem is {tag.case} ({tag.reason})")
    if method in ("s1", "auto") and tag.case == "S1":
        res = _checked(conic.solve(build_s1(fp), settings), "Schaible counterpart")
        return Solution(recover_x_schaible(res), float(res.value("alpha")[0]), "converged",
                        case=tag, method="s1", result=res)
    if method.startswith("dinkelbach"):
        sol, _ = dinkelbach(fp, method[-1], tol=tol, max_iter=max_iter, settings=settings)
    else:
        sol, _ = bisect(fp, tol=tol, max_iter=max_iter, settings=settings)
    sol.case = tag
    return sol


__all__ = [
    "TraceRecord", "RootFindTrace", "Solution", "ParametricFamily", "evaluate_F",
    "worst_case_ratio", "bounds", "bisect", "dinkelbach", "solve_fp", "METHODS", "ConicProgram",
]

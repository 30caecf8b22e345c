"""Deterministic conic counterparts of robust fractional programs.

The central helper is :func:`robust_le`, which writes

    h(a, x) <= rhs   for all a in U = {a : tau_j(a) <= 0}

as the existence of ``u_j >= 0`` and ``v_j`` with

    sum_j u_j tau_j*(v_j / u_j) - h_*(sum_j v_j, x) <= rhs.

Summands of ``h`` that are affine in ``a`` pin their share of the conjugate
argument to an affine function of ``x``; each further summand receives a
fresh split vector, and the inner maximum of the sum rule is dropped.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .conic import Affine, ConeBlock, ProgramBuilder
from .errors import (
    AssumptionViolationError,
    DegenerateTransformError,
    DomainError,
    SolverError,
    InputError,
    RecoveryDegenerateError,
    UnsupportedConfigurationError,
    WrongCaseError,
    WrongMethodError,
)
from .expr import QuadBiaffine, SumAtom, flatten
from .usets import make_singleton

logger = logging.getLogger(__name__)

EPS_T = 1e-8
RECOVERY_TOL = 1e-10


@dataclass
class FractionalProgram:
    """``min_x max_{a in U0} f(a, x) / g(a, x)`` under robust constraints.

    Parameters
    ----------
    numerator, denominator : ModelAtom
        ``f`` (convex in ``x``, concave in ``a``) and ``g`` (concave in
        ``x``, affine in ``a``).
    n : int
        Decision dimension.
    objective_set : UncertaintySet
        ``U0``; shared by ``f`` and ``g`` unless ``denominator_set`` is given.
    denominator_set : UncertaintySet, optional
        ``U0'`` for the decoupled case (``f`` over ``U0``, ``g`` over ``U0'``).
    constraints : list of (ModelAtom, UncertaintySet)
        Robust rows ``h_i(a_i, x) <= 0`` for all ``a_i`` in ``U_i``.
    A_ub, b_ub, A_eq, b_eq, lower, upper
        Certain linear data.
    f_sign : {"nonneg", "free"}
        Sign certificate for the numerator.
    """

    numerator: object
    denominator: object
    n: int
    objective_set: object
    denominator_set: object = None
    constraints: list = field(default_factory=list)
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    f_sign: str = "nonneg"
    name: str = ""

    def __post_init__(self):
        n = self.n
        if self.A_ub is None:
            self.A_ub, self.b_ub = np.zeros((0, n)), np.zeros(0)
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, n)), np.zeros(0)
        self.A_ub = np.atleast_2d(np.asarray(self.A_ub, dtype=float)).reshape(-1, n)
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float)).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float).reshape(n)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float).reshape(n)
        if self.f_sign not in ("nonneg", "free"):
            raise InputError("f_sign must be 'nonneg' or 'free'")
        self.constraints = list(self.constraints)
        self.check()

    # structure -----------------------------------------------------------
    @property
    def decoupled(self):
        return self.denominator_set is not None

    @property
    def den_set(self):
        return self.denominator_set if self.decoupled else self.objective_set

    def check(self):
        """Dimension and declared-curvature checks for every atom."""
        f, g = self.numerator, self.denominator
        if self.A_ub.shape[0] != self.b_ub.shape[0] or self.A_eq.shape[0] != self.b_eq.shape[0]:
            raise InputError("linear constraint data have inconsistent row counts")
        for name, atom, uset in (("numerator", f, self.objective_set),
                                 ("denominator", g, self.den_set)):
            if atom.n_x != self.n:
                raise InputError(f"{name} expects {atom.n_x} decision variables, problem has {self.n}")
            if atom.L != uset.L:
                raise InputError(f"{name} has {atom.L} uncertain parameters, its set has {uset.L}")
        if f.curvature_x not in ("convex", "affine") or f.curvature_a not in ("concave", "affine"):
            raise AssumptionViolationError("numerator must be convex in x and concave in a")
        if g.curvature_x not in ("concave", "affine"):
            raise AssumptionViolationError("denominator must be concave in x")
        if not g.affine_in_a:
            raise AssumptionViolationError("denominator must be affine in the uncertain parameter")
        for i, (h, uset) in enumerate(self.constraints):
            if h.n_x != self.n or h.L != uset.L:
                raise InputError(f"constraint {i} has inconsistent dimensions")
            if h.curvature_x not in ("convex", "affine") or h.curvature_a not in ("concave", "affine"):
                raise AssumptionViolationError(f"constraint {i} must be convex in x and concave in a")

    def _g_parts(self):
        parts = flatten(self.denominator)
        return parts if all(isinstance(p, QuadBiaffine) for p in parts) else None

    def g_certain(self):
        if self.den_set.singleton:
            return True
        parts = self._g_parts()
        return parts is not None and not any(p.depends_on_a for p in parts)

    def g_independent_of_x(self):
        parts = self._g_parts()
        return parts is not None and not any(p.depends_on_x for p in parts)

    def g_biaffine(self):
        parts = self._g_parts()
        return parts is not None and all(p.Q is None for p in parts)

    def g_structure(self):
        """Most specific structure label of the denominator."""
        if self.g_certain():
            return "certain"
        if self.g_independent_of_x():
            return "independent-of-x"
        if self.g_biaffine():
            return "biaffine"
        return "general"

    # variants -----------------------------------------------------------
    def with_objective_point(self, a0, a0_den=None):
        """Copy with the objective sets replaced by singletons."""
        if self.decoupled:
            return replace(self, objective_set=make_singleton(a0),
                           denominator_set=make_singleton(a0 if a0_den is None else a0_den))
        return replace(self, objective_set=make_singleton(a0))

    def nominal(self, constraints=True):
        """Copy with every set (optionally also constraint sets) at its nominal point."""
        fp = self.with_objective_point(self.objective_set.nominal,
                                       self.den_set.nominal if self.decoupled else None)
        if constraints:
            fp = replace(fp, constraints=[(h, make_singleton(u.nominal) if not u.singleton else u)
                                          for h, u in self.constraints])
        return fp

    def ratio(self, x, a, a_den=None):
        a_den = a if a_den is None else a_den
        return self.numerator.value(x, a) / self.denominator.value(x, a_den)

    def linear_violation(self, x):
        x = np.asarray(x, dtype=float)
        viol = [0.0]
        if self.A_ub.size:
            viol.append(float(np.max(self.A_ub @ x - self.b_ub)))
        if self.A_eq.size:
            viol.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        viol.append(float(np.max(self.lower - x)))
        viol.append(float(np.max(x - self.upper)))
        return max(viol)

    def emit_linear(self, b, y, t=None):
        """Certain linear rows, homogenized with ``t`` when given."""
        one = Affine.constant(1.0) if t is None else t
        if self.A_ub.shape[0]:
            b.nonneg(self.b_ub * one - self.A_ub @ y, tag="linear.ub")
        if self.A_eq.shape[0]:
            b.eq(self.A_eq @ y - self.b_eq * one, tag="linear.eq")
        lo = np.flatnonzero(np.isfinite(self.lower))
        if lo.size:
            b.nonneg(y[lo] - self.lower[lo] * one, tag="linear.lower")
        hi = np.flatnonzero(np.isfinite(self.upper))
        if hi.size:
            b.nonneg(self.upper[hi] * one - y[hi], tag="linear.upper")


@dataclass(frozen=True)
class CaseTag:
    case: str  # S1 | S2 | General
    alpha_domain: str  # nonneg | free
    equality: bool = False
    reason: str = ""


def classify(fp):
    """Pick the cheapest applicable formulation (S1, then S2, then General).

    A sign-free numerator is accepted only when the denominator is certain
    and affine in ``x`` (single Schaible solve with an equality
    normalization), affine in ``a`` and free of ``x`` (S2 with free
    ``alpha``), or biaffine (parametric program with free ``alpha``).
    """
    free = fp.f_sign == "free"
    if fp.decoupled or fp.g_certain():
        if not free:
            return CaseTag("S1", "nonneg", False, "decoupled or certain denominator")
        if fp.g_certain() and fp.g_biaffine():
            return CaseTag("S1", "free", True, "certain affine denominator, sign-free numerator")
        raise UnsupportedConfigurationError(
            "single-solve Schaible form with a sign-free numerator needs a certain denominator "
            "that is affine in x; the denominator here is "
            + ("uncertain" if not fp.g_certain() else "not affine in x"))
    if fp.g_independent_of_x():
        if free and not fp.g_biaffine():
            raise UnsupportedConfigurationError(
                "denominator-free-of-x form with a sign-free numerator needs a denominator "
                "affine in a")
        return CaseTag("S2", "free" if free else "nonneg", False, "denominator free of x")
    if free and not fp.g_biaffine():
        raise UnsupportedConfigurationError(
            "parametric form with a sign-free numerator needs a biaffine denominator")
    return CaseTag("General", "free" if free else "nonneg", False, "coupled uncertain denominator")


# ---------------------------------------------------------------------------
# constraint-wise counterpart


def robust_le(b, terms, uset, rhs, tag):
    """Emit ``sum_k t_k h_k(a, x_k / t_k) <= rhs`` for all ``a`` in ``uset``.

    ``terms`` is a list of ``(atom, x, t)`` with ``x`` an affine expression
    (ignored by atoms without decision variables) and ``t`` a scalar scale
    (None for 1).  Returns the index of the main inequality block.
    """
    rhs = Affine.lift(rhs)
    parts = [(p, x, t) for atom, x, t in terms for p in flatten(atom)]
    if uset.singleton:
        total = Affine.constant(0.0)
        for atom, x, t in parts:
            _, bound = atom.fix_a(uset.nominal).pinned(b, x, t)
            total = total + bound
        return b.nonneg(rhs - total, tag=tag)

    start = b.pending_count()
    cost = Affine.constant(0.0)
    sigma = Affine.constant(np.zeros(uset.L))
    for j, tau in enumerate(uset.taus):
        u = b.var(f"{tag}.tau{j}.u", 1, nonneg=True)
        v, c = tau.emit_perspective(b, u, name=f"{tag}.tau{j}")
        sigma = sigma + v
        cost = cost + c

    pinned = Affine.constant(np.zeros(uset.L))
    free = []
    for atom, x, t in parts:
        if atom.affine_in_a:
            s, bound = atom.pinned(b, x, t)
            pinned = pinned + s
            cost = cost + bound
        else:
            free.append((atom, x, t))
    rest = sigma - pinned
    if not free:
        b.eq(rest, tag=tag + ".conj")
    for k, (atom, x, t) in enumerate(free):
        if k < len(free) - 1:
            s = b.var(f"{tag}.split{k}", uset.L)
            rest = rest - s
        else:
            s = rest
        cost = cost + atom.emit_neg_conj(b, s, x, t)
    row = b.nonneg(rhs - cost, tag=tag)
    b.attach_pending(start, row)
    if uset.kind in ("budget", "ball") and hasattr(uset, "halfwidth") and np.any(uset.halfwidth == 0):
        b.meta.setdefault("ri_flags", []).append(tag)
        logger.info("set for %s has empty interior in some coordinates; proceeding", tag)
    return row


def robustify_constraint(h, uset, b, x, rhs=0.0, tag="con"):
    """Add the robust counterpart of ``h(a, x) <= rhs`` over ``uset`` to
    builder ``b``; returns the indices of the blocks that were added."""
    if h.curvature_a not in ("concave", "affine"):
        raise AssumptionViolationError("robust rows must be concave in the uncertain parameter")
    first = len(b._blocks)
    robust_le(b, [(h, x, None)], uset, rhs, tag)
    return list(range(first, len(b._blocks)))


# ---------------------------------------------------------------------------
# single-solve counterparts


def build_s1(fp, eps_t=EPS_T):
    """Schaible counterpart with perspective rows; minimizes ``alpha``.

    Variables ``y`` and ``t >= eps_t`` with ``x = y / t``.
    """
    tag = classify(fp)
    if tag.case != "S1":
        raise WrongCaseError(f"problem is {tag.case} ({tag.reason}), not S1")
    b = ProgramBuilder()
    alpha = b.var("alpha", 1, nonneg=(tag.alpha_domain == "nonneg"))
    t = b.var("t", 1)
    b.nonneg(t - eps_t, tag="t.min")
    y = b.var("y", fp.n)
    robust_le(b, [(fp.numerator, y, t)], fp.objective_set, alpha, "obj.num")
    if tag.equality:
        g = fp.denominator
        if not fp.den_set.singleton and g.depends_on_a:
            raise WrongCaseError("equality normalization needs a certain denominator")
        g_fixed = g.fix_a(fp.den_set.nominal)
        _, val = g_fixed.pinned(b, y, t)
        b.eq(val - 1.0, tag="obj.den")
    else:
        robust_le(b, [(fp.denominator.scaled(-1.0), y, t)], fp.den_set, -1.0, "obj.den")
    for i, (h, uset) in enumerate(fp.constraints):
        robust_le(b, [(h, y, t)], uset, 0.0, f"con{i}")
    fp.emit_linear(b, y, t)
    b.minimize(alpha)
    b.meta.update(case=tag, eps_t=eps_t, builder="s1")
    return _finish(b)


def build_s2(fp, alpha):
    """Counterpart of ``f(a, x) - alpha g(a) <= w`` for a denominator free of
    ``x``; its optimal ``w`` has the sign of ``alpha* - alpha``.

    ``alpha`` is a caller-supplied scalar, never a variable, so the term
    ``alpha g*(s / alpha)`` stays linear.  With a sign-free numerator
    ``alpha`` may be negative.
    """
    if not fp.g_independent_of_x():
        raise WrongCaseError("build_s2 needs a denominator that does not depend on x")
    tag = classify(fp)
    if float(alpha) < 0 and tag.alpha_domain != "free":
        raise DomainError("negative alpha needs a sign-free numerator and affine denominator")
    program = build_parametric(fp, alpha)
    return program.replace(meta=dict(program.meta, builder="s2", case=tag))


def build_parametric(fp, alpha, scale_x=None, convexify=True):
    """Program whose optimal value is ``F(alpha)``.

    Minimizes ``w`` subject to ``f(a, x) - alpha g(a, x) <= w`` for all ``a``
    in the objective set (``<= w g(a, scale_x)`` when ``scale_x`` is given)
    and the robust constraints.
    """
    alpha = float(alpha)
    if alpha < 0 and not fp.g_biaffine():
        raise DomainError("negative alpha is only allowed for a biaffine denominator")
    b = ProgramBuilder()
    x = b.var("x", fp.n)
    w = b.var("w", 1)
    neg_g = fp.denominator.scaled(-alpha)
    if fp.decoupled:
        if scale_x is not None:
            raise UnsupportedConfigurationError("scaled parametric rows need a shared objective set")
        w1 = b.var("w.num", 1)
        robust_le(b, [(fp.numerator, x, None)], fp.objective_set, w1, "obj.num")
        robust_le(b, [(neg_g, x, None)], fp.den_set, w - w1, "obj.den")
    else:
        terms = [(fp.numerator, x, None), (neg_g, x, None)]
        rhs = w
        if scale_x is not None:
            g_k = fp.denominator.fix_x(np.asarray(scale_x, dtype=float)).scaled(-1.0)
            terms.append((g_k, None, w))
            rhs = 0.0
        robust_le(b, terms, fp.objective_set, rhs, "obj")
    for i, (h, uset) in enumerate(fp.constraints):
        robust_le(b, [(h, x, None)], uset, 0.0, f"con{i}")
    fp.emit_linear(b, x)
    b.minimize(w)
    b.meta.update(builder="parametric", alpha=alpha, scaled=scale_x is not None)
    program = _finish(b)
    if convexify and program.pending:
        program = apply_convexification(program)
    return program


def _finish(b):
    program = b.build()
    if program.pending:
        logger.debug("program has %d pending bilinear rows", len(program.pending))
    return program


# ---------------------------------------------------------------------------
# convexification of the variance rows


def apply_convexification(program):
    """Remove the bilinear rows ``sigma_s = u_s^2 + u_s z`` of the variance
    conjugate.

    The uniform shift of ``sigma`` contributed by the two affine simplex
    residuals (their scales enter the main row with opposite sign) is
    eliminated scenario by scenario, which turns the main row into

        (u_s + z/2)^2 <= R + q + sigma_s      for every scenario s,

    with ``R >= 0`` the original row and ``q`` the bound on ``z^2/4``.  If the
    shift pattern is absent the program is returned unchanged with a warning.
    """
    if not program.pending:
        warnings.warn("no bilinear rows to convexify", RuntimeWarning, stacklevel=2)
        return program
    blocks = list(program.blocks)
    drop = set()
    for rec in program.pending:
        if rec.row < 0 or blocks[rec.row].kind != "nonneg" or blocks[rec.row].size != 1:
            warnings.warn("bilinear row is not attached to a scalar inequality", RuntimeWarning,
                          stacklevel=2)
            return program
        row = blocks[rec.row]
        As, bs = rec.sigma
        Au, bu = rec.u
        shift = _uniform_shift_columns(As, row.A[0], program.provenance)
        if not shift:
            warnings.warn("uniform-shift pattern not found; convexification skipped",
                          RuntimeWarning, stacklevel=2)
            return program
        n = program.n_vars
        e_q = np.zeros(n)
        e_q[rec.q] = 1.0
        e_z = np.zeros(n)
        e_z[rec.z] = 0.5
        for s in range(As.shape[0]):
            kA = row.A[0] + e_q + As[s]
            kb = row.b[0] + bs[s]
            xA = Au[s] + e_z
            xb = bu[s]
            # ||x||^2 <= K * 1  as  ||(2x, K - 1)|| <= K + 1
            A = np.vstack([kA, 2.0 * xA, kA])
            bb = np.array([kb + 1.0, 2.0 * xb, kb - 1.0])
            blocks.append(ConeBlock("soc", A, bb, tag=f"{row.tag}.convex[{s}]"))
        drop.add(rec.row)
    kept = tuple(blk for i, blk in enumerate(blocks) if i not in drop)
    meta = dict(program.meta, convexified=True)
    return program.replace(blocks=kept, pending=(), meta=meta)


def _uniform_shift_columns(As, row_coef, provenance):
    """Columns entering every sigma_s with one nonzero coefficient and the
    main row with the opposite one, restricted to residual scale variables."""
    scale_cols = set()
    for name, idx in provenance.items():
        if ".tau" in name and name.endswith(".u"):
            scale_cols.update(int(i) for i in idx)
    cols = []
    for j in sorted(scale_cols):
        col = As[:, j]
        if col[0] != 0 and np.allclose(col, col[0]) and np.isclose(row_coef[j], -col[0]):
            cols.append(j)
    return cols


# ---------------------------------------------------------------------------
# robust LPs and the optimistic dual


@dataclass
class RobustLP:
    """``min_z max_{a in U} c0 + ca@a + (cx + B.T@a)@z`` s.t. certain
    ``G@z <= h`` and ``E@z = e``.

    ``objective`` is an affine-in-``z`` :class:`QuadBiaffine`.  ``meta``
    records how ``z`` maps back to the fractional program (``y_idx``,
    ``t_idx`` for Charnes-Cooper).
    """

    objective: QuadBiaffine
    uset: object
    G: np.ndarray
    h: np.ndarray
    E: np.ndarray
    e: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.objective.n_x


def charnes_cooper(fp):
    """Charnes-Cooper transform of a fractional program with affine atoms,
    a certain denominator and certain constraints; ``z = (y, t)``."""
    f, g = fp.numerator, fp.denominator
    if not (isinstance(f, QuadBiaffine) and f.Q is None and isinstance(g, QuadBiaffine) and g.Q is None):
        raise WrongMethodError("Charnes-Cooper needs numerator and denominator affine in x")
    if not fp.g_certain():
        raise WrongMethodError("Charnes-Cooper needs a certain denominator")
    if fp.decoupled:
        raise WrongMethodError("Charnes-Cooper form expects a single objective set")
    n = fp.n
    gf = g.fix_a(fp.den_set.nominal)
    obj = QuadBiaffine(n + 1, f.L, 0.0, np.append(f.cx, f.c0), ca=np.zeros(f.L),
                       B=np.hstack([f.B, f.ca[:, None]]))
    G_rows, h_rows = [], []
    if fp.A_ub.shape[0]:
        G_rows.append(np.hstack([fp.A_ub, -fp.b_ub[:, None]]))
    lo = np.flatnonzero(np.isfinite(fp.lower))
    for i in lo:
        r = np.zeros(n + 1)
        r[i], r[n] = -1.0, fp.lower[i]
        G_rows.append(r[None, :])
    hi = np.flatnonzero(np.isfinite(fp.upper))
    for i in hi:
        r = np.zeros(n + 1)
        r[i], r[n] = 1.0, -fp.upper[i]
        G_rows.append(r[None, :])
    for k, (hk, uset) in enumerate(fp.constraints):
        if not (isinstance(hk, QuadBiaffine) and hk.Q is None):
            raise WrongMethodError(f"constraint {k} is not affine in x")
        if not uset.singleton and hk.depends_on_a:
            raise WrongMethodError("the optimistic dual here handles objective uncertainty only; "
                                   f"constraint {k} is uncertain")
        hf = hk.fix_a(uset.nominal)
        G_rows.append(np.append(hf.cx, hf.c0)[None, :])
    t_row = np.zeros(n + 1)
    t_row[n] = -1.0
    G_rows.append(t_row[None, :])
    G = np.vstack(G_rows)
    h = np.zeros(G.shape[0])
    E_rows = [np.append(gf.cx, gf.c0)[None, :]]
    e = [1.0]
    if fp.A_eq.shape[0]:
        E_rows.append(np.hstack([fp.A_eq, -fp.b_eq[:, None]]))
        e.extend([0.0] * fp.A_eq.shape[0])
    return RobustLP(obj, fp.objective_set, G, h, np.vstack(E_rows), np.array(e),
                    meta=dict(y_idx=np.arange(n), t_idx=n, source="charnes-cooper"))


def build_optimistic_dual(rlp):
    """Optimistic dual of a robust LP with objective uncertainty.

    ``min -c0 - ca@a + h@lam + e@mu`` s.t. ``cx + B.T@a + G.T@lam + E.T@mu = 0``,
    ``lam >= 0``, ``a`` in ``U``.  Its optimal value is minus the robust
    optimum; the multipliers of the equality block reproduce the primal
    ``z``.  Returns ``(program, recovery)``.
    """
    obj = rlp.objective
    if not isinstance(obj, QuadBiaffine) or obj.Q is not None:
        raise WrongMethodError("optimistic dual needs an objective affine in the decision")
    b = ProgramBuilder()
    a = b.var("a", obj.L) if obj.L else None
    lam = b.var("lambda", rlp.G.shape[0], nonneg=True) if rlp.G.shape[0] else None
    mu = b.var("mu", rlp.E.shape[0]) if rlp.E.shape[0] else None
    stat = Affine.constant(obj.cx)
    objective = Affine.constant(-obj.c0)
    if a is not None:
        stat = stat + obj.B.T @ a
        objective = objective - a.dot(obj.ca)
        rlp.uset.emit_membership(b, a)
    if lam is not None:
        stat = stat + rlp.G.T @ lam
        objective = objective + lam.dot(rlp.h)
    if mu is not None:
        stat = stat + rlp.E.T @ mu
        objective = objective + mu.dot(rlp.e)
    b.eq(stat, tag="stationarity")
    b.minimize(objective)
    b.meta.update(builder="optimistic-dual")
    recovery = dict(tag="stationarity", **rlp.meta)
    return b.build(), recovery


def recover_x_dual(result, recovery):
    """Primal ``x = zeta_y / zeta_t`` from the equality-block multipliers."""
    zeta = result.dual(recovery["tag"])
    t = zeta[recovery["t_idx"]]
    if t <= RECOVERY_TOL:
        raise RecoveryDegenerateError(f"scale multiplier {t:.3g} is not positive")
    return zeta[recovery["y_idx"]] / t


def recover_x_schaible(result, eps_t=EPS_T):
    """``x = y / t`` from a Schaible or Charnes-Cooper solve."""
    result = getattr(result, "result", result)
    t = float(result.value("t")[0])
    if t < eps_t:
        raise DegenerateTransformError(f"scale t = {t:.3g} is below {eps_t:.1e}")
    if t <= 10 * eps_t:
        logger.warning("scale t = %.3g is close to its lower bound", t)
    return result.value("y") / t


# ---------------------------------------------------------------------------
# worst cases by direct maximization


def robust_value(atom, uset, x, settings=None, allow_inexact=False):
    """``max_{a in U} atom(a, x)`` by a conic solve; returns ``(value, a)``.

    With ``allow_inexact`` a solve that stops at reduced accuracy still
    returns its point when that point is a member of the set (within
    1e-6); the value is always ``atom`` evaluated at the returned point.
    """
    x = np.asarray(x, dtype=float)
    if uset.singleton:
        return atom.value(x, uset.nominal), uset.nominal.copy()
    b = ProgramBuilder()
    a = b.var("a", uset.L)
    uset.emit_membership(b, a)
    r = atom.emit_hypograph(b, a, x)
    b.minimize(-r)
    res = conic.solve(b.build(), settings)
    if res.status == "dual-infeasible":
        raise AssumptionViolationError("worst case is unbounded over the set")
    if not res.ok:
        a_val = res.value("a")
        if allow_inexact and res.status == "numerical-limit" and uset.contains(a_val, tol=1e-6):
            logger.info("worst-case solve at reduced accuracy; using its point")
            return atom.value(x, a_val), a_val
        raise SolverError(f"worst-case solve ended with {res.status}", res)
    a_val = res.value("a")
    return atom.value(x, a_val), a_val


def robust_feasible(fp, x, tol=1e-6):
    """True when ``x`` satisfies the linear rows and every robust constraint."""
    if fp.linear_violation(x) > tol:
        return False
    return all(robust_value(h, u, x)[0] <= tol for h, u in fp.constraints)


__all__ = [
    "FractionalProgram", "CaseTag", "classify", "robust_le", "robustify_constraint",
    "build_s1", "build_s2", "build_parametric", "apply_convexification", "RobustLP",
    "charnes_cooper", "build_optimistic_dual", "recover_x_dual", "recover_x_schaible",
    "robust_value", "robust_feasible", "SumAtom",
]

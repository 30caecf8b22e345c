"""Expression atoms with curvature metadata and closed-form conjugates.

Two families of atoms live here.

*Residual atoms* ``tau(a)`` depend on the uncertain parameter only and
describe uncertainty sets ``{a : tau_j(a) <= 0}``.  Each carries a
:class:`ConjugateForm` for its convex conjugate ``tau*(v) = sup_a v@a - tau(a)``
and emits the conic representation of the perspective ``u * tau*(v / u)``.

*Model atoms* ``h(a, x)`` depend on the uncertain parameter ``a`` and the
decision ``x``.  They are concave in ``a`` and expose the concave conjugate
``h_*(s, x) = inf_a s@a - h(a, x)``.  Atoms that are affine in ``a`` pin the
conjugate argument to an affine function of ``x``; the scenario variance
introduces an auxiliary scalar ``z`` and a bilinear row that is removed later
by :func:`robfrac.reformulate.apply_convexification`.

All atoms are immutable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .conic import Affine
from .errors import (
    DomainError,
    InputError,
    UnsupportedAtomError,
    UnsupportedConfigurationError,
)

logger = logging.getLogger(__name__)

CONJ_TOL = 1e-9
CURVATURES = ("convex", "concave", "affine")


def _vec(v, n=None, name="vector"):
    arr = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise InputError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def _close(u, v, scale=1.0):
    return bool(np.all(np.abs(np.asarray(u) - np.asarray(v)) <= CONJ_TOL * max(1.0, scale)))


def psd_factor(Q, name="Q"):
    """Return ``F`` with ``Q = F @ F.T`` for a symmetric PSD ``Q``."""
    Q = 0.5 * (Q + Q.T)
    w, V = np.linalg.eigh(Q)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.size and w.min() < -1e-9 * scale:
        raise DomainError(f"{name} is not positive semidefinite (min eigenvalue {w.min():.3g})")
    keep = w > 1e-14 * scale
    return V[:, keep] * np.sqrt(w[keep])


@dataclass(frozen=True)
class ConjugateForm:
    """Closed-form conjugate: a domain predicate and a value on that domain.

    ``sign`` is +1 for a convex conjugate (``+inf`` off the domain) and -1 for
    a concave one (``-inf`` off the domain).
    """

    domain: Callable[[np.ndarray], bool]
    value: Callable[[np.ndarray], float]
    sign: int = 1

    def __call__(self, v):
        v = _vec(v)
        if not self.domain(v):
            return np.inf * self.sign
        return float(self.value(v))


# ---------------------------------------------------------------------------
# residual atoms: functions of the uncertain parameter only


class Residual:
    """Convex function ``tau(a)`` used to describe an uncertainty set."""

    kind = "residual"
    curvature_a = "convex"
    curvature_x = "affine"
    n_x = 0

    def __init__(self, L):
        self.L = int(L)

    def value(self, a):
        raise NotImplementedError

    def conjugate_form(self):
        raise UnsupportedAtomError(f"no conjugate registered for {self.kind}")

    def convex_conjugate(self, v):
        return self.conjugate_form()(_vec(v, self.L, "conjugate argument"))

    def emit_perspective(self, b, u, name="tau"):
        """Emit the perspective ``u * tau*(v / u)`` for a scalar ``u >= 0``.

        Returns ``(v, cost)``: the conjugate argument ``v`` (size ``L``,
        usually a fresh variable) and an expression bounding the perspective
        from above under the added rows.
        """
        raise UnsupportedAtomError(f"{self.kind} has no conic perspective emitter")

    def emit_membership(self, b, a):
        """Add rows enforcing ``tau(a) <= 0`` for an affine expression ``a``."""
        raise UnsupportedAtomError(f"{self.kind} has no conic membership emitter")

    def sample_a(self, rng):
        return rng.uniform(-2.0, 2.0, self.L)

    def __repr__(self):
        return f"{type(self).__name__}(L={self.L})"


class AffineResidual(Residual):
    """``tau(a) = d @ a + e``; conjugate ``-e`` on ``{v = d}``."""

    kind = "affine"
    curvature_a = "affine"

    def __init__(self, d, e):
        d = _vec(d)
        super().__init__(d.shape[0])
        self.d = d
        self.e = float(e)

    def value(self, a):
        return float(self.d @ a + self.e)

    def conjugate_form(self):
        d, e = self.d, self.e
        return ConjugateForm(lambda v: _close(v, d, np.max(np.abs(d), initial=1.0)), lambda v: -e)

    def emit_perspective(self, b, u, name="tau"):
        # the domain {v = u d} is substituted directly
        return u * self.d, -self.e * u

    def emit_membership(self, b, a):
        b.nonneg(-(a.dot(self.d) + self.e), tag="member.affine")


class MaxNeg(Residual):
    """``tau(a) = max_s(-a_s)``, i.e. ``a >= 0`` as a single residual.

    The conjugate is 0 on ``{v <= 0, sum(v) = -1}`` and ``+inf`` elsewhere.
    """

    kind = "max-neg"

    def value(self, a):
        return float(np.max(-np.asarray(a, dtype=float)))

    def conjugate_form(self):
        return ConjugateForm(
            lambda v: bool(np.all(v <= CONJ_TOL) and abs(v.sum() + 1.0) <= CONJ_TOL * max(1, v.size)),
            lambda v: 0.0)

    def emit_perspective(self, b, u, name="tau"):
        v = b.var(name + ".v", self.L)
        b.nonneg(-v, tag="tau.maxneg")
        b.eq(v.sum() + u, tag="tau.maxneg.sum")
        return v, Affine.constant(0.0)

    def emit_membership(self, b, a):
        b.nonneg(a, tag="member.nonneg")


class ChiSquareDivergence(Residual):
    """Modified chi-square ball ``sum((a - p)^2 / p) - rho``.

    Conjugate: ``rho + sum(p * (v^2 / 4 + v))``.  The perspective term
    ``p_s * v_s^2 / (4u)`` is written with ``y_s >= v_s^2 / (4u)``, which is the
    rotated cone ``v_s^2 <= y_s * 4u``.
    """

    kind = "convex-quadratic-divergence"

    def __init__(self, p_hat, rho):
        p_hat = _vec(p_hat)
        if np.any(p_hat <= 0):
            raise InputError("the modified chi-square divergence needs p_hat > 0")
        if rho < 0:
            raise InputError("rho must be nonnegative")
        super().__init__(p_hat.shape[0])
        self.p_hat = p_hat
        self.rho = float(rho)

    def value(self, a):
        a = np.asarray(a, dtype=float)
        return float(np.sum((a - self.p_hat) ** 2 / self.p_hat) - self.rho)

    def conjugate_form(self):
        p, rho = self.p_hat, self.rho
        return ConjugateForm(lambda v: bool(np.all(np.isfinite(v))),
                             lambda v: rho + float(np.sum(p * (v ** 2 / 4.0 + v))))

    def emit_perspective(self, b, u, name="tau"):
        v = b.var(name + ".v", self.L)
        y = perspective_square(b, v, u, name=name + ".y")
        return v, self.rho * u + y.dot(self.p_hat) + v.dot(self.p_hat)

    def emit_membership(self, b, a):
        b.soc(np.sqrt(self.rho), (a - self.p_hat) * (1.0 / np.sqrt(self.p_hat)), tag="member.chi2")

    def sample_a(self, rng):
        return self.p_hat + rng.normal(scale=0.5, size=self.L) * np.sqrt(self.p_hat)


def perspective_square(b, v, t, name="sq"):
    """Return ``y`` with rows ``y_s >= v_s^2 / (4t)`` for each entry of ``v``.

    Each row is the cone ``||(2 v_s, y_s - 4t)||_2 <= y_s + 4t``.
    """
    y = b.var(name, v.size)
    for s in range(v.size):
        b.rsoc(v[s], y[s], 4.0 * t, tag=name)
    return y


class HellingerDivergence(Residual):
    """Hellinger ball ``sum((sqrt(p_s) - sqrt(a_s))^2) - rho`` on ``a >= 0``.

    Conjugate: ``rho + sum_{p_s > 0} p_s v_s / (1 - v_s)`` for ``v_s < 1``
    (``v_s <= 1`` where ``p_s = 0``).  In perspective form the term
    ``u * v_s / (u - v_s)`` equals ``y_s - u`` with the rotated cone
    ``u^2 <= y_s (u - v_s)``.
    """

    kind = "hellinger-divergence"

    def __init__(self, p_hat, rho):
        p_hat = _vec(p_hat)
        if np.any(p_hat < 0):
            raise InputError("p_hat must be nonnegative")
        if rho < 0:
            raise InputError("rho must be nonnegative")
        super().__init__(p_hat.shape[0])
        self.p_hat = p_hat
        self.rho = float(rho)

    def value(self, a):
        a = np.asarray(a, dtype=float)
        if np.any(a < 0):
            return np.inf
        return float(np.sum((np.sqrt(self.p_hat) - np.sqrt(a)) ** 2) - self.rho)

    def conjugate_form(self):
        p, rho = self.p_hat, self.rho
        pos = p > 0

        def domain(v):
            return bool(np.all(v[pos] < 1.0) and np.all(v[~pos] <= 1.0 + CONJ_TOL))

        def value(v):
            return rho + float(np.sum(p[pos] * v[pos] / (1.0 - v[pos])))

        return ConjugateForm(domain, value)

    def emit_perspective(self, b, u, name="tau"):
        v = b.var(name + ".v", self.L)
        cost = self.rho * u
        pos = np.flatnonzero(self.p_hat > 0)
        zero = np.flatnonzero(self.p_hat <= 0)
        if pos.size:
            y = b.var(name + ".y", pos.size)
            for k, s in enumerate(pos):
                b.rsoc(u, y[k], u - v[s], tag="tau.hellinger")
            cost = cost + y.dot(self.p_hat[pos]) - float(self.p_hat[pos].sum()) * u
        if zero.size:
            b.nonneg(u - v[zero], tag="tau.hellinger.zero")
        return v, cost

    def emit_membership(self, b, a):
        w = b.var("member.hellinger.w", self.L)
        for s in range(self.L):
            b.rsoc(w[s], a[s], 1.0, tag="member.hellinger")
        # sum(p - 2 sqrt(p) w + a) <= rho with w <= sqrt(a)
        b.nonneg(self.rho - float(self.p_hat.sum()) + w.dot(2.0 * np.sqrt(self.p_hat)) - a.sum(),
                 tag="member.hellinger.ball")

    def sample_a(self, rng):
        return rng.uniform(0.0, 2.0, self.L)


class NormBallResidual(Residual):
    """``||(a - center) / scale||_p - radius`` for ``p`` in {1, 2, inf}.

    Coordinates with zero scale are fixed at the center (the residual is
    ``+inf`` off it).  Conjugate: ``v @ center + radius`` on
    ``{||scale * v||_q <= 1}`` with ``q`` the dual exponent.
    """

    kind = "norm-ball-residual"

    def __init__(self, center, scale, radius, p):
        center = _vec(center)
        scale = _vec(scale, center.shape[0], "scale")
        if np.any(scale < 0):
            raise InputError("scales must be nonnegative")
        if radius < 0:
            raise InputError("radius must be nonnegative")
        if p not in (1, 2, np.inf):
            raise InputError("p must be 1, 2 or inf")
        super().__init__(center.shape[0])
        self.center, self.scale, self.radius, self.p = center, scale, float(radius), p

    @property
    def q(self):
        return {1: np.inf, 2: 2, np.inf: 1}[self.p]

    def value(self, a):
        a = np.asarray(a, dtype=float)
        d = a - self.center
        fixed = self.scale == 0
        if np.any(np.abs(d[fixed]) > 0):
            return np.inf
        z = d[~fixed] / self.scale[~fixed]
        return float(np.linalg.norm(z, self.p) if z.size else 0.0) - self.radius

    def conjugate_form(self):
        c, D, r, q = self.center, self.scale, self.radius, self.q
        return ConjugateForm(lambda v: np.linalg.norm(D * v, q) <= 1.0 + CONJ_TOL,
                             lambda v: float(v @ c) + r)

    def _norm_le(self, b, w, bound, tag):
        """Rows for ``||w||_q <= bound``."""
        if self.q == 2:
            b.soc(bound, w, tag=tag)
        elif self.q == np.inf:
            b.nonneg(bound - w, tag=tag)
            b.nonneg(bound + w, tag=tag)
        else:
            s = b.var(tag + ".abs", w.size)
            b.nonneg(s - w, tag=tag)
            b.nonneg(s + w, tag=tag)
            b.nonneg(bound - s.sum(), tag=tag)

    def emit_perspective(self, b, u, name="tau"):
        v = b.var(name + ".v", self.L)
        free = self.scale > 0
        if np.any(free):
            self._norm_le(b, v[np.flatnonzero(free)] * self.scale[free], u, name + ".norm")
        return v, v.dot(self.center) + self.radius * u

    def emit_membership(self, b, a):
        fixed = np.flatnonzero(self.scale == 0)
        if fixed.size:
            b.eq(a[fixed] - self.center[fixed], tag="member.norm.fixed")
        free = np.flatnonzero(self.scale > 0)
        if free.size:
            z = (a[free] - self.center[free]) * (1.0 / self.scale[free])
            dual = {1: np.inf, 2: 2, np.inf: 1}[self.q]  # the primal exponent
            if dual == 2:
                b.soc(self.radius, z, tag="member.norm")
            elif dual == np.inf:
                b.nonneg(self.radius - z, tag="member.norm")
                b.nonneg(self.radius + z, tag="member.norm")
            else:
                s = b.var("member.norm.abs", free.size)
                b.nonneg(s - z, tag="member.norm")
                b.nonneg(s + z, tag="member.norm")
                b.nonneg(self.radius - s.sum(), tag="member.norm")

    def sample_a(self, rng):
        return self.center + self.scale * rng.uniform(-1.5, 1.5, self.L)


class Lifted(Residual):
    """Embed a residual on coordinates ``idx`` of a longer vector of size ``L``.

    Used for product sets; the conjugate forces ``v`` to vanish off ``idx``.
    """

    def __init__(self, inner, idx, L):
        super().__init__(L)
        self.inner = inner
        self.idx = np.asarray(idx, dtype=int)
        if self.idx.shape[0] != inner.L:
            raise InputError("index length does not match the embedded residual")
        self.kind = inner.kind
        self.curvature_a = inner.curvature_a
        self._rest = np.setdiff1d(np.arange(L), self.idx)

    def value(self, a):
        return self.inner.value(np.asarray(a, dtype=float)[self.idx])

    def conjugate_form(self):
        inner = self.inner.conjugate_form()
        idx, rest = self.idx, self._rest
        return ConjugateForm(lambda v: bool(np.all(np.abs(v[rest]) <= CONJ_TOL)) and inner.domain(v[idx]),
                             lambda v: inner.value(v[idx]))

    def emit_perspective(self, b, u, name="tau"):
        v_in, cost = self.inner.emit_perspective(b, u, name)
        P = np.zeros((self.L, self.inner.L))
        P[self.idx, np.arange(self.inner.L)] = 1.0
        return P @ Affine.lift(v_in), cost

    def emit_membership(self, b, a):
        self.inner.emit_membership(b, a[self.idx])

    def sample_a(self, rng):
        a = rng.uniform(-2.0, 2.0, self.L)
        a[self.idx] = self.inner.sample_a(rng)
        return a


class CustomResidual(Residual):
    """User-registered residual with a closed-form conjugate.

    Registration runs a Fenchel-inequality check on a grid of points and
    sampled conjugate arguments and rejects inconsistent forms.  Conic
    emitters are optional callables with the signatures of
    :meth:`Residual.emit_perspective` and :meth:`Residual.emit_membership`.
    """

    kind = "custom-closed-form"

    def __init__(self, L, value, conjugate, perspective=None, membership=None,
                 check_points=None, check_args=None, tol=1e-7):
        super().__init__(L)
        self._value = value
        self._form = conjugate
        self._perspective = perspective
        self._membership = membership
        self._register_check(check_points, check_args, tol)

    def _register_check(self, points, args, tol):
        rng = np.random.default_rng(0)
        if points is None:
            axis = np.linspace(-3.0, 3.0, 13 if self.L <= 2 else 7)
            mesh = np.meshgrid(*([axis] * self.L), indexing="ij")
            points = np.stack([m.ravel() for m in mesh], axis=1)
        if args is None:
            args = rng.uniform(-2.0, 2.0, (50, self.L))
        points, args = np.atleast_2d(points), np.atleast_2d(args)
        vals = np.array([self._value(a) for a in points])
        for v in args:
            cv = self._form(v)
            if not np.isfinite(cv):
                continue
            gap = points @ v - vals - cv
            finite = np.isfinite(gap)
            if np.any(gap[finite] > tol * max(1.0, abs(cv))):
                raise UnsupportedAtomError(
                    f"custom conjugate violates the Fenchel inequality at v={v} by "
                    f"{gap[finite].max():.3g}")

    def value(self, a):
        return float(self._value(np.asarray(a, dtype=float)))

    def conjugate_form(self):
        return self._form

    def emit_perspective(self, b, u, name="tau"):
        if self._perspective is None:
            return super().emit_perspective(b, u, name)
        return self._perspective(b, u, name)

    def emit_membership(self, b, a):
        if self._membership is None:
            return super().emit_membership(b, a)
        return self._membership(b, a)


# ---------------------------------------------------------------------------
# model atoms: functions of the uncertain parameter and the decision


class ModelAtom:
    """Function ``h(a, x)`` concave in ``a`` (as required for robust rows)."""

    kind = "model"
    affine_in_a = False

    def __init__(self, L, n_x):
        self.L = int(L)
        self.n_x = int(n_x)

    def value(self, x, a):
        raise NotImplementedError

    def concave_conjugate(self, s, x):
        raise UnsupportedAtomError(f"no concave conjugate registered for {self.kind}")

    def convex_conjugate(self, v, x):
        raise UnsupportedAtomError(f"{self.kind} is not convex in the uncertain parameter")

    def fix_a(self, a):
        """The certain atom obtained by fixing ``a``."""
        raise NotImplementedError

    def fix_x(self, x):
        """The atom of ``a`` alone obtained by fixing ``x`` (``n_x == 0``)."""
        raise NotImplementedError

    def scaled(self, c):
        raise NotImplementedError

    def emit_neg_conj(self, b, sigma, x, t=None):
        raise UnsupportedAtomError(f"{self.kind} has no conjugate emitter")

    def emit_hypograph(self, b, a, x):
        """Return an expression ``r`` with rows ``r <= h(a, x)`` for affine
        ``a`` and numeric ``x``."""
        raise UnsupportedAtomError(f"{self.kind} has no hypograph emitter")

    def sample_x(self, rng):
        return rng.uniform(-2.0, 2.0, self.n_x)

    def sample_a(self, rng):
        return rng.uniform(-2.0, 2.0, self.L)

    def _check(self, x, a):
        x = _vec(x, self.n_x, "x") if self.n_x else np.zeros(0)
        a = _vec(a, self.L, "a") if self.L else np.zeros(0)
        return x, a


class QuadBiaffine(ModelAtom):
    """``h(a, x) = x@Q@x + c0 + cx@x + a@(ca + B@x)``.

    Affine in ``a`` for every ``x``; convex in ``x`` when ``Q`` is PSD and
    concave when it is NSD.  ``kind`` is ``"affine"`` when ``Q == 0`` and
    ``"quadratic"`` otherwise; the scenario mean ``sum_s p_s u_s`` with
    ``u = M@x + u0`` is the special case ``ca = u0, B = M``.
    """

    affine_in_a = True

    def __init__(self, n_x=0, L=0, c0=0.0, cx=None, ca=None, B=None, Q=None, kind=None):
        super().__init__(L, n_x)
        self.c0 = float(c0)
        self.cx = np.zeros(n_x) if cx is None else _vec(cx, n_x, "cx")
        self.ca = np.zeros(L) if ca is None else _vec(ca, L, "ca")
        self.B = np.zeros((L, n_x)) if B is None else np.asarray(B, dtype=float).reshape(L, n_x)
        self.Q = None
        if Q is not None:
            Q = np.asarray(Q, dtype=float).reshape(n_x, n_x)
            if np.any(Q != 0):
                self.Q = 0.5 * (Q + Q.T)
        if kind is None:
            kind = "affine" if self.Q is None else "quadratic"
        self.kind = kind
        self._factor = None

    @classmethod
    def scenario_mean(cls, M, u0=None):
        """``g(p, x) = sum_s p_s u_s`` with ``u = M@x + u0``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        S, n = M.shape
        return cls(n_x=n, L=S, ca=np.zeros(S) if u0 is None else u0, B=M, kind="scenario-mean")

    # curvature ------------------------------------------------------------
    @property
    def curvature_a(self):
        return "affine"

    @property
    def curvature_x(self):
        if self.Q is None:
            return "affine"
        w = np.linalg.eigvalsh(self.Q)
        tol = 1e-10 * max(1.0, np.abs(w).max())
        if w.min() >= -tol:
            return "convex"
        if w.max() <= tol:
            return "concave"
        return "indefinite"

    @property
    def depends_on_x(self):
        return self.Q is not None or np.any(self.cx != 0) or np.any(self.B != 0)

    @property
    def depends_on_a(self):
        return np.any(self.ca != 0) or np.any(self.B != 0)

    def quad(self, x):
        return 0.0 if self.Q is None else float(x @ self.Q @ x)

    def value(self, x, a):
        x, a = self._check(x, a)
        return self.quad(x) + self.c0 + float(self.cx @ x) + float(a @ (self.ca + self.B @ x))

    def slope_a(self, x):
        """Gradient in ``a`` at ``x`` (``ca + B@x``)."""
        return self.ca + self.B @ _vec(x, self.n_x, "x") if self.n_x else self.ca.copy()

    def rest(self, x):
        """The ``a``-free part ``x@Q@x + c0 + cx@x``."""
        x = _vec(x, self.n_x, "x") if self.n_x else np.zeros(0)
        return self.quad(x) + self.c0 + float(self.cx @ x)

    def concave_conjugate(self, s, x):
        s = _vec(s, self.L, "s") if self.L else np.zeros(0)
        slope = self.slope_a(x)
        if not _close(s, slope, np.max(np.abs(slope), initial=1.0)):
            return -np.inf
        return -self.rest(x)

    def convex_conjugate(self, v, x):
        v = _vec(v, self.L, "v") if self.L else np.zeros(0)
        slope = self.slope_a(x)
        if not _close(v, slope, np.max(np.abs(slope), initial=1.0)):
            return np.inf
        return -self.rest(x)

    def scaled(self, c):
        c = float(c)
        return QuadBiaffine(self.n_x, self.L, c * self.c0, c * self.cx, c * self.ca, c * self.B,
                            None if self.Q is None else c * self.Q, kind=self.kind)

    def fix_a(self, a):
        a = _vec(a, self.L, "a") if self.L else np.zeros(0)
        return QuadBiaffine(self.n_x, 0, self.c0 + float(a @ self.ca), self.cx + self.B.T @ a,
                            Q=self.Q, kind=self.kind)

    def fix_x(self, x):
        x = _vec(x, self.n_x, "x") if self.n_x else np.zeros(0)
        return QuadBiaffine(0, self.L, self.rest(x), ca=self.slope_a(x), kind="affine")

    # conic emitters ----------------------------------------------------------
    def pinned(self, b, x, t=None):
        """Perspective data for ``t * h(a, x / t)`` (``t = 1`` when None).

        Returns ``(sigma, bound)``: the concave conjugate of the perspective is
        finite only at ``sigma = ca*t + B@x``, where its negative is bounded by
        ``bound = c0*t + cx@x + x@Q@x / t``.  ``t`` may take any sign when
        ``Q == 0``.
        """
        one = Affine.constant(1.0) if t is None else Affine.lift(t)
        sigma = self.ca * one if self.L else None
        bound = self.c0 * one
        if self.n_x:
            if self.L:
                sigma = sigma + self.B @ x
            bound = bound + x.dot(self.cx)
        if self.Q is not None:
            if self._factor is None:
                self._factor = psd_factor(self.Q)
            r = b.var("quad.epi", 1)
            b.rsoc(self._factor.T @ x, r, one, tag="quad.epi")
            bound = bound + r
        return sigma, bound

    def emit_hypograph(self, b, a, x):
        x = _vec(x, self.n_x, "x") if self.n_x else np.zeros(0)
        return a.dot(self.slope_a(x)) + self.rest(x) if self.L else Affine.constant(self.rest(x))

    def sample_x(self, rng):
        return rng.uniform(-2.0, 2.0, self.n_x)

    def __repr__(self):
        return f"QuadBiaffine(kind={self.kind}, n_x={self.n_x}, L={self.L})"


class ScenarioVariance(ModelAtom):
    """``f(p, x) = sum_s p_s u_s^2 - (sum_s p_s u_s)^2`` with ``u = M@x + u0``.

    Concave in ``p``; convex in ``x`` whenever ``p`` is a probability vector.
    Concave conjugate: ``f_*(v, x) = sup_z {-z^2/4 : u_s^2 + u_s z = v_s}``.
    """

    kind = "scenario-variance"
    affine_in_a = False
    curvature_a = "concave"
    curvature_x = "convex"

    def __init__(self, M, u0=None):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        S, n = M.shape
        super().__init__(S, n)
        self.M = M
        self.u0 = np.zeros(S) if u0 is None else _vec(u0, S, "u0")

    def u(self, x):
        return self.M @ x + self.u0 if self.n_x else self.u0.copy()

    def value(self, x, a):
        x, p = self._check(x, a)
        u = self.u(x)
        return float(p @ u ** 2 - (p @ u) ** 2)

    def solve_z(self, s, x, tol=CONJ_TOL):
        """The ``z`` with ``u_s^2 + u_s z = s_s`` for all ``s``, or None."""
        u = self.u(x)
        s = _vec(s, self.L, "s")
        scale = max(1.0, float(np.max(np.abs(u)) ** 2), float(np.max(np.abs(s))))
        nz = np.abs(u) > tol
        if np.any(np.abs(s[~nz] - u[~nz] ** 2) > tol * scale):
            return None
        if not np.any(nz):
            return 0.0
        zs = (s[nz] - u[nz] ** 2) / u[nz]
        z = float(np.mean(zs))
        if np.any(np.abs(u[nz] ** 2 + u[nz] * z - s[nz]) > tol * scale):
            return None
        return z

    def concave_conjugate(self, s, x):
        z = self.solve_z(s, x)
        return -np.inf if z is None else -z * z / 4.0

    def fix_a(self, a):
        p = _vec(a, self.L, "p")
        C = np.diag(p) - np.outer(p, p)
        Q = self.M.T @ C @ self.M
        return QuadBiaffine(self.n_x, 0, c0=float(self.u0 @ C @ self.u0),
                            cx=2.0 * self.M.T @ C @ self.u0, Q=Q, kind="quadratic")

    def fix_x(self, x):
        return ScenarioVariance(np.zeros((self.L, 0)), self.u(_vec(x, self.n_x, "x")))

    def scaled(self, c):
        if float(c) != 1.0:
            raise UnsupportedConfigurationError("scaled scenario variance is not supported")
        return self

    def emit_neg_conj(self, b, sigma, x, t=None):
        """Bound ``-f_*(sigma, x)`` by ``q >= z^2/4`` and defer the bilinear
        rows ``sigma_s = u_s^2 + u_s z`` to the convexification pass."""
        if t is not None:
            raise UnsupportedConfigurationError(
                "scenario variance cannot appear under a perspective scale")
        z = b.var("variance.z", 1)
        q = b.var("variance.q", 1)
        b.rsoc(z, q, 4.0, tag="variance.q")
        u = self.M @ x + self.u0 if self.n_x else Affine.constant(self.u0)
        b.defer_bilinear(sigma, u, z, q)
        return q

    def emit_hypograph(self, b, a, x):
        u = self.u(_vec(x, self.n_x, "x") if self.n_x else np.zeros(0))
        q = b.var("variance.hyp", 1)
        b.rsoc(a.dot(u), q, 1.0, tag="variance.hyp")
        return a.dot(u ** 2) - q

    def sample_a(self, rng):
        return rng.dirichlet(np.ones(self.L))

    def __repr__(self):
        return f"ScenarioVariance(S={self.L}, n_x={self.n_x})"


class SumAtom(ModelAtom):
    """Sum of model atoms sharing ``(a, x)``; conjugated with the sum rule."""

    kind = "sum"

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise InputError("empty sum")
        L, n = parts[0].L, parts[0].n_x
        if any(p.L != L or p.n_x != n for p in parts):
            raise InputError("summands must share dimensions")
        super().__init__(L, n)
        self.parts = parts

    @property
    def affine_in_a(self):
        return all(p.affine_in_a for p in self.parts)

    @property
    def curvature_x(self):
        kinds = {p.curvature_x for p in self.parts} - {"affine"}
        return kinds.pop() if len(kinds) == 1 else ("affine" if not kinds else "indefinite")

    @property
    def curvature_a(self):
        kinds = {p.curvature_a for p in self.parts} - {"affine"}
        return kinds.pop() if len(kinds) == 1 else ("affine" if not kinds else "indefinite")

    def value(self, x, a):
        return sum(p.value(x, a) for p in self.parts)

    def concave_conjugate(self, s, x):
        free = [p for p in self.parts if not p.affine_in_a]
        if len(free) > 1:
            raise UnsupportedAtomError("numeric sum conjugate needs at most one non-affine summand")
        s = _vec(s, self.L, "s")
        total = 0.0
        for p in self.parts:
            if p.affine_in_a:
                s = s - p.slope_a(x)
                total -= p.rest(x)
        if free:
            return total + free[0].concave_conjugate(s, x)
        return total if _close(s, 0.0) else -np.inf

    def fix_a(self, a):
        return SumAtom([p.fix_a(a) for p in self.parts])

    def fix_x(self, x):
        return SumAtom([p.fix_x(x) for p in self.parts])

    def scaled(self, c):
        return SumAtom([p.scaled(c) for p in self.parts])

    def emit_hypograph(self, b, a, x):
        out = Affine.constant(0.0)
        for p in self.parts:
            out = out + p.emit_hypograph(b, a, x)
        return out

    def sample_a(self, rng):
        return self.parts[0].sample_a(rng)

    def flatten(self):
        out = []
        for p in self.parts:
            out.extend(p.flatten() if isinstance(p, SumAtom) else [p])
        return out


def flatten(atom):
    return atom.flatten() if isinstance(atom, SumAtom) else [atom]


# ---------------------------------------------------------------------------
# functional interface


def evaluate(atom, x, a):
    """Exact value of ``atom`` at ``(x, a)`` (``x`` ignored for residuals)."""
    if isinstance(atom, Residual):
        a = _vec(a, atom.L, "a")
        return atom.value(a)
    return atom.value(x, a)


def convex_conjugate(atom, v, x=None):
    """``sup_a v@a - atom(a[, x])``; ``+inf`` off the conjugate domain."""
    if isinstance(atom, Residual):
        return atom.convex_conjugate(v)
    return atom.convex_conjugate(v, x)


def concave_conjugate(atom, s, x=None):
    """``inf_a s@a - atom(a, x)``; ``-inf`` off the conjugate domain."""
    if isinstance(atom, Residual):
        raise UnsupportedAtomError("residuals are convex; use convex_conjugate")
    return atom.concave_conjugate(s, x if x is not None else np.zeros(atom.n_x))


def perspective_conjugate(atom, s, y, t):
    """``t * h_*(s / t, y / t)`` for ``t > 0``."""
    t = float(t)
    if not t > 0:
        raise DomainError("perspective scale must be positive")
    s = _vec(s)
    y = _vec(y) if atom.n_x else np.zeros(0)
    return t * concave_conjugate(atom, s / t, y / t)


@dataclass
class CurvatureReport:
    atom: str
    declared_x: str
    declared_a: str
    worst_x: float = 0.0
    worst_a: float = 0.0
    passed: bool = True
    notes: list = field(default_factory=list)


def _midpoint_gap(fun, z1, z2, curvature):
    """Positive when the midpoint test for ``curvature`` is violated."""
    f1, f2, fm = fun(z1), fun(z2), fun(0.5 * (z1 + z2))
    if not (np.isfinite(f1) and np.isfinite(f2)):
        return 0.0, 1.0
    scale = max(1.0, abs(f1), abs(f2))
    if curvature == "convex":
        return fm - 0.5 * (f1 + f2), scale
    if curvature == "concave":
        return 0.5 * (f1 + f2) - fm, scale
    return abs(fm - 0.5 * (f1 + f2)), scale


def certify_curvature(atom, n_pairs=1000, tol=1e-9, seed=0):
    """Randomized midpoint test of the declared curvature in ``x`` and ``a``."""
    rng = np.random.default_rng(seed)
    cx = getattr(atom, "curvature_x", "affine")
    ca = atom.curvature_a
    rep = CurvatureReport(type(atom).__name__, cx, ca)
    if cx not in CURVATURES or ca not in CURVATURES:
        rep.passed = False
        rep.notes.append("undeclared or indefinite curvature")
        return rep
    is_res = isinstance(atom, Residual)
    for _ in range(n_pairs):
        a = atom.sample_a(rng)
        if not is_res and atom.n_x:
            x1, x2 = atom.sample_x(rng), atom.sample_x(rng)
            gap, scale = _midpoint_gap(lambda z: atom.value(z, a), x1, x2, cx)
            rep.worst_x = max(rep.worst_x, gap / scale)
        a1, a2 = atom.sample_a(rng), atom.sample_a(rng)
        if is_res:
            gap, scale = _midpoint_gap(atom.value, a1, a2, ca)
        else:
            x = atom.sample_x(rng)
            gap, scale = _midpoint_gap(lambda z: atom.value(x, z), a1, a2, ca)
        rep.worst_a = max(rep.worst_a, gap / scale)
    rep.passed = rep.worst_x <= tol and rep.worst_a <= tol
    return rep

"""Convex compact uncertainty sets ``{a : tau_j(a) <= 0 for all j}``."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .errors import InputError, SetInvariantError
from .expr import (
    AffineResidual,
    ChiSquareDivergence,
    HellingerDivergence,
    Lifted,
    MaxNeg,
    NormBallResidual,
)

MEMBER_TOL = 1e-9
SIMPLEX_TOL = 1e-9
MAX_VERTEX_DIM = 20
MAX_VERTICES = 1_000_000


@dataclass(frozen=True)
class UncertaintySet:
    """Set described by residual atoms ``taus`` around a nominal point.

    Attributes
    ----------
    taus : tuple of Residual
        Constraint residuals; a point is a member when all are ``<= 0``.
    nominal : ndarray
        A member used for nominal solves and as the sampling anchor.
    kind : str
        Constructor tag (``chi2``, ``hellinger``, ``budget``, ``box``,
        ``ball``, ``singleton``, ``product``).
    bound : float
        Radius of an L-infinity ball around the origin containing the set.
    singleton : bool
        True when the set is exactly ``{nominal}``.
    """

    taus: tuple
    nominal: np.ndarray
    kind: str
    bound: float
    singleton: bool = False
    params: dict = field(default_factory=dict)
    parts: tuple = ()

    @property
    def L(self):
        return self.nominal.shape[0]

    def residuals(self, a):
        a = np.asarray(a, dtype=float).reshape(-1)
        if a.shape[0] != self.L:
            raise InputError(f"point has length {a.shape[0]}, expected {self.L}")
        return np.array([tau.value(a) for tau in self.taus])

    def contains(self, a, tol=MEMBER_TOL):
        """Membership test: every residual at most ``tol``."""
        return bool(np.all(self.residuals(a) <= tol))

    # sampling ------------------------------------------------------------
    def _direction(self, rng):
        if self.kind in ("chi2", "hellinger"):
            return rng.dirichlet(np.ones(self.L)) - self.nominal
        return rng.normal(size=self.L)

    def _ray_length(self, d):
        lo, hi = 0.0, 1.0
        for _ in range(60):
            if not self.contains(self.nominal + hi * d):
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise SetInvariantError("set appears unbounded along a sampled direction")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.contains(self.nominal + mid * d):
                lo = mid
            else:
                hi = mid
        return lo

    def sample(self, n, rng=None, boundary=False):
        """Draw ``n`` members along random rays from the nominal point.

        With ``boundary=True`` points are placed on the relative boundary.
        """
        rng = np.random.default_rng(rng)
        if self.singleton:
            return np.tile(self.nominal, (n, 1))
        if self.parts:
            return np.hstack([p.sample(n, rng, boundary) for p in self.parts])
        out = np.empty((n, self.L))
        for k in range(n):
            d = self._direction(rng)
            lam = self._ray_length(d)
            out[k] = self.nominal + (lam if boundary else lam * rng.uniform()) * d
        return out

    # polytopes -----------------------------------------------------------
    def vertices(self):
        """Vertices for boxes, budget sets, singletons and their products."""
        if self.singleton:
            return self.nominal[None, :].copy()
        if self.parts:
            if any(p.vertices() is None for p in self.parts):
                return None
            verts = [p.vertices() for p in self.parts]
            if math.prod(v.shape[0] for v in verts) > MAX_VERTICES:
                raise SetInvariantError("too many vertices to enumerate")
            return np.array([np.concatenate(c) for c in itertools.product(*verts)])
        return None

    # conic ---------------------------------------------------------------
    def emit_membership(self, b, a):
        if self.singleton:
            # a point has no interior; an equality keeps interior-point solves well posed
            b.eq(a - self.nominal, tag="member.point")
            return
        for tau in self.taus:
            tau.emit_membership(b, a)


@dataclass(frozen=True)
class BudgetSet(UncertaintySet):
    """Interval data ``a = center + halfwidth * zeta`` with
    ``||zeta||_inf <= 1`` and ``||zeta||_1 <= gamma``."""

    center: np.ndarray = None
    halfwidth: np.ndarray = None
    gamma: float = 0.0

    def zeta(self, a):
        """Perturbation vector of ``a`` (zero on fixed coordinates)."""
        a = np.asarray(a, dtype=float)
        z = np.zeros(self.L)
        free = self.halfwidth > 0
        z[free] = (a[free] - self.center[free]) / self.halfwidth[free]
        return z

    def vertices(self):
        free = np.flatnonzero(self.halfwidth > 0)
        m = free.size
        if m == 0 or self.gamma == 0:
            return self.center[None, :].copy()
        if m > MAX_VERTEX_DIM:
            raise SetInvariantError(f"vertex enumeration limited to {MAX_VERTEX_DIM} coordinates")
        k = min(int(math.floor(self.gamma + 1e-12)), m)
        frac = self.gamma - k if k < m else 0.0
        if frac < 1e-12:
            frac = 0.0
        count = math.comb(m, k) * 2 ** k * ((m - k) * 2 if frac else 1)
        if count > MAX_VERTICES:
            raise SetInvariantError("too many vertices to enumerate")
        zetas = []
        for full in itertools.combinations(range(m), k):
            rest = [j for j in range(m) if j not in full]
            for signs in itertools.product((-1.0, 1.0), repeat=k):
                z = np.zeros(m)
                z[list(full)] = signs
                if frac:
                    for j in rest:
                        for sg in (-1.0, 1.0):
                            zz = z.copy()
                            zz[j] = sg * frac
                            zetas.append(zz)
                else:
                    zetas.append(z)
        Z = np.array(zetas)
        out = np.tile(self.center, (Z.shape[0], 1))
        out[:, free] += Z * self.halfwidth[free]
        return out


def _check_simplex(p_hat):
    p_hat = np.asarray(p_hat, dtype=float).reshape(-1)
    if p_hat.size == 0 or np.any(p_hat < -SIMPLEX_TOL) or abs(p_hat.sum() - 1.0) > SIMPLEX_TOL:
        raise InputError("p_hat must lie on the probability simplex")
    return np.clip(p_hat, 0.0, None)


def _simplex_taus(S):
    ones = np.ones(S)
    return (MaxNeg(S), AffineResidual(ones, -1.0), AffineResidual(-ones, 1.0))


def make_chi2_simplex(p_hat, rho):
    """``{p >= 0, sum(p) = 1, sum((p - p_hat)^2 / p_hat) <= rho}``.

    Residuals, in order: ``max(-p)``, ``sum(p) - 1``, ``1 - sum(p)`` and the
    divergence ball.
    """
    p_hat = _check_simplex(p_hat)
    if rho < 0:
        raise InputError("rho must be nonnegative")
    taus = _simplex_taus(p_hat.size) + (ChiSquareDivergence(p_hat, rho),)
    return UncertaintySet(taus, p_hat, "chi2", 1.0, singleton=(rho == 0),
                          params=dict(p_hat=p_hat, rho=float(rho)))


def make_hellinger_simplex(p_hat, rho):
    """``{p >= 0, sum(p) = 1, sum((sqrt(p_hat) - sqrt(p))^2) <= rho}``."""
    p_hat = _check_simplex(p_hat)
    if rho < 0:
        raise InputError("rho must be nonnegative")
    taus = _simplex_taus(p_hat.size) + (HellingerDivergence(p_hat, rho),)
    return UncertaintySet(taus, p_hat, "hellinger", 1.0, singleton=(rho == 0),
                          params=dict(p_hat=p_hat, rho=float(rho)))


def make_budget_set(center, halfwidth, gamma):
    """Budget set on a single stacked vector."""
    center = np.asarray(center, dtype=float).reshape(-1)
    halfwidth = np.asarray(halfwidth, dtype=float).reshape(-1)
    if halfwidth.shape != center.shape:
        raise InputError("center and halfwidth must have equal length")
    if np.any(halfwidth < 0):
        raise InputError("half-widths must be nonnegative")
    if gamma < 0:
        raise InputError("gamma must be nonnegative")
    taus = (NormBallResidual(center, halfwidth, 1.0, np.inf),
            NormBallResidual(center, halfwidth, float(gamma), 1))
    bound = float(np.max(np.abs(center) + halfwidth, initial=0.0))
    singleton = gamma == 0 or not np.any(halfwidth > 0)
    return BudgetSet(taus, center.copy(), "budget", bound, singleton=singleton,
                     params=dict(gamma=float(gamma)), center=center.copy(),
                     halfwidth=halfwidth.copy(), gamma=float(gamma))


def make_budget(xbar, ybar, dx, dy, gamma):
    """Budget set over stacked inputs and outputs ``a = (vec(x), vec(y))``."""
    center = np.concatenate([np.ravel(xbar, order="F"), np.ravel(ybar, order="F")])
    half = np.concatenate([np.ravel(dx, order="F"), np.ravel(dy, order="F")])
    return make_budget_set(center, half, gamma)


def make_box(center, halfwidth):
    """Box ``|a - center| <= halfwidth`` (a budget set with an inactive budget)."""
    center = np.asarray(center, dtype=float).reshape(-1)
    halfwidth = np.asarray(halfwidth, dtype=float).reshape(-1)
    s = make_budget_set(center, halfwidth, float(center.size))
    return BudgetSet(s.taus[:1], s.nominal, "box", s.bound, s.singleton, dict(),
                     center=s.center, halfwidth=s.halfwidth, gamma=float(center.size))


def make_ball(center, radius, p=2, scale=None):
    """Norm ball ``||(a - center) / scale||_p <= radius``."""
    center = np.asarray(center, dtype=float).reshape(-1)
    scale = np.ones_like(center) if scale is None else np.asarray(scale, dtype=float).reshape(-1)
    tau = NormBallResidual(center, scale, radius, p)
    bound = float(np.max(np.abs(center) + radius * scale, initial=0.0))
    return UncertaintySet((tau,), center.copy(), "ball", bound,
                          singleton=(radius == 0 or not np.any(scale > 0)),
                          params=dict(radius=float(radius), p=p))


def make_singleton(a):
    """The set ``{a}``."""
    a = np.asarray(a, dtype=float).reshape(-1)
    tau = NormBallResidual(a, np.zeros_like(a), 0.0, np.inf)
    return UncertaintySet((tau,), a.copy(), "singleton", float(np.max(np.abs(a), initial=0.0)),
                          singleton=True)


def make_product(sets):
    """Cartesian product, each factor on its own block of coordinates."""
    sets = tuple(sets)
    L = sum(s.L for s in sets)
    taus, off = [], 0
    for s in sets:
        idx = np.arange(off, off + s.L)
        taus.extend(Lifted(t, idx, L) for t in s.taus)
        off += s.L
    nominal = np.concatenate([s.nominal for s in sets])
    return UncertaintySet(tuple(taus), nominal, "product", max(s.bound for s in sets),
                          singleton=all(s.singleton for s in sets), parts=sets)


def check_invariants(uset, n_pairs=1000, seed=0):
    """Nominal membership, sampled midpoint convexity and boundedness."""
    if not uset.contains(uset.nominal, tol=1e-12):
        raise SetInvariantError("nominal point is not a member")
    rng = np.random.default_rng(seed)
    pts = uset.sample(2 * n_pairs, rng)
    if np.any(np.abs(pts) > uset.bound + 1e-9):
        raise SetInvariantError("sampled member outside the reported bound")
    mids = 0.5 * (pts[:n_pairs] + pts[n_pairs:])
    for m in mids:
        if not uset.contains(m):
            raise SetInvariantError("midpoint of two members is not a member")
    return True


def componentwise_min_in_set(uset, settings=None):
    """Minimize every coordinate over the set and test whether the vector of
    minima is itself a member.

    A ``False`` result shows that a worst case built coordinate by coordinate
    is not a realizable parameter.
    """
    mins = np.empty(uset.L)
    for i in range(uset.L):
        b = conic.ProgramBuilder()
        a = b.var("a", uset.L)
        uset.emit_membership(b, a)
        b.minimize(a[i])
        res = conic.solve(b.build(), settings)
        if res.status == "dual-infeasible":
            raise SetInvariantError(f"coordinate {i} is unbounded below over the set")
        if not res.ok:
            raise SetInvariantError(f"coordinate minimization {i} ended with {res.status}")
        mins[i] = res.value("a")[i]
    return uset.contains(mins, tol=1e-7)

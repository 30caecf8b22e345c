"""Standard-form conic programs over zero, nonnegative and second-order cones.

A program is built with :class:`ProgramBuilder`, which hands out
:class:`Affine` expressions over named variable blocks.  Constraints are
collected as cone blocks ``A @ x + b in K`` with ``K`` one of

* ``"zero"``   -- ``A @ x + b == 0``
* ``"nonneg"`` -- ``A @ x + b >= 0``
* ``"soc"``    -- ``(A @ x + b)[0] >= ||(A @ x + b)[1:]||_2``

:func:`solve` hands the assembled program to Clarabel and returns primal
values, per-block dual multipliers and solver statistics.  Multipliers follow
the Lagrangian ``c @ x - sum_k z_k @ (A_k @ x + b_k)``, so ``c == sum_k A_k.T @
z_k`` at optimality and every ``z_k`` lies in the dual cone of its block.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from .errors import InvalidProgramError

logger = logging.getLogger(__name__)

CONE_KINDS = ("zero", "nonneg", "soc")


class Affine:
    """Vector-valued affine expression ``sum_k M_k @ var_k + const``.

    ``terms`` maps a variable-block id to its coefficient matrix of shape
    ``(size, block_size)``.  Scalars are expressions of size one; they
    broadcast against longer expressions in ``+``, ``-`` and ``*``.
    """

    __slots__ = ("terms", "const")
    __array_ufunc__ = None  # make ndarray (op) Affine dispatch to the reflected method

    def __init__(self, terms, const):
        self.terms = terms
        self.const = np.asarray(const, dtype=float).reshape(-1)

    @classmethod
    def constant(cls, value):
        return cls({}, np.atleast_1d(np.asarray(value, dtype=float)).reshape(-1))

    @classmethod
    def lift(cls, value):
        if isinstance(value, Affine):
            return value
        return cls.constant(value)

    @property
    def size(self):
        return self.const.shape[0]

    def is_constant(self):
        return not self.terms

    def _broadcast(self, m):
        if self.size == m:
            return self
        if self.size != 1:
            raise ValueError(f"cannot broadcast expression of size {self.size} to {m}")
        return Affine({k: np.repeat(v, m, axis=0) for k, v in self.terms.items()},
                      np.repeat(self.const, m))

    def __add__(self, other):
        other = Affine.lift(other)
        m = max(self.size, other.size)
        lhs, rhs = self._broadcast(m), other._broadcast(m)
        terms = dict(lhs.terms)
        for k, v in rhs.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return Affine(terms, lhs.const + rhs.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, Affine):
            if other.is_constant():
                other = other.const
            elif self.is_constant():
                return other * self.const
            else:
                raise TypeError("product of two non-constant expressions is not affine")
        w = np.asarray(other, dtype=float)
        if w.ndim == 0 or w.size == 1:
            w = float(w.reshape(-1)[0]) if w.ndim else float(w)
            return Affine({k: w * v for k, v in self.terms.items()}, w * self.const)
        base = self._broadcast(w.shape[0])
        return Affine({k: w[:, None] * v for k, v in base.terms.items()}, w * base.const)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    def __rmatmul__(self, matrix):
        M = np.atleast_2d(np.asarray(matrix, dtype=float))
        if M.shape[1] != self.size:
            raise ValueError(f"matrix with {M.shape[1]} columns applied to size {self.size}")
        return Affine({k: M @ v for k, v in self.terms.items()}, M @ self.const)

    def __getitem__(self, idx):
        rows = np.arange(self.size)[idx]
        rows = np.atleast_1d(rows)
        return Affine({k: v[rows] for k, v in self.terms.items()}, self.const[rows])

    def sum(self):
        return np.ones((1, self.size)) @ self

    def dot(self, w):
        return np.asarray(w, dtype=float).reshape(1, -1) @ self

    @staticmethod
    def stack(exprs):
        exprs = [Affine.lift(e) for e in exprs]
        sizes = [e.size for e in exprs]
        total = sum(sizes)
        terms = {}
        off = 0
        for e, m in zip(exprs, sizes):
            for k, v in e.terms.items():
                if k not in terms:
                    terms[k] = np.zeros((total, v.shape[1]))
                terms[k][off:off + m] += v
            off += m
        return Affine(terms, np.concatenate([e.const for e in exprs]) if exprs else np.zeros(0))

    def value(self, x_blocks):
        """Evaluate given a mapping block id -> numeric block value."""
        out = self.const.copy()
        for k, v in self.terms.items():
            out += v @ x_blocks[k]
        return out

    def __repr__(self):
        return f"Affine(size={self.size}, blocks={sorted(self.terms)})"


@dataclass(frozen=True)
class ConeBlock:
    kind: str
    A: np.ndarray
    b: np.ndarray
    tag: str = ""

    @property
    def size(self):
        return self.b.shape[0]


@dataclass(frozen=True)
class PendingBilinear:
    """Non-conic rows ``sigma_s == u_s**2 + u_s * z`` awaiting convexification.

    ``sigma`` and ``u`` are affine maps ``(A, b)`` over the program
    variables; ``z`` and ``q`` are variable indices, where ``q`` stands in
    for ``z**2 / 4`` inside the nonnegative row ``row`` (a block index).
    """

    sigma: tuple
    u: tuple
    z: int
    q: int
    row: int


@dataclass(frozen=True)
class ConicProgram:
    """``min c @ x + c0`` subject to cone blocks; immutable once built.

    ``provenance`` maps model-level names (``"alpha"``, ``"y"``, ``"t"``,
    ``"obj.tau3.v"``...) to the indices of the variables that hold them.
    """

    c: np.ndarray
    c0: float
    blocks: tuple
    provenance: dict
    pending: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self):
        return self.c.shape[0]

    @property
    def n_rows(self):
        return sum(b.size for b in self.blocks)

    def indices(self, name):
        return self.provenance[name]

    def value(self, x, name):
        return np.asarray(x)[self.provenance[name]]

    def block_indices(self, tag):
        return [i for i, blk in enumerate(self.blocks) if blk.tag == tag]

    def replace(self, **changes):
        fields = dict(c=self.c, c0=self.c0, blocks=self.blocks, provenance=self.provenance,
                      pending=self.pending, meta=self.meta)
        fields.update(changes)
        return ConicProgram(**fields)


class ProgramBuilder:
    """Incremental construction of a :class:`ConicProgram`."""

    def __init__(self):
        self._sizes = []
        self._names = []
        self._blocks = []  # (kind, Affine, tag)
        self._pending = []  # dicts with Affine sigma/u and var ids, row filled later
        self._objective = None
        self.meta = {}

    # variables -----------------------------------------------------------
    def var(self, name, size=1, nonneg=False):
        bid = len(self._sizes)
        self._sizes.append(int(size))
        self._names.append(self._unique(name))
        expr = Affine({bid: np.eye(size)}, np.zeros(size))
        if nonneg:
            self.nonneg(expr, tag=f"{name}>=0")
        return expr

    def _unique(self, name):
        if name not in self._names:
            return name
        k = 2
        while f"{name}#{k}" in self._names:
            k += 1
        return f"{name}#{k}"

    # constraints ---------------------------------------------------------
    def _add(self, kind, expr, tag):
        expr = Affine.lift(expr)
        self._blocks.append((kind, expr, tag or ""))
        return len(self._blocks) - 1

    def eq(self, expr, tag=None):
        return self._add("zero", expr, tag)

    def nonneg(self, expr, tag=None):
        return self._add("nonneg", expr, tag)

    def soc(self, t, x, tag=None):
        """``||x||_2 <= t`` for a scalar expression ``t``."""
        return self._add("soc", Affine.stack([Affine.lift(t), Affine.lift(x)]), tag)

    def rsoc(self, x, y, z, tag=None):
        """Rotated cone ``||x||^2 <= y * z`` (which forces ``y, z >= 0``)."""
        y, z = Affine.lift(y), Affine.lift(z)
        return self.soc(y + z, Affine.stack([2.0 * Affine.lift(x), y - z]), tag)

    def defer_bilinear(self, sigma, u, z, q):
        self._pending.append(dict(sigma=sigma, u=u, z=z, q=q, row=None))

    def pending_count(self):
        return len(self._pending)

    def attach_pending(self, start, row):
        for rec in self._pending[start:]:
            if rec["row"] is None:
                rec["row"] = row

    def minimize(self, expr):
        expr = Affine.lift(expr)
        if expr.size != 1:
            raise ValueError("objective must be scalar")
        self._objective = expr

    # assembly ------------------------------------------------------------
    def _offsets(self):
        return np.concatenate([[0], np.cumsum(self._sizes)]).astype(int)

    def _dense(self, expr, offsets, n):
        A = np.zeros((expr.size, n))
        for k, v in expr.terms.items():
            A[:, offsets[k]:offsets[k + 1]] += v
        return A, expr.const.copy()

    def _var_index(self, expr, offsets):
        (bid, coef), = expr.terms.items()
        return int(offsets[bid] + np.argmax(coef[0]))

    def build(self):
        offsets = self._offsets()
        n = int(offsets[-1])
        blocks = []
        for kind, expr, tag in self._blocks:
            A, b = self._dense(expr, offsets, n)
            blocks.append(ConeBlock(kind, A, b, tag))
        if self._objective is None:
            c, c0 = np.zeros(n), 0.0
        else:
            A, b = self._dense(self._objective, offsets, n)
            c, c0 = A[0], float(b[0])
        provenance = {name: np.arange(offsets[i], offsets[i + 1])
                      for i, name in enumerate(self._names)}
        pending = tuple(
            PendingBilinear(self._dense(r["sigma"], offsets, n), self._dense(r["u"], offsets, n),
                            self._var_index(r["z"], offsets), self._var_index(r["q"], offsets),
                            -1 if r["row"] is None else r["row"])
            for r in self._pending)
        return ConicProgram(c, c0, tuple(blocks), provenance, pending, dict(self.meta))


# ---------------------------------------------------------------------------
# validation


def validate(program):
    """Return a list of human-readable diagnostics; empty means well formed."""
    diags = []
    n = program.n_vars
    if not np.all(np.isfinite(program.c)):
        diags.append("objective has non-finite entries")
    for i, blk in enumerate(program.blocks):
        label = f"block {i} ({blk.kind}{', ' + blk.tag if blk.tag else ''})"
        if blk.kind not in CONE_KINDS:
            diags.append(f"{label}: unknown cone kind")
        if blk.A.shape != (blk.size, n):
            diags.append(f"{label}: matrix shape {blk.A.shape} != ({blk.size}, {n})")
        if blk.size == 0:
            diags.append(f"{label}: empty block")
        if blk.kind == "soc" and blk.size < 2:
            diags.append(f"{label}: SOC dimension < 2")
        if not (np.all(np.isfinite(blk.A)) and np.all(np.isfinite(blk.b))):
            diags.append(f"{label}: non-finite entries")
    covered = np.zeros(n, dtype=bool)
    for idx in program.provenance.values():
        covered[idx] = True
    for j in np.flatnonzero(~covered):
        diags.append(f"orphan variable {j} has no provenance")
    for rec in program.pending:
        diags.append(f"non-conic bilinear row pending (row block {rec.row}); "
                     "apply_convexification first")
    return diags


# ---------------------------------------------------------------------------
# solving


@dataclass(frozen=True)
class SolverSettings:
    tol_gap_abs: float = 1e-8
    tol_gap_rel: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 200
    verbose: bool = False


@dataclass
class SolveResult:
    status: str  # optimal | primal-infeasible | dual-infeasible | numerical-limit
    x: np.ndarray
    duals: list
    objective: float
    stats: dict
    program: ConicProgram = field(repr=False, default=None)
    certificate: np.ndarray = None

    @property
    def ok(self):
        return self.status == "optimal"

    def value(self, name):
        return self.program.value(self.x, name)

    def dual(self, tag):
        idx = self.program.block_indices(tag)
        if not idx:
            raise KeyError(tag)
        return np.concatenate([self.duals[i] for i in idx])


_STATUS = {
    "Solved": "optimal",
    "PrimalInfeasible": "primal-infeasible",
    "DualInfeasible": "dual-infeasible",
}


# conservative fallbacks when the default run stops short of full accuracy
_RETRY = (
    {},
    dict(max_step_fraction=0.95),
    dict(iterative_refinement_reltol=1e-15, iterative_refinement_abstol=1e-15,
         max_step_fraction=0.9),
)


def _cone(kind, m):
    if kind == "zero":
        return clarabel.ZeroConeT(m)
    if kind == "nonneg":
        return clarabel.NonnegativeConeT(m)
    return clarabel.SecondOrderConeT(m)


def solve(program, settings=None):
    """Solve ``program`` with Clarabel.  Raises :class:`InvalidProgramError`
    if :func:`validate` reports anything."""
    diags = validate(program)
    if diags:
        raise InvalidProgramError(diags)
    settings = settings or SolverSettings()
    n = program.n_vars
    A_all = np.vstack([blk.A for blk in program.blocks]) if program.blocks else np.zeros((0, n))
    b_all = np.concatenate([blk.b for blk in program.blocks]) if program.blocks else np.zeros(0)

    # unused columns make the KKT system singular for no benefit
    used = np.any(A_all != 0.0, axis=0) | (program.c != 0.0)
    cols = np.flatnonzero(used)
    A = sp.csc_matrix(-A_all[:, cols])
    P = sp.csc_matrix((cols.size, cols.size))
    cones = [_cone(blk.kind, blk.size) for blk in program.blocks]
    q = program.c[cols]
    attempts = 0
    for extra in _RETRY:
        opts = clarabel.DefaultSettings()
        opts.verbose = settings.verbose
        opts.tol_gap_abs = settings.tol_gap_abs
        opts.tol_gap_rel = settings.tol_gap_rel
        opts.tol_feas = settings.tol_feas
        opts.max_iter = settings.max_iter
        opts.max_threads = 1
        for key, val in extra.items():
            setattr(opts, key, val)
        sol = clarabel.DefaultSolver(P, q.copy(), A, b_all.copy(), cones, opts).solve()
        attempts += 1
        if str(sol.status) in _STATUS:
            break

    status = _STATUS.get(str(sol.status), "numerical-limit")
    x = np.zeros(n)
    x[cols] = np.asarray(sol.x)
    z = np.asarray(sol.z)
    duals, off = [], 0
    for blk in program.blocks:
        duals.append(z[off:off + blk.size].copy())
        off += blk.size
    stats = dict(iterations=sol.iterations, r_prim=sol.r_prim, r_dual=sol.r_dual,
                 solve_time=sol.solve_time, backend_status=str(sol.status), attempts=attempts,
                 dual_objective=float(sol.obj_val_dual) + program.c0)
    certificate = None
    if status == "primal-infeasible":
        certificate = z.copy()
    elif status == "dual-infeasible":
        certificate = x.copy()
    objective = float(program.c @ x + program.c0) if status == "optimal" else np.nan
    if status == "numerical-limit":
        logger.warning("conic solve stopped with %s after %d iterations", sol.status, sol.iterations)
    return SolveResult(status, x, duals, objective, stats, program, certificate)


# ---------------------------------------------------------------------------
# debug dump
#
#   robfrac-conic 1
#   vars <n> blocks <k>
#   objective <c0>
#   c <j> <value>                 (nonzero entries only)
#   block <i> <kind> <m> <tag>
#   a <row> <col> <value>         (nonzero entries of block i)
#   b <row> <value>               (nonzero entries of block i)
#   var <name> <index> ...


def dump(program, stream=None):
    """Write ``program`` in the sparse text format; returns the text if
    ``stream`` is None."""
    out = stream or io.StringIO()
    w = out.write
    w("robfrac-conic 1\n")
    w(f"vars {program.n_vars} blocks {len(program.blocks)}\n")
    w(f"objective {float(program.c0)!r}\n")
    for j in np.flatnonzero(program.c):
        w(f"c {j} {float(program.c[j])!r}\n")
    for i, blk in enumerate(program.blocks):
        w(f"block {i} {blk.kind} {blk.size} {blk.tag.replace(' ', '_') or '-'}\n")
        for r, col in zip(*np.nonzero(blk.A)):
            w(f"a {r} {col} {float(blk.A[r, col])!r}\n")
        for r in np.flatnonzero(blk.b):
            w(f"b {r} {float(blk.b[r])!r}\n")
    for name, idx in program.provenance.items():
        w(f"var {name.replace(' ', '_')} {' '.join(str(int(j)) for j in idx)}\n")
    if stream is None:
        return out.getvalue()
    return None


def load(text):
    """Parse the output of :func:`dump`."""
    lines = iter(text.splitlines())
    if next(lines).strip() != "robfrac-conic 1":
        raise ValueError("not a robfrac conic dump")
    header = next(lines).split()
    n, k = int(header[1]), int(header[3])
    c0 = float(next(lines).split()[1])
    c = np.zeros(n)
    blocks, prov = [], {}
    cur = None
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        head = parts[0]
        if head == "c":
            c[int(parts[1])] = float(parts[2])
        elif head == "block":
            m = int(parts[3])
            cur = [parts[2], np.zeros((m, n)), np.zeros(m), "" if parts[4] == "-" else parts[4]]
            blocks.append(cur)
        elif head == "a":
            cur[1][int(parts[1]), int(parts[2])] = float(parts[3])
        elif head == "b":
            cur[2][int(parts[1])] = float(parts[2])
        elif head == "var":
            prov[parts[1]] = np.array([int(p) for p in parts[2:]], dtype=int)
        else:
            raise ValueError(f"unknown record {head!r}")
    if len(blocks) != k:
        raise ValueError("block count mismatch")
    return ConicProgram(c, c0, tuple(ConeBlock(*b) for b in blocks), prov)

"""Declarative TOML problem files.

A file names its atoms and uncertainty sets by kind; there is no
expression language, so every curvature fact comes from the atom classes.
Unknown keys are rejected.  See ``docs/problem-format.md`` for the grammar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._toml import read_toml, tomllib
from .errors import InputError
from .expr import QuadBiaffine, ScenarioVariance, SumAtom
from .reformulate import FractionalProgram
from .rootfind import METHODS
from .usets import (
    make_ball,
    make_box,
    make_budget_set,
    make_chi2_simplex,
    make_hellinger_simplex,
    make_product,
    make_singleton,
)

TOP_KEYS = {"name", "n", "f_sign", "objective_set", "denominator_set", "numerator",
            "denominator", "constraint", "sets", "linear", "solver"}
LINEAR_KEYS = {"A_ub", "b_ub", "A_eq", "b_eq", "lower", "upper"}
SOLVER_KEYS = {"method", "tol", "max_iter"}
ATOM_KEYS = {
    "affine": {"c0", "cx", "ca", "B"},
    "quadratic": {"c0", "cx", "ca", "B", "Q"},
    "scenario-mean": {"M", "u0"},
    "scenario-variance": {"M", "u0"},
    "sum": {"terms"},
}
SET_KEYS = {
    "box": {"center", "halfwidth"},
    "budget": {"center", "halfwidth", "gamma"},
    "ball": {"center", "radius", "p", "scale"},
    "chi2": {"p_hat", "rho"},
    "hellinger": {"p_hat", "rho"},
    "singleton": {"point"},
    "product": {"parts"},
}


class ProblemFileError(InputError):
    """The problem file is malformed or does not describe a valid program."""


@dataclass
class ProblemFile:
    """Parsed problem with its solver settings."""

    program: FractionalProgram
    solver: dict = field(default_factory=dict)
    sets: dict = field(default_factory=dict)


def _keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ProblemFileError(f"{where} must be a table")
    extra = set(table) - set(allowed)
    if extra:
        raise ProblemFileError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def _need(table, key, where):
    if key not in table:
        raise ProblemFileError(f"{where} is missing '{key}'")
    return table[key]


def _arr(value, where, ndim=1):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"{where} must be numeric") from exc
    if a.ndim != ndim:
        raise ProblemFileError(f"{where} must be a {ndim}-d array")
    return a


def _atom_L(t, kind):
    if kind in ("scenario-mean", "scenario-variance"):
        return None
    if "ca" in t:
        return len(t["ca"])
    if "B" in t:
        return len(t["B"])
    return 0


def parse_atom(t, n, where, L=None):
    """Model atom from a table with a ``kind`` key."""
    kind = _need(t, "kind", where)
    if kind not in ATOM_KEYS:
        raise ProblemFileError(f"{where}: unknown atom kind {kind!r}; expected one of "
                               f"{', '.join(ATOM_KEYS)}")
    _keys(t, ATOM_KEYS[kind] | {"kind"}, where)
    if kind == "sum":
        terms = _need(t, "terms", where)
        if not isinstance(terms, list) or not terms:
            raise ProblemFileError(f"{where}.terms must be a nonempty array of tables")
        Ls = [_atom_L(s, s.get("kind")) for s in terms if isinstance(s, dict)]
        L = L if L is not None else max((v for v in Ls if v), default=0)
        return SumAtom([parse_atom(s, n, f"{where}.terms[{i}]", L) for i, s in enumerate(terms)])
    if kind in ("scenario-mean", "scenario-variance"):
        M = _arr(_need(t, "M", where), f"{where}.M", 2)
        if M.shape[1] != n:
            raise ProblemFileError(f"{where}.M must have {n} columns")
        u0 = _arr(t["u0"], f"{where}.u0") if "u0" in t else None
        if kind == "scenario-mean":
            return QuadBiaffine.scenario_mean(M, u0)
        return ScenarioVariance(M, u0)
    L = _atom_L(t, kind) if L is None or L == 0 else L
    if "ca" in t and len(t["ca"]) != L or "B" in t and len(t["B"]) != L:
        raise ProblemFileError(f"{where}: ca and B must have one entry per uncertain parameter")
    try:
        return QuadBiaffine(
            n, L, c0=t.get("c0", 0.0),
            cx=_arr(t["cx"], f"{where}.cx") if "cx" in t else None,
            ca=_arr(t["ca"], f"{where}.ca") if "ca" in t else None,
            B=_arr(t["B"], f"{where}.B", 2) if "B" in t else None,
            Q=_arr(t["Q"], f"{where}.Q", 2) if "Q" in t else None,
        )
    except ValueError as exc:
        raise ProblemFileError(f"{where}: {exc}") from exc


def parse_set(name, t, sets, raw, stack=()):
    """Uncertainty set ``name`` (built on demand so products may refer ahead)."""
    if name in sets:
        return sets[name]
    if name in stack:
        raise ProblemFileError(f"set {name!r} refers to itself")
    if name not in raw:
        raise ProblemFileError(f"unknown set {name!r}")
    t = raw[name]
    where = f"sets.{name}"
    kind = _need(t, "kind", where)
    if kind not in SET_KEYS:
        raise ProblemFileError(f"{where}: unknown set kind {kind!r}; expected one of "
                               f"{', '.join(SET_KEYS)}")
    _keys(t, SET_KEYS[kind] | {"kind"}, where)
    g = lambda k: _need(t, k, where)  # noqa: E731
    try:
        if kind == "box":
            s = make_box(_arr(g("center"), where), _arr(g("halfwidth"), where))
        elif kind == "budget":
            s = make_budget_set(_arr(g("center"), where), _arr(g("halfwidth"), where),
                                float(g("gamma")))
        elif kind == "ball":
            p = t.get("p", 2)
            p = np.inf if p in ("inf", float("inf")) else p
            s = make_ball(_arr(g("center"), where), float(g("radius")), p,
                          _arr(t["scale"], where) if "scale" in t else None)
        elif kind == "chi2":
            s = make_chi2_simplex(_arr(g("p_hat"), where), float(g("rho")))
        elif kind == "hellinger":
            s = make_hellinger_simplex(_arr(g("p_hat"), where), float(g("rho")))
        elif kind == "singleton":
            s = make_singleton(_arr(g("point"), where))
        else:
            s = make_product([parse_set(p, None, sets, raw, stack + (name,)) for p in g("parts")])
    except ProblemFileError:
        raise
    except (ValueError, TypeError) as exc:
        raise ProblemFileError(f"{where}: {exc}") from exc
    sets[name] = s
    return s


def _set_for(name, L, sets, raw, where):
    if name is None:
        return make_singleton(np.zeros(L))
    s = parse_set(name, None, sets, raw)
    if s.L != L:
        raise ProblemFileError(f"{where} has {L} uncertain parameters but set {name!r} has {s.L}")
    return s


def parse_problem(data):
    """:class:`ProblemFile` from a decoded TOML mapping."""
    _keys(data, TOP_KEYS, "problem")
    n = _need(data, "n", "problem")
    if not isinstance(n, int) or n < 1:
        raise ProblemFileError("n must be a positive integer")
    raw_sets = data.get("sets", {})
    _keys(raw_sets, raw_sets.keys(), "sets")
    sets = {}
    for name in raw_sets:
        parse_set(name, None, sets, raw_sets)
    f = parse_atom(_need(data, "numerator", "problem"), n, "numerator")
    g = parse_atom(_need(data, "denominator", "problem"), n, "denominator")
    U0 = _set_for(data.get("objective_set"), f.L, sets, raw_sets, "numerator")
    U0d = None
    if "denominator_set" in data:
        U0d = _set_for(data["denominator_set"], g.L, sets, raw_sets, "denominator")
    elif g.L != f.L:
        raise ProblemFileError("numerator and denominator disagree on the uncertain parameter; "
                               "give a denominator_set")
    cons = []
    for i, c in enumerate(data.get("constraint", [])):
        where = f"constraint[{i}]"
        c = dict(c)
        set_name = c.pop("set", None)
        h = parse_atom(c, n, where)
        cons.append((h, _set_for(set_name, h.L, sets, raw_sets, where)))
    lin = data.get("linear", {})
    _keys(lin, LINEAR_KEYS, "linear")
    kw = {}
    for k in LINEAR_KEYS:
        if k in lin:
            kw[k] = _arr(lin[k], f"linear.{k}", 2 if k.startswith("A") else 1)
    for a, b in (("A_ub", "b_ub"), ("A_eq", "b_eq")):
        if (a in kw) != (b in kw):
            raise ProblemFileError(f"linear.{a} and linear.{b} must be given together")
    solver = data.get("solver", {})
    _keys(solver, SOLVER_KEYS, "solver")
    if solver.get("method", "auto") not in METHODS:
        raise ProblemFileError(f"solver.method must be one of {', '.join(METHODS)}")
    try:
        fp = FractionalProgram(f, g, n, U0, U0d, cons, f_sign=data.get("f_sign", "nonneg"),
                               name=str(data.get("name", "")), **kw)
    except ProblemFileError:
        raise
    except InputError as exc:
        raise ProblemFileError(str(exc)) from exc
    except ValueError as exc:
        raise ProblemFileError(f"linear data: {exc}") from exc
    return ProblemFile(fp, dict(solver), sets)


def loads(text):
    """Parse problem-file text."""
    try:
        data = read_toml(text)
    except tomllib.TOMLDecodeError as exc:
        raise ProblemFileError(f"not valid TOML: {exc}") from exc
    return parse_problem(data)


def load(path):
    """Parse the problem file at ``path``."""
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


__all__ = ["ProblemFile", "ProblemFileError", "parse_problem", "parse_atom", "parse_set",
           "loads", "load"]

"""Robust fractional programming.

Minimize the worst case of a ratio ``f(a, x) / g(a, x)`` over an uncertainty
set, subject to robust convex constraints, through conic reformulations
(single Schaible solve, parametric programs with bisection or Dinkelbach
iterations, Charnes-Cooper with an optimistic dual).
"""

from . import conic, expr, reformulate, rootfind, usets
from .conic import ConicProgram, ProgramBuilder, SolverSettings, SolveResult
from .errors import (
    AssumptionViolationError,
    DegenerateTransformError,
    DomainError,
    InfeasibleError,
    InputError,
    InternalConsistencyError,
    RecoveryDegenerateError,
    RobfracError,
    SolverError,
    UnsupportedConfigurationError,
    WrongCaseError,
    WrongMethodError,
)
from .expr import QuadBiaffine, ScenarioVariance, SumAtom
from .reformulate import (
    CaseTag,
    FractionalProgram,
    apply_convexification,
    build_optimistic_dual,
    build_parametric,
    build_s1,
    build_s2,
    charnes_cooper,
    classify,
    recover_x_dual,
    recover_x_schaible,
    robustify_constraint,
)
from .rootfind import (
    RootFindTrace,
    Solution,
    bisect,
    dinkelbach,
    evaluate_F,
    solve_fp,
    worst_case_ratio,
)
from .usets import (
    make_ball,
    make_box,
    make_budget,
    make_budget_set,
    make_chi2_simplex,
    make_hellinger_simplex,
    make_product,
    make_singleton,
)

__version__ = "0.1.0"

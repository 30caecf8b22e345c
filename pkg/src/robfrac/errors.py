"""Exception hierarchy for robfrac."""


class RobfracError(Exception):
    """Base class for all library errors."""


class InputError(RobfracError, ValueError):
    """Malformed or inconsistent user input (dimensions, off-simplex data, ...)."""


class DomainError(InputError):
    """An argument lies outside the mathematical domain of the operation."""


class UnsupportedAtomError(RobfracError):
    """The atom kind has no registered conjugate or conic form for this use."""


class UnsupportedConfigurationError(RobfracError):
    """The problem does not fall into any tractable row of the case tables."""


class WrongCaseError(RobfracError):
    """A builder was called on a problem of a different case."""


class WrongMethodError(RobfracError):
    """The requested method cannot be applied to this problem structure."""


class DegenerateTransformError(RobfracError):
    """The Charnes-Cooper/Schaible scale variable collapsed to (near) zero."""


class RecoveryDegenerateError(RobfracError):
    """Primal recovery from dual multipliers is ill-defined."""


class SetInvariantError(RobfracError):
    """An uncertainty set violated one of its structural invariants."""


class AssumptionViolationError(RobfracError):
    """A modelling assumption (positivity, boundedness, curvature) failed."""


class InternalConsistencyError(RobfracError):
    """An algorithmic invariant failed, usually because of solver inaccuracy."""


class InvalidProgramError(InputError):
    """A conic program failed validation."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class SolverError(RobfracError):
    """The conic backend stopped without an optimal or certified status."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleError(SolverError):
    """The program (or a robust counterpart) is infeasible."""

"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Malformed, non-finite, or shape-inconsistent input."""


class UnsupportedDimensionError(InvalidInputError):
    """Operation only defined for a specific state dimension."""


class DegenerateShapeError(ValueError):
    """Covariance spectrum too degenerate for the requested quantity (e.g. an angle)."""


class SingularCovarianceError(ValueError):
    """A covariance that must be inverted is numerically singular."""


class SolverFailure(RuntimeError):
    """A conic solve ended in a status that cannot be accepted."""

    def __init__(self, message, status=None, diagnostics=None):
        super().__init__(message)
        self.status = status
        self.diagnostics = diagnostics or {}


class AbortedRunError(SolverFailure):
    """DCA stopped because a subproblem failed; carries the partial history."""

    def __init__(self, message, history, status=None, diagnostics=None):
        super().__init__(message, status=status, diagnostics=diagnostics)
        self.history = history

"""Shared exception types."""


class ConfigError(ValueError):
    """Raised when a specification or configuration value is invalid."""


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or fails validation."""


class NumericalError(RuntimeError):
    """Raised when a linear-algebra step fails beyond recovery.

    Carries the smallest eigenvalue of the offending matrix when it is known,
    so callers can report how indefinite the matrix actually was.
    """

    def __init__(self, message, smallest_eigenvalue=None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class SchurSingularError(NumericalError):
    """Constraint Schur complement is singular at the working tolerance.

    Callers are expected to treat this as a damping signal: increase the
    Levenberg term and retry rather than abort.
    """

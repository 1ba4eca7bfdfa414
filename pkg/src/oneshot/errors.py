"""Exception hierarchy for the oneshot package.

Distinguishing argument problems from broken mathematical assumptions lets
callers (in particular the CLI) map failures to the right exit code.
"""


class OneShotError(Exception):
    """Base class for all package errors."""


class ProblemAssumptionError(OneShotError):
    """A standing assumption is violated (rho(B) >= 1, rank-deficient
    parameter-to-data map, inconsistent dimensions, non-finite entries)."""


class SingularSystemError(OneShotError):
    """An exact solve hit a (numerically) singular linear system."""


class SizeGuardError(OneShotError):
    """A dense spectral computation was requested above the size guard."""


class EigensolverError(OneShotError):
    """The dense nonsymmetric eigensolver failed to converge."""


class SpecParseError(OneShotError):
    """An experiment document failed to parse.

    Carries the 1-based line number of the offending line.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SpecValidationError(OneShotError):
    """A parsed experiment document failed validation; names the field."""

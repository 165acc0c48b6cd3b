"""Exception hierarchy shared across the package."""


class CrashItsaError(Exception):
    """Base class for all package errors."""


class InputError(CrashItsaError, ValueError):
    """Malformed input file, record, or configuration."""


class RecordError(InputError):
    """A single input record could not be used.

    Carries the 1-based data row number of the offending record.
    """

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(InputError):
    """Invalid run configuration."""


class FitError(CrashItsaError):
    """A model could not be estimated."""


class RankDeficiencyError(FitError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"design matrix is rank deficient; column {column!r} is linearly dependent on earlier columns")


class SeparationError(FitError):
    """Logistic fit diverges because the classes are (quasi-)separated."""


class NonStationaryError(FitError):
    """Estimated or specified AR coefficients are not stationary."""


class DiagnosticsError(CrashItsaError, ValueError):
    """Series is degenerate for the requested diagnostic."""


class PositivityWarning(UserWarning):
    """Propensity score numerically indistinguishable from 0 or 1."""

"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ingestion/format errors -> 2,
configuration errors -> 3, fit errors -> 4.
"""


class FcqrError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class IngestionError(FcqrError):
    """Malformed or inconsistent input data files."""

    exit_code = 2


class FormatError(FcqrError):
    """Corrupted or incompatible estimator exchange payload."""

    exit_code = 2


class InsufficientDataError(FcqrError):
    """Too few subjects for the requested operation."""

    exit_code = 2


class ConfigurationError(FcqrError):
    """Invalid configuration or parameter values."""

    exit_code = 3


class DomainError(ConfigurationError):
    """Evaluation point or sampling grid outside the basis domain."""


class FitError(FcqrError):
    """Solver failure during estimation."""

    exit_code = 4


class DegenerateDataError(FitError):
    """Data admit no bounded minimizer (e.g. no observed events)."""


class CalibrationError(FitError):
    """Censoring calibration failed to converge."""

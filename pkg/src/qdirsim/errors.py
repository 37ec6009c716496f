"""Exception types raised across the package."""


class QdirsimError(Exception):
    """Base class for all package errors."""


class DomainError(QdirsimError, ValueError):
    """An argument lies outside the regime where a relation is valid."""


class AliasingError(QdirsimError, ValueError):
    """The transverse grid is too coarse for the requested image."""


class NullStateError(QdirsimError):
    """A filter removed (essentially) all probability."""


class ConditioningError(QdirsimError):
    """Conditioning on an outcome of (near) zero probability."""


class NonIdentifiableError(QdirsimError):
    """Source directions cannot be separated from the data.

    ``details`` carries whatever the estimator computed before giving up.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = dict(details or {})


class InsufficientDataError(QdirsimError, ValueError):
    """Too few events or windows for the requested statistic."""


class ConfigError(QdirsimError, ValueError):
    """Invalid scenario configuration."""

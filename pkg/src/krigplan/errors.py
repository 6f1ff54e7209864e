"""Exception types shared across the package."""


class KrigplanError(Exception):
    """Base class for all krigplan errors."""


class ConfigurationError(KrigplanError):
    """Invalid grid spec, experiment config, or command-line input."""


class InsufficientDataError(KrigplanError):
    """An operation needs more measurements than are available."""


class DuplicateLocationError(KrigplanError):
    """Two measurements (or design points) share the same grid location."""


class SchemaError(KrigplanError):
    """A data file does not match its documented schema."""


class NumericalFailureError(KrigplanError):
    """A kriging system is singular/ill-conditioned or produced an invalid variance."""


class OracleMissError(KrigplanError):
    """The response source has no value for a requested location.

    ``location`` names the missing combination; ``state`` carries the partial
    experiment state when the miss happened inside a run, so the caller can
    persist it and resume later.
    """

    def __init__(self, message, location=None, state=None):
        super().__init__(message)
        self.location = location
        self.state = state

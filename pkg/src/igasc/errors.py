"""Exception hierarchy shared across the package."""


class IgascError(Exception):
    """Base class for all package errors."""


class DomainError(IgascError, ValueError):
    """An argument lies outside the domain of a function or distribution."""


class StationarityError(DomainError):
    """State-process parameters do not define a stationary process."""


class UsageError(IgascError, ValueError):
    """A call violates an API precondition (lengths, horizons, family)."""


class StudyError(IgascError, RuntimeError):
    """A Monte Carlo study produced no usable replications."""

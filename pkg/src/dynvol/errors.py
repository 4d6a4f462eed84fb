"""Exception and warning types shared across the package."""


class DynvolError(Exception):
    """Base class for all package errors."""


class InsufficientHistoryError(DynvolError):
    """Not enough past observations for the requested window."""


class DegenerateSeriesError(DynvolError):
    """Series has no variation where variation is required."""


class SingularDesignError(DynvolError):
    """Local regression design matrix is numerically singular."""


class NoCoverageError(DynvolError):
    """Query state lies outside the support of the historical data."""


class TooFewPointsError(DynvolError):
    """Dataset too small for the requested operation."""


class IngestionError(DynvolError):
    """External data failed validation. Offending row numbers, when known,
    are reported in the message."""


class DegenerateCaseWarning(UserWarning):
    """A degenerate configuration was handled by a flagged fallback."""

"""Exception hierarchy shared across the package."""


class LagmmError(Exception):
    """Base class for all package-specific errors."""


class DataError(LagmmError):
    """Malformed or inconsistent input data."""


class EmptyInput(DataError):
    """The input contains no observations."""


class MissingCell(DataError):
    """A subject lacks one of the panel's time points."""


class DuplicateObservation(DataError):
    """The same (subject, time) cell appears more than once."""


class NonNumeric(DataError):
    """A value could not be parsed as a finite number."""


class InvalidDataset(DataError):
    """A dataset violates a structural panel invariant."""


class SpecError(LagmmError):
    """Invalid model specification."""


class LagOutOfRange(SpecError):
    """A lag grouping references a lag at or beyond the panel length."""


class Underidentified(SpecError):
    """Fewer moment conditions (or subjects) than free parameters."""


class DimensionMismatch(LagmmError):
    """Array shapes do not conform."""


class EstimationError(LagmmError):
    """Failure while running the estimator."""


class TooFewSubjects(EstimationError):
    """Not enough subjects to form a covariance estimate."""


class SingularWeighting(EstimationError):
    """Moment covariance is rank-deficient beyond repair by regularization."""

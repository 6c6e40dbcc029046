class HDLocError(Exception):
    """Base class for every error raised by hdloc."""

    pass


class InvalidInputError(HDLocError):
    """Exception raised for malformed data, parameters or configuration."""

    pass


class InvalidConfigError(InvalidInputError):
    """Exception raised for an invalid simulation config document."""

    pass


class UnsupportedDimensionError(InvalidInputError):
    """Exception raised when the dimension is too small for a statistic."""

    pass


class MissingMomentError(InvalidInputError):
    """Exception raised when a formula needs a moment that was not supplied."""

    pass


class NonexistentMomentError(InvalidInputError):
    """Exception raised when a requested radial moment is infinite."""

    pass


class DegenerateSampleError(HDLocError):
    """Exception raised when the data cannot support the requested computation."""

    pass


class DegenerateVarianceError(DegenerateSampleError):
    """Exception raised for a non-positive variance estimate."""

    pass


class DegenerateSeriesError(DegenerateSampleError):
    """Exception raised for a constant time series."""

    pass


class NumericalFailureError(HDLocError):
    """Exception raised when a computation on valid input produces non-finite values."""

    pass

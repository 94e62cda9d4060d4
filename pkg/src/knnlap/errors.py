"""Exception hierarchy.

The CLI maps :class:`DataError` subclasses to exit status 3 and
:class:`NumericalError` subclasses to exit status 4.
"""


class KnnLapError(Exception):
    """Base class for all library errors."""


class DataError(KnnLapError, ValueError):
    """Invalid input data or parameters."""


class DomainError(DataError):
    """Argument outside the mathematical domain of a function."""


class ParameterError(DataError):
    """Invalid parameter combination (e.g. ``k > N``)."""


class FormatError(DataError):
    """Malformed CSV or JSON input."""


class NumericalError(KnnLapError, ArithmeticError):
    """A computation could not produce a meaningful result."""


class DegenerateBandwidthError(NumericalError):
    """A zero kNN bandwidth would produce infinite affinities."""


class IsolatedVertexError(NumericalError):
    """A graph vertex has zero degree."""


class EmptyNeighborhoodError(NumericalError):
    """All kernel weights around an evaluation point vanish."""


class OutOfRegimeError(NumericalError):
    """The correction scale ``r`` exceeds the well-posedness threshold."""


class FitQualityError(NumericalError):
    """A regression or extrapolation fit is too poorly conditioned."""

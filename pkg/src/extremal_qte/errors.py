"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`ExtremalQteError`, so callers (the CLI in particular) can tell
estimation failures apart from programming errors.
"""


class ExtremalQteError(Exception):
    """Base class for all package errors."""


class ParameterError(ExtremalQteError, ValueError):
    """Invalid distribution or configuration parameter."""


class DomainError(ExtremalQteError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(ExtremalQteError, ValueError):
    """Array dimensions do not match."""


class SeparationError(ExtremalQteError):
    """The logistic likelihood is unbounded (complete or quasi-complete separation)."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class RankError(ExtremalQteError):
    """Design matrix is rank deficient."""


class ConvergenceError(ExtremalQteError):
    """Iterative solver did not reach its tolerance."""


class GuardError(ExtremalQteError, ValueError):
    """A feasibility guard (sample size, cap) was violated."""


class DegenerateWeightsError(ExtremalQteError, ValueError):
    """All weights are zero."""


class EmptyArmError(ExtremalQteError):
    """No observations in the requested treatment arm."""


class PositivityError(ExtremalQteError, ValueError):
    """A quantity that must be strictly positive (threshold, outcome) is not."""


class NoExceedanceError(ExtremalQteError):
    """No observation of the arm exceeds the intermediate threshold."""


class DegenerateSpacingsError(ExtremalQteError):
    """Quantile spacings for the Pickands estimator are not strictly positive."""


class OrderingError(ExtremalQteError, ValueError):
    """The extreme level p is not below the intermediate level k/n."""


class NormalizationError(ExtremalQteError):
    """The normalizing factor or the tail ratio is undefined."""


class IndefiniteCovarianceError(ExtremalQteError):
    """The plug-in variance came out negative."""


class ReliabilityError(ExtremalQteError):
    """Too many bootstrap replicates failed."""


class UnsupportedMethodError(ExtremalQteError, NotImplementedError):
    """Method recognised but intentionally not implemented."""


class SchemaError(ExtremalQteError, ValueError):
    """Input data does not follow the expected layout."""

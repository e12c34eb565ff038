"""Exception hierarchy for yfwl.

Errors split into two families so callers (and the CLI exit codes) can tell
bad input apart from numerical trouble with otherwise valid input.
"""

from __future__ import annotations


class YFWLError(Exception):
    """Base class for every error raised by this package."""


class InputError(YFWLError, ValueError):
    """Malformed input: wrong shapes, bad parameters, unreadable data."""


class DimensionMismatch(InputError):
    pass


class ParseError(InputError):
    """A CSV cell or header could not be used; message carries row/column."""


class BandwidthTooLarge(InputError):
    pass


class SingleCluster(InputError):
    pass


class OracleSizeExceeded(InputError):
    pass


class InstanceTooLarge(InputError):
    pass


class NumericalError(YFWLError, ArithmeticError):
    """Valid input that cannot be processed in floating point."""


class NotPositiveDefinite(NumericalError):
    """Cholesky pivot fell below the rank tolerance (collinear regressors)."""


RankDeficient = NotPositiveDefinite


class ZeroDegreesOfFreedom(NumericalError):
    pass


class SaturatedLeverage(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class DegenerateResidual(NumericalError):
    pass


class ConditioningWarning(UserWarning):
    """Design is badly conditioned; identities hold only to looser tolerances."""

"""Exception hierarchy and warnings used across the package."""


class FlowcpError(Exception):
    """Base class for all package-specific errors."""


class QuantileOutOfRange(FlowcpError):
    """The requested quantile rank exceeds the sample size.

    Raised when ceil((n+1)*(1-alpha)) > n, i.e. the calibration set is too
    small for the requested confidence level. This is an error rather than a
    clamp to an infinite interval: silently returning +inf would hide
    configuration mistakes.
    """


class NonFiniteScore(FlowcpError):
    """A conformity score evaluated to NaN or +/-inf."""


class NonFiniteRadius(FlowcpError):
    """Interval radius inversion overflowed or produced a non-finite value."""


class OutOfCodomain(FlowcpError):
    """A value passed to a transform inverse lies outside the family codomain."""


class ShapeMismatch(FlowcpError):
    """Array arguments have inconsistent shapes."""


class NonFiniteLoss(FlowcpError):
    """Training loss became NaN or infinite.

    Carries the iteration index at which the overflow occurred.
    """

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class ParseError(FlowcpError):
    """A CSV cell could not be parsed; the message names row and column."""


class EmptyDataset(FlowcpError):
    """A dataset with zero rows where at least one is required."""


class DegenerateLabels(FlowcpError):
    """Label normalization is impossible (max equals min)."""


class EmptyPart(FlowcpError):
    """A requested split fraction would receive zero rows."""


class TooFewSamples(FlowcpError):
    """Not enough samples for the requested slab mass in the WSC scan."""


class MonotonicityViolated(FlowcpError):
    """A perturbed transform is no longer strictly increasing in the score."""


class ConfigError(FlowcpError):
    """Invalid experiment configuration; the message names the field."""


class RankDeficientWarning(UserWarning):
    """Fewer positive covariance eigenvalues than requested components."""

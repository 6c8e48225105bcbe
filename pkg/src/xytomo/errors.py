"""Exception types shared across the package."""


class XytomoError(Exception):
    """Base class for all package errors."""


class OddChainLength(XytomoError):
    """Chain length must be even to host a zero-magnetization sector."""


class SizeLimitExceeded(XytomoError):
    """Requested system size is beyond what exact enumeration supports."""


class DimensionMismatch(XytomoError):
    """Array shapes are inconsistent with the declared dimensions."""


class ConvergenceFailure(XytomoError):
    """Eigensolver did not converge, or the sector ground state looks degenerate."""


class InvalidCounters(XytomoError):
    """Spin counters passed to the projection are outside the reachable range."""


class SymmetryViolatedSample(XytomoError):
    """A sample lies outside the zero-magnetization sector in u1 mode.

    ``sample_index`` is the 0-based position of the offending sample within
    the batch or dataset it came from.
    """

    def __init__(self, message, sample_index):
        super().__init__(message)
        self.sample_index = sample_index


class ZeroAmplitudeConfig(XytomoError):
    """A sampled configuration has zero model amplitude.

    This signals an inconsistency between the sampler and the evaluator; the
    energy estimate aborts instead of silently skipping the sample.
    """


class DegeneratePlane(XytomoError):
    """The two landscape directions are numerically collinear."""


class ConfigError(XytomoError):
    """Invalid command-line or config-file input."""

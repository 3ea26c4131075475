"""Exception types shared across the package."""


class UdepError(Exception):
    """Base class for all errors raised by udep."""


class DomainError(UdepError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SizeError(UdepError, ValueError):
    """A sample, probe set or window is too small."""


class UnsupportedCombinationError(UdepError, ValueError):
    """No analytic result exists for the requested (kernel, marginal) pair."""


class SymmetryError(UdepError, ValueError):
    """A discretised kernel matrix is not symmetric."""


class ModeError(UdepError, ValueError):
    """Empirical Hoeffding parts were passed where analytic parts are required."""


class ConfigError(UdepError, ValueError):
    """An experiment configuration is malformed or violates an invariant.

    ``line`` is the 1-based line of the offending entry when known.
    """

    def __init__(self, message: str, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")

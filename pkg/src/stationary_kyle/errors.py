"""Exception hierarchy shared across the package.

Exit codes used by the command-line harness live on the classes so that
library errors map onto process status without a separate lookup table.
"""


class KyleError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(KyleError):
    """Malformed or inconsistent configuration input."""

    exit_code = 2


class DomainError(ConfigError):
    """Parameter outside the regime where a formula or family is defined."""


class SizeError(ConfigError):
    """Dimension or truncation-length mismatch."""


class ConditioningError(KyleError):
    """A matrix stayed numerically singular after the jitter ladder."""

    exit_code = 3


class DivergenceError(KyleError):
    """Fixed-point iteration moved away from its seed instead of settling."""

    exit_code = 4

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history


class BracketingError(DivergenceError):
    """A scalar root search found no usable sign change on its bracket."""


class TailError(KyleError):
    """A truncated tail carries too much mass for the requested statistic."""

    exit_code = 5

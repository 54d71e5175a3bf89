"""Exception types shared across the package.

Contract violations on arguments raise ValueError (or a subclass below when
the caller can meaningfully distinguish the case). Numerical breakdown during
an iterative run raises NumericalError so the CLI can map it to a dedicated
exit code.
"""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment/training configuration."""


class NumericalError(RuntimeError):
    """Non-finite values, failed backtracking, or a dead power iteration."""


class UnsupportedOperationError(RuntimeError):
    """Operation undefined for this object (e.g. gradient of an indicator)."""

"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration (bounds, resolution, limits, ...)."""


class DomainError(ValueError):
    """Query outside the valid input domain."""


class UsageError(ValueError):
    """API misuse: wrong shapes, empty inputs, untrained models."""


class DataError(ValueError):
    """Training data is malformed (non-finite targets, length mismatch)."""


class NumericalError(RuntimeError):
    """Factorization failed even after jitter escalation."""


class InfeasibleStepError(RuntimeError):
    """Requested high-level action has no phase-space solution."""

"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (bad key, shape, or value)."""


class NumericError(ArithmeticError):
    """A factorization or integration failed even after jitter escalation."""


class UsageError(ValueError):
    """An operation was called in a state where it is undefined."""

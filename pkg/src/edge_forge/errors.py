"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value or document is invalid."""


class DomainError(ValueError):
    """A numeric input lies outside the domain of an operation."""


class UsageError(RuntimeError):
    """An operation was called in a state where it is not allowed."""

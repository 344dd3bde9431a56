"""Exception types shared across the package."""


class MsveError(Exception):
    """Base class for package errors."""


class ConfigError(MsveError):
    """Invalid run configuration (bad field value, unknown key, empty class)."""


class InputError(MsveError, ValueError):
    """Invalid argument to an operation (shape mismatch, empty sample, non-finite input)."""


class NumericError(MsveError, ArithmeticError):
    """Non-finite value encountered during optimization; surfaced to the training loop."""

"""Exception hierarchy shared across the package."""


class AmbleError(Exception):
    """Base class for all package errors."""


class ModelError(AmbleError):
    """Robot description violates an invariant or does not match the state."""


class ConfigError(AmbleError):
    """Configuration file is malformed or inconsistent (CLI exit code 2)."""


class ClipError(AmbleError):
    """Motion clip file is malformed or violates clip invariants."""


class NumericalError(AmbleError):
    """Non-finite values encountered where finite ones are required (CLI exit code 3)."""

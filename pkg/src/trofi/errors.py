"""Shared exception types. The CLI maps these onto exit codes."""


class ConfigError(ValueError):
    """Unknown environment/tier or an invalid configuration value."""


class ShapeError(ValueError):
    """Array dimensions disagree with the declared architecture."""


class PreconditionError(ValueError):
    """An operation was called on inputs that violate its contract."""


class DataFormatError(ValueError):
    """A serialized artifact is malformed, truncated, or empty."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RankingValidationError(ValueError):
    """An imported ranking is inconsistent with its dataset."""


class DivergenceError(ArithmeticError):
    """Training produced non-finite values."""


class DependencyError(RuntimeError):
    """A pipeline stage is missing an upstream artifact."""

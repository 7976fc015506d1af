"""
Exception hierarchy for branchnet.

Anything derived from ValidationError is a problem with the caller's input
(the CLI exits with status 2); everything else is a runtime failure (status 1).
"""
from typing import Optional, Tuple


class BranchnetError(Exception):
    """Base class for all branchnet errors."""


class ValidationError(BranchnetError, ValueError):
    """Invalid input, configuration or data."""


class ConfigError(ValidationError):
    """A configuration object failed validation."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("Configuration validation failed:\n" + "\n".join(f"- {e}" for e in self.errors))


class ShapeError(ValidationError):
    """Operand dimensions do not conform."""

    def __init__(self, message: str, *shapes: Tuple[int, ...]):
        self.shapes = shapes
        super().__init__(message)


class DomainError(ValidationError):
    """A function was evaluated outside its domain."""


class UnsupportedCombinationError(ValidationError):
    """An activation/loss combination the backward pass cannot handle."""


class LossInputError(ValidationError):
    """Loss arguments violate the loss preconditions."""


class PanelError(ValidationError):
    """Panel ingestion or feature construction failed."""


class ProtocolError(ValidationError):
    """The hidden-feature protocol cannot run on the given partition."""


class NumericalError(BranchnetError, ArithmeticError):
    """A computation produced NaN or infinite values."""


class TrainingError(BranchnetError, RuntimeError):
    """Training failed; `epoch` names the epoch where it happened, if known."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        self.epoch = epoch
        super().__init__(message)

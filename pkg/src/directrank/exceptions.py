"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class InvalidConfigError(ValueError):
    """Raised for inconsistent configuration (network shapes, generator knobs)."""


class SizeError(ValueError):
    """Raised when an exhaustive oracle would exceed its enumeration budget."""


class CheckpointError(ValueError):
    """Raised when a parameter checkpoint cannot be parsed."""


class SkipStep(Exception):
    """Signals that a training step cannot be taken on the current batch.

    Raised by the AP-based steps when the batch holds a single class, since
    average precision is undefined there.
    """


class TrainingDiverged(ArithmeticError):
    """Raised when training produces non-finite parameters or scores."""

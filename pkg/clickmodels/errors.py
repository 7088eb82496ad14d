"""Exception hierarchy for the click model toolkit."""


class ClickModelError(Exception):
    """Base class for all toolkit errors."""


class UsageError(ClickModelError, ValueError):
    """A precondition or domain constraint was violated by the caller."""


class DataValidationError(UsageError):
    """A click log violates the session format."""

    def __init__(self, message: str, row: int = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class ConfigurationError(ClickModelError):
    """A run configuration is invalid or a model binding is missing."""


class NumericalError(ClickModelError, ArithmeticError):
    """A computation produced NaN or otherwise left its valid range."""


class TrainingDivergedError(NumericalError):
    """Validation loss became NaN during training."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history if history is not None else []

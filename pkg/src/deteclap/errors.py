"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shapes are incompatible with an operation."""


class ContractError(ValueError):
    """Inputs violate a documented precondition of an operation."""


class InputError(ValueError):
    """A user-supplied value is outside its allowed domain."""


class ConfigError(ValueError):
    """A configuration is internally inconsistent or mismatched."""


class ParseError(ValueError):
    """A data file does not match its schema.

    Carries the offending line number when available.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingAborted(RuntimeError):
    """Training stopped on a non-finite loss; message names the batch."""

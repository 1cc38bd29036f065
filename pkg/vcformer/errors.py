"""Exception hierarchy for vcformer."""

from typing import Optional


class VCformerError(Exception):
    """Base class for every error raised by vcformer."""


class DimensionError(VCformerError, ValueError):
    """Raised when operand shapes do not line up."""

    def __init__(self, message: str, *shapes):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)


class NumericError(VCformerError, ArithmeticError):
    """NaN/Inf values, failed factorizations or non-finite gradients."""


class ConfigurationError(VCformerError, ValueError):
    """Invalid configuration values or unknown keys."""


class ContractError(VCformerError):
    """A precondition of an operation was violated by the caller."""


class DataFormatError(VCformerError, ValueError):
    """Malformed input file."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        if row is not None:
            message = f"{message} (row {row}, column {column!r})"
        super().__init__(message)


class CheckpointError(VCformerError):
    """Unreadable or corrupt checkpoint container."""


class TrainingDivergedError(NumericError):
    """Loss became NaN/Inf; carries what was finite before it happened."""

    def __init__(self, message: str, report=None, params=None):
        super().__init__(message)
        self.report = report
        self.params = params

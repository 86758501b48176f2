"""Exception hierarchy shared across the package."""


class SpikeKalError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolationError(SpikeKalError, ValueError):
    """An operation was called with arguments violating its contract
    (usually a dimension mismatch)."""


class ModelValidationError(SpikeKalError, ValueError):
    """A model or configuration object failed validation at construction."""


class NumericalError(SpikeKalError, ArithmeticError):
    """A numerical operation failed (e.g. a singular solve).

    Carries the condition number of the offending matrix when available.
    """

    def __init__(self, message: str, condition: float | None = None):
        if condition is not None:
            message = f"{message} (condition number ~ {condition:.3e})"
        super().__init__(message)
        self.condition = condition


class ConfigError(SpikeKalError, ValueError):
    """A configuration file could not be parsed or validated."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key is not None:
            prefix += f"key {key!r}: "
        super().__init__(prefix + message)
        self.line = line
        self.key = key


class CsvFormatError(SpikeKalError, ValueError):
    """A CSV input file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

"""Exception hierarchy shared by every module of the package."""


class MlGcnError(Exception):
    """Base class for all errors raised by mlgcn."""


class DimensionError(MlGcnError, ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(MlGcnError, ArithmeticError):
    """A NaN or infinity reached an operation boundary."""


class UsageError(MlGcnError, RuntimeError):
    """An API was called in a state that does not allow it."""


class ConfigurationError(MlGcnError, ValueError):
    """A hyper-parameter or model configuration is out of range."""


class DataError(MlGcnError, ValueError):
    """Input data violates its contract (unknown label, missing token, ...)."""


class ParseError(DataError):
    """A text file could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class FormatError(MlGcnError, ValueError):
    """A binary matrix file is malformed; carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int, path=None):
        self.offset = offset
        self.path = path
        prefix = f"{path}: " if path is not None else ""
        super().__init__(f"{prefix}{message} (at byte offset {offset})")


class TrainingError(NonFiniteError):
    """Optimization produced a non-finite loss or gradient."""

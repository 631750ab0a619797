"""Exception types shared across the toolkit."""


class SedkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SedkitError):
    """Input data violates a documented contract."""


class VocabularyError(ValidationError):
    """Unknown class name or inconsistent vocabularies."""


class ContractError(ValidationError):
    """Operation invoked outside its preconditions (shape, flag, range)."""


class SizeError(ValidationError):
    """Requested size is incompatible with the input."""


class NumericError(SedkitError):
    """NaN or infinite values where finite numbers are required."""


class TrainingError(SedkitError):
    """Probe training diverged.

    ``step`` holds the optimizer step at which the divergence was detected.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class FormatError(ValidationError):
    """Malformed input file; carries file/line/column context when known."""

    def __init__(self, message: str, path=None, line: int | None = None,
                 column: int | None = None):
        loc = ""
        if path is not None:
            loc = f" ({path}"
            if line is not None:
                loc += f", line {line}"
            if column is not None:
                loc += f", column {column}"
            loc += ")"
        super().__init__(message + loc)
        self.path = path
        self.line = line
        self.column = column

"""Exception hierarchy shared by the library and the CLI."""


class ConfOTError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ConfOTError, ValueError):
    """Invalid hyper-parameter or configuration value (CLI exit code 2)."""


class DataError(ConfOTError, ValueError):
    """Input data violates a contract: non-finite values, bad labels, empty inputs (CLI exit code 3)."""


class ShapeError(DataError):
    """Array dimensions disagree between inputs."""


class FormatError(DataError):
    """A file on disk is malformed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ContractError(ConfOTError, ValueError):
    """Objects were combined in a way their contracts forbid, e.g. a threshold used with another score."""


class NumericError(ConfOTError, ArithmeticError):
    """A numerical routine produced non-finite intermediates."""

"""Exception hierarchy shared by all modules.

Each class carries the process exit code the CLI reports for it.
"""


class ScrError(Exception):
    exit_code = 1


class ConfigError(ScrError):
    """Bad configuration key, value or command-line usage."""

    exit_code = 2


class ContractError(ScrError):
    """Arguments violate an operation's preconditions (shapes, ranges)."""

    exit_code = 3


class DataError(ScrError):
    """Input data could not be ingested."""

    exit_code = 3


class SplitError(DataError):
    pass


class CheckpointError(DataError):
    """Malformed checkpoint file. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(ScrError):
    exit_code = 4


class DegenerateBatchError(NumericError):
    """A contrastive batch in which no anchor has a positive partner."""


class UndefinedCorrelationError(NumericError):
    """Pearson correlation requested for a zero-variance vector."""

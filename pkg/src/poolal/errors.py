"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PoolALError(Exception):
    exit_code = 4


class ConfigError(PoolALError, ValueError):
    """Invalid or inconsistent configuration (usage error)."""

    exit_code = 2


class ValidationError(PoolALError, ValueError):
    """An argument or a data invariant is violated."""

    exit_code = 3


class DataError(PoolALError):
    """Input data cannot satisfy the requested operation."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)

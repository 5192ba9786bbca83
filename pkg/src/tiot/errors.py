"""Exception hierarchy shared by every module."""


class TiOTError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TiOTError, ValueError):
    """An argument violates a documented precondition."""


class DataError(TiOTError):
    """A data file is unreadable, malformed, or has the wrong schema."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class SolverFailure(TiOTError, RuntimeError):
    """A numerical routine could not produce a trustworthy result."""

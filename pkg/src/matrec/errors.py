"""Exception types raised across the package."""


class MatRecError(Exception):
    """Base class for every error raised by :mod:`matrec`."""


class InvalidArgumentError(MatRecError, ValueError):
    pass


class IngestionError(MatRecError):
    """A ratings file could not be parsed.

    ``line`` is the 1-based line number of the offending row when known.
    """

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class InvalidDataError(MatRecError, ValueError):
    pass


class InvalidStateError(MatRecError, RuntimeError):
    pass


class DegenerateFeatureError(MatRecError, ArithmeticError):
    """A pair feature vector has (near) zero norm, so its cosine is undefined."""


class ColdStartError(MatRecError, KeyError):
    """A user or item has no trained factors."""

    def __str__(self):
        return Exception.__str__(self)


class NumericalError(MatRecError, ArithmeticError):
    pass

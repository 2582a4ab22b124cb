"""Exception types raised across the toolkit."""


class CellDetError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(CellDetError, ValueError):
    pass


class BoundsError(CellDetError, IndexError):
    pass


class DegenerateInputError(CellDetError, ValueError):
    pass


class RegistrationError(CellDetError, ValueError):
    pass


class DataError(CellDetError, ValueError):
    pass


class ShapeError(CellDetError, ValueError):
    pass


class ParseError(CellDetError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

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


class TrainingError(CellDetError, RuntimeError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")

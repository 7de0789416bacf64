"""Exception types shared across the package."""


class MWGPError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(MWGPError, ValueError):
    pass


class FactorizationFailure(MWGPError, ArithmeticError):
    """Cholesky failed at every jitter level."""


class InvalidConfig(MWGPError, ValueError):
    pass


class IndexOutOfRange(MWGPError, IndexError):
    pass


class NonFiniteObjective(MWGPError, ArithmeticError):
    pass


class ParseError(MWGPError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDataset(MWGPError, ValueError):
    pass


class InvalidK(MWGPError, ValueError):
    pass


class EmptySet(MWGPError, ValueError):
    pass


class IncompatibleModel(MWGPError, ValueError):
    pass

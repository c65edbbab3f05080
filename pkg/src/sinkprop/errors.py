"""Exception types raised across the package."""


class SinkpropError(Exception):
    """Base class for all package errors."""


class ZeroRowSum(SinkpropError, ValueError):
    pass


class ZeroColSum(SinkpropError, ValueError):
    pass


class NonFinite(SinkpropError, FloatingPointError):
    pass


class TapeMismatch(SinkpropError, ValueError):
    pass


class DimensionMismatch(SinkpropError, ValueError):
    pass


class NonBinaryRelevance(SinkpropError, ValueError):
    pass


class DomainError(SinkpropError, ValueError):
    pass


class NonPositiveSigma(SinkpropError, ValueError):
    pass


class StaleClosure(SinkpropError, RuntimeError):
    pass


class ParseError(SinkpropError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class EmptyInput(SinkpropError, ValueError):
    pass


class DivergenceError(SinkpropError, ArithmeticError):
    pass


class TooLarge(SinkpropError, ValueError):
    pass

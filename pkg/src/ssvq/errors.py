"""Exception types raised across the package."""


class SSVQError(Exception):
    """Base class for all package errors."""


class NonDivisibleDimension(SSVQError, ValueError):
    pass


class ShapeMismatch(SSVQError, ValueError):
    pass


class TooManyClusters(SSVQError, ValueError):
    pass


class AllZeroWeights(SSVQError, ValueError):
    pass


class IndexOutOfRange(SSVQError, IndexError):
    pass


class EmptyModel(SSVQError, ValueError):
    pass


class NegativeEntry(SSVQError, ValueError):
    pass


class InvalidShape(SSVQError, ValueError):
    pass


class OutOfRange(SSVQError, ValueError):
    pass


class NumericalOverflow(SSVQError, ArithmeticError):
    pass


class CorruptHeader(SSVQError, ValueError):
    pass


class UnsupportedK(SSVQError, ValueError):
    pass


class TruncatedStream(SSVQError, ValueError):
    pass


class BufferOverflow(SSVQError, ValueError):
    pass


class MismatchedSpecs(SSVQError, ValueError):
    pass

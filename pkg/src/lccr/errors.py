"""Exception hierarchy.

Each error carries the CLI exit code it maps to: 2 for bad data, 3 for
numeric failures.
"""


class LCCRError(Exception):
    exit_code = 2


class DataError(LCCRError, ValueError):
    """Malformed or inconsistent input data."""


class NumericError(LCCRError, ArithmeticError):
    exit_code = 3


class ZeroColumn(NumericError):
    """A column is too close to zero to normalize (blank image)."""


class ZeroVector(NumericError):
    """Cosine distance against a zero vector."""


class ConstantVector(NumericError):
    """Spearman distance against a constant vector (ranks undefined)."""


class AllResidualsInfinite(NumericError):
    """Every class got a (near) zero coefficient block."""


class UnsupportedFormat(DataError):
    pass


class CorruptFile(DataError):
    pass


class SizeMismatch(DataError):
    pass

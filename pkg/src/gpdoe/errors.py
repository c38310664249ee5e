"""Exception hierarchy; each class maps to a CLI exit code."""


class GpdoeError(Exception):
    exit_code = 1


class ArgumentError(GpdoeError, ValueError):
    """Invalid argument (bad size, out-of-range index, malformed config)."""

    exit_code = 2


class DataError(GpdoeError, ValueError):
    """Data that cannot support the requested computation."""

    exit_code = 3


class NumericalError(GpdoeError, ArithmeticError):
    """Numerical failure, e.g. a covariance matrix that cannot be factorized."""

    exit_code = 4

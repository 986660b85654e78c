"""Exception types shared across the package.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericalError`` -> 3.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, indices, shapes)."""


class MeshError(DataError):
    """Invalid mesh geometry or topology."""


class ParameterError(ValueError):
    """A configuration or hyperparameter value is out of its valid range."""


class NumericalError(ArithmeticError):
    """A factorization or solve failed beyond the jitter tolerance."""

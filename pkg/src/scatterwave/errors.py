"""Exception hierarchy.

Each class carries the CLI exit code it maps to, so the command-line
front end can translate failures without a lookup table.
"""


class ScatterwaveError(Exception):
    exit_code = 2


class ParameterError(ScatterwaveError, ValueError):
    """Invalid configuration or function parameter."""

    exit_code = 1


class InputError(ScatterwaveError, ValueError):
    """Malformed or mismatched input data."""


class ShapeError(InputError):
    pass


class CorpusError(ScatterwaveError):
    """The corpus cannot support the requested operation."""


class DegenerateInputError(ScatterwaveError, ArithmeticError):
    """Input with no usable variation (zero energy, zero variance, zero median)."""

    exit_code = 3


class NumericError(ScatterwaveError, ArithmeticError):
    exit_code = 3

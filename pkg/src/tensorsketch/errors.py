"""Exception hierarchy.

All errors derive from ``ValueError`` so callers that only care about bad
input can catch that.
"""


class TensorSketchError(ValueError):
    pass


class ShapeError(TensorSketchError):
    """Operand dimensions are incompatible."""


class SizeError(TensorSketchError):
    """A result or enumeration would be too large to materialize."""


class ConfigError(TensorSketchError):
    """A sketch or experiment configuration is invalid."""


class InputError(TensorSketchError):
    """An input violates a precondition (zero vector, non-orthonormal basis, ...)."""


class NumericError(TensorSketchError):
    """A linear system could not be solved."""


class ParseError(TensorSketchError):
    """Malformed input file."""

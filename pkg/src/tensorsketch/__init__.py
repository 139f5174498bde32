"""Linear sketches for Kronecker-structured vectors."""
from .errors import (ConfigError, InputError, NumericError, ParseError, ShapeError, SizeError,
                     TensorSketchError)
from .rng import RngStream
from .sketches import (FAMILIES, CountSketchTensor, DenseRowsSketch, FastTensorJL, LinearSketch,
                       MatrixSketch, RecursiveSketch, SketchConfig, build, identity_sketch)

__all__ = [
    "FAMILIES", "ConfigError", "CountSketchTensor", "DenseRowsSketch", "FastTensorJL", "InputError",
    "LinearSketch", "MatrixSketch", "NumericError", "ParseError", "RecursiveSketch", "RngStream",
    "ShapeError", "SizeError", "SketchConfig", "TensorSketchError", "build", "identity_sketch",
]
__version__ = "0.1.0"

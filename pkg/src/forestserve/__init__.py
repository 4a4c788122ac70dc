"""Decision forest inference with interchangeable serving engines, in-process
dataflow plans, and an end-to-end latency benchmark harness."""

from .blocks import PredictionBlock, SampleBlock
from .engines import ENGINE_NAMES, MISSING_CAPABLE, build_engine
from .errors import ForestError
from .model import (
    Forest,
    Node,
    Prediction,
    Tree,
    parse_model,
    predict_naive,
    serialize_model,
    sigmoid,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "ENGINE_NAMES",
    "MISSING_CAPABLE",
    "Forest",
    "ForestError",
    "Node",
    "Prediction",
    "PredictionBlock",
    "SampleBlock",
    "Tree",
    "build_engine",
    "parse_model",
    "predict_naive",
    "serialize_model",
    "sigmoid",
    "validate",
    "__version__",
]

"""Converters from trained RandomForest / XGBoost / LightGBM models to the
forestserve interchange JSON, with a subprocess-driven agreement check."""

from .errors import ConversionMismatch, ExportError, UnsupportedModelType
from .export import ExportRecord, export

__version__ = "0.1.0"

__all__ = ["ConversionMismatch", "ExportError", "ExportRecord",
           "UnsupportedModelType", "export", "__version__"]

class ExportError(Exception):
    """Base class for exporter failures."""


class UnsupportedModelType(ExportError):
    """The input is not a model this exporter can convert."""


class ConversionMismatch(ExportError):
    """Source-library predictions and serving-engine predictions disagree."""

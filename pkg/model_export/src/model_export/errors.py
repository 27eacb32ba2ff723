"""Error hierarchy for the backbone export tool."""


class ExportError(Exception):
    """Base class for everything this package raises on purpose."""


class UnknownBackbone(ExportError):
    """The requested backbone name is not in the export registry."""


class ExportFailure(ExportError):
    """Building, tracing, or writing the exported model failed."""


class VerificationFailure(ExportError):
    """The exported model did not reproduce the source network's outputs."""

"""Export truncated CNN backbones for use as fixed feature extractors."""

from .errors import ExportError, ExportFailure, UnknownBackbone, VerificationFailure
from .export import (
    FORMAT_VERSION,
    INPUT_SIZE,
    VERIFY_TOLERANCE,
    ExportResult,
    ExportSpec,
    VerificationReport,
    build_reference,
    default_probe,
    ensure_verified,
    export_backbone,
    verify_export,
)

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportFailure",
    "ExportResult",
    "ExportSpec",
    "FORMAT_VERSION",
    "INPUT_SIZE",
    "UnknownBackbone",
    "VERIFY_TOLERANCE",
    "VerificationFailure",
    "VerificationReport",
    "build_reference",
    "default_probe",
    "ensure_verified",
    "export_backbone",
    "verify_export",
    "__version__",
]

"""Offline adapter from real video pairs to per-frame scene asset directories."""

from .errors import (
    DecodeError,
    ExporterError,
    ExportValidationFailed,
    InputError,
    ModelUnavailable,
)
from .export import ExportJob, export, validate_export

__all__ = [
    "DecodeError",
    "ExporterError",
    "ExportJob",
    "ExportValidationFailed",
    "InputError",
    "ModelUnavailable",
    "export",
    "validate_export",
]

"""Typed failures for the export path.

InputError subclasses signal problems with what the caller handed in
(exit code 2 at the CLI); the rest signal runtime failures (exit 1).
"""


class ExporterError(Exception):
    """Base class for everything this package raises on purpose."""


class InputError(ExporterError):
    """The job description itself is unusable."""


class DecodeError(InputError):
    """A video or frame directory could not be read as image frames."""


class ModelUnavailable(ExporterError):
    """A named backbone has no local weights to run."""


class ExportValidationFailed(ExporterError):
    """The written directory did not survive a round-trip load."""

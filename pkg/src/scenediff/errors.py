"""Typed errors raised across the pipeline.

Input errors (bad assets, bad files) all derive from ``InputError`` so the
CLI can map them to exit code 2; everything else is an internal error.
"""


class SceneDiffError(Exception):
    """Base class for all library errors."""


class InputError(SceneDiffError):
    """Malformed or missing input; maps to CLI exit code 2."""


class MissingFile(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class InvalidPose(InputError):
    pass


class FeatureDimMismatch(InputError):
    pass


class IoError(SceneDiffError):
    pass


class EmptyGeometry(InputError):
    """No valid depth pixel anywhere in the sequence pair."""


class NoDstRegions(SceneDiffError):
    """Region matching requested against a frame with an empty region map."""


class SceneMismatch(InputError):
    """Predictions and ground truth reference different scenes."""


class EmptyMask(InputError):
    pass


class InvalidSpec(InputError):
    """Synthetic scene description violates its own constraints."""


class ModelUnavailable(SceneDiffError):
    """A named backbone cannot be loaded in this environment."""


class DecodeError(InputError):
    pass


class ExportValidationFailed(SceneDiffError):
    """An exported asset directory failed round-trip validation."""

"""Object-level change detection between two video captures of a scene.

The package operates on precomputed per-frame assets (depth, pose,
intrinsics, feature grid, region map), pairs co-visible frames across the
two captures, scores every region for change, aggregates the scores in 3D,
and emits classified point detections. It also ships the point-based AP
evaluation protocol and a synthetic scene generator with exact geometry for
end-to-end oracle testing.
"""

from .assets import (
    DepthMap,
    FeatureMap,
    FrameAsset,
    Intrinsics,
    Pose,
    RegionMap,
    SequencePair,
    load_sequence_pair,
    load_split_dirs,
    save_sequence_pair,
)
from .config import PipelineConfig
from .errors import (
    DecodeError,
    EmptyGeometry,
    EmptyMask,
    ExportValidationFailed,
    FeatureDimMismatch,
    InputError,
    InvalidPose,
    InvalidSpec,
    IoError,
    MissingFile,
    ModelUnavailable,
    NoDstRegions,
    SceneDiffError,
    SceneMismatch,
    ShapeMismatch,
)
from .evaluation import evaluate, mask_to_box, masks_to_gt
from .pipeline import run_pipeline

__version__ = "0.1.0"

__all__ = [
    "DepthMap",
    "FeatureMap",
    "FrameAsset",
    "Intrinsics",
    "Pose",
    "RegionMap",
    "SequencePair",
    "load_sequence_pair",
    "load_split_dirs",
    "save_sequence_pair",
    "PipelineConfig",
    "run_pipeline",
    "evaluate",
    "mask_to_box",
    "masks_to_gt",
    "SceneDiffError",
    "InputError",
    "MissingFile",
    "ShapeMismatch",
    "InvalidPose",
    "FeatureDimMismatch",
    "EmptyGeometry",
    "SceneMismatch",
    "EmptyMask",
    "InvalidSpec",
    "DecodeError",
    "IoError",
    "NoDstRegions",
    "ModelUnavailable",
    "ExportValidationFailed",
    "__version__",
]

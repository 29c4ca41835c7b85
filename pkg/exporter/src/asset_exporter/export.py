"""The export job: sample, run backbones, write assets, validate by reload."""

from __future__ import annotations

import os
from dataclasses import dataclass

from .backbones import (
    BUILTIN_FEATURES,
    BUILTIN_GEOMETRY,
    BUILTIN_SEGMENTATION,
    feature_backbone,
    geometry_backbone,
    segmentation_backbone,
)
from .errors import ExportValidationFailed, InputError
from .ingest import load_clip
from .masks import resolve_labels
from .writer import ExportedFrame, write_pair


@dataclass(frozen=True)
class ExportJob:
    """One export: two clips in, one validated asset directory out."""

    before: str
    after: str
    out: str
    fps: float = 1.0
    geom_model: str = BUILTIN_GEOMETRY
    feat_model: str = BUILTIN_FEATURES
    seg_model: str = BUILTIN_SEGMENTATION
    source_fps: float = 30.0
    scene_id: str = "export"

    def __post_init__(self):
        if not self.fps > 0:
            raise InputError(f"sampling rate must be positive, got {self.fps}")
        if not self.source_fps > 0:
            raise InputError(f"source frame rate must be positive, got {self.source_fps}")
        if not self.out:
            raise InputError("output root must be a nonempty path")


def validate_export(root: str, expect_before: int | None = None, expect_after: int | None = None):
    """Round-trip the directory through the pipeline's loader.

    The loader is the contract: anything it rejects, the exporter must not
    leave behind as a finished result.
    """
    from scenediff.assets import load_sequence_pair
    from scenediff.errors import SceneDiffError

    try:
        pair = load_sequence_pair(root)
    except SceneDiffError as e:
        raise ExportValidationFailed(f"round-trip load rejected {root}: {e}") from e
    if expect_before is not None and len(pair.before) != expect_before:
        raise ExportValidationFailed(
            f"{root}: wrote {expect_before} before frames, loader sees {len(pair.before)}"
        )
    if expect_after is not None and len(pair.after) != expect_after:
        raise ExportValidationFailed(
            f"{root}: wrote {expect_after} after frames, loader sees {len(pair.after)}"
        )
    return pair


def export(job: ExportJob) -> str:
    """Run the full export and return the output root.

    Backbones resolve before any decoding so a missing model fails fast;
    the geometry pass runs once over the concatenated frame set so both
    videos share one depth scale.
    """
    geometry = geometry_backbone(job.geom_model)
    features = feature_backbone(job.feat_model)
    segmentation = segmentation_backbone(job.seg_model)

    try:
        os.makedirs(job.out, exist_ok=True)
    except OSError as e:
        raise InputError(f"output root {job.out} is not writable: {e}") from None

    before = load_clip(job.before, job.fps, job.source_fps)
    after = load_clip(job.after, job.fps, job.source_fps)

    frames = list(before.frames) + list(after.frames)
    geo = geometry(frames)

    exported: list[ExportedFrame] = []
    for img, g in zip(frames, geo):
        feat = features(img)
        labels = resolve_labels(segmentation(img), img.shape[:2])
        exported.append(
            ExportedFrame(
                depth=g.depth,
                valid=g.valid,
                feat=feat,
                labels=labels,
                fx=g.fx,
                fy=g.fy,
                cx=g.cx,
                cy=g.cy,
                rotation=g.rotation,
                translation=g.translation,
            )
        )

    n_before = len(before.frames)
    write_pair(job.out, job.scene_id, exported[:n_before], exported[n_before:])
    validate_export(job.out, expect_before=n_before, expect_after=len(after.frames))
    return job.out

"""Writes the per-frame asset directory layout the detection pipeline loads.

The format is implemented independently here on purpose: an independent
writer makes the round-trip validation in export() a real contract check
rather than a tautology. Layout:

    root/manifest.json                  {scene_id, n_before, n_after, feat_c}
    root/before/0000/depth.f32          raw little-endian float32, row-major
                     valid.u8           raw uint8 (0/1)
                     feat.f32           raw little-endian float32, Hf*Wf*C
                     regions.i32        raw little-endian int32
                     meta.json          camera intrinsics, pose, shapes
    root/after/0000/...
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ExportedFrame:
    depth: np.ndarray
    valid: np.ndarray
    feat: np.ndarray
    labels: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray


def _write_frame(frame_dir: str, frame_id: int, f: ExportedFrame) -> None:
    os.makedirs(frame_dir, exist_ok=True)
    h, w = f.depth.shape
    fh, fw, fc = f.feat.shape
    with open(os.path.join(frame_dir, "depth.f32"), "wb") as fh_out:
        fh_out.write(np.ascontiguousarray(f.depth, dtype="<f4").tobytes())
    with open(os.path.join(frame_dir, "valid.u8"), "wb") as fh_out:
        fh_out.write(np.ascontiguousarray(f.valid, dtype=np.uint8).tobytes())
    with open(os.path.join(frame_dir, "feat.f32"), "wb") as fh_out:
        fh_out.write(np.ascontiguousarray(f.feat, dtype="<f4").tobytes())
    with open(os.path.join(frame_dir, "regions.i32"), "wb") as fh_out:
        fh_out.write(np.ascontiguousarray(f.labels, dtype="<i4").tobytes())
    meta = {
        "frame_id": int(frame_id),
        "width": int(w),
        "height": int(h),
        "feat_h": int(fh),
        "feat_w": int(fw),
        "feat_c": int(fc),
        "fx": float(f.fx),
        "fy": float(f.fy),
        "cx": float(f.cx),
        "cy": float(f.cy),
        "rotation": [float(x) for x in np.asarray(f.rotation, dtype=np.float64).ravel()],
        "translation": [float(x) for x in np.asarray(f.translation, dtype=np.float64)],
    }
    with open(os.path.join(frame_dir, "meta.json"), "w") as fh_out:
        json.dump(meta, fh_out, indent=2)


def write_pair(
    root: str,
    scene_id: str,
    before: list[ExportedFrame],
    after: list[ExportedFrame],
) -> None:
    os.makedirs(root, exist_ok=True)
    feat_c = {f.feat.shape[2] for f in before + after}
    manifest = {
        "scene_id": scene_id,
        "n_before": len(before),
        "n_after": len(after),
        "feat_c": sorted(feat_c)[0] if feat_c else 0,
    }
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    for side, frames in (("before", before), ("after", after)):
        for i, f in enumerate(frames):
            _write_frame(os.path.join(root, side, f"{i:04d}"), i, f)

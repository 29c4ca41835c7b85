"""Backbone registry with dependency-free built-in baselines.

Real pretrained geometry, feature, and segmentation models plug in by
name; a name without local weights raises ModelUnavailable. The built-in
baselines are deterministic image-statistics stand-ins that exercise the
full export path: a shading-style depth prior with cameras on an arc, a
patch-statistics feature grid at native stride, and a two-granularity
luminance segmentation that emits genuinely overlapping masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ModelUnavailable

BUILTIN_GEOMETRY = "builtin-luma"
BUILTIN_FEATURES = "builtin-patch"
BUILTIN_SEGMENTATION = "builtin-quantize"


def _luma(frame: np.ndarray) -> np.ndarray:
    f = frame.astype(np.float64) / 255.0
    return 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]


def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Camera rotation with x right, y down, z forward, world +z up."""
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(forward @ up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(up, forward)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward], axis=1)


@dataclass(frozen=True)
class FrameGeometry:
    depth: np.ndarray
    valid: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray


class LumaDepthGeometry:
    """Shading-prior depth over the joint frame set, cameras on an arc.

    Depth is normalized against the global luminance range of the whole
    concatenated set, so both videos land in one consistent depth scale;
    this is what makes the pass joint rather than per-frame.
    """

    name = BUILTIN_GEOMETRY
    near = 1.6
    span = 1.2

    def __call__(self, frames: list[np.ndarray]) -> list[FrameGeometry]:
        if not frames:
            return []
        lumas = [_luma(f) for f in frames]
        lo = min(float(l.min()) for l in lumas)
        hi = max(float(l.max()) for l in lumas)
        scale = hi - lo if hi > lo else 1.0

        out = []
        n = len(frames)
        for i, luma in enumerate(lumas):
            h, w = luma.shape
            rel = (luma - lo) / scale
            depth = (self.near + self.span * (1.0 - rel)).astype(np.float32)
            angle = 2.0 * math.pi * i / max(n, 1)
            eye = np.array([3.0 * math.cos(angle), 3.0 * math.sin(angle), 1.0])
            rot = _look_at(eye, np.zeros(3))
            out.append(
                FrameGeometry(
                    depth=depth,
                    valid=np.ones((h, w), dtype=bool),
                    fx=0.9 * w,
                    fy=0.9 * w,
                    cx=(w - 1) / 2.0,
                    cy=(h - 1) / 2.0,
                    rotation=rot,
                    translation=eye.copy(),
                )
            )
        return out


class PatchStatsFeatures:
    """Per-patch color statistics through a fixed orthonormal projection."""

    name = BUILTIN_FEATURES
    patch = 8
    channels = 16

    def __init__(self):
        rng = np.random.default_rng(1318)
        basis, _ = np.linalg.qr(rng.standard_normal((self.channels, 9)))
        self._proj = basis[:, :9]

    def __call__(self, frame: np.ndarray) -> np.ndarray:
        p = self.patch
        f = frame.astype(np.float64) / 255.0
        h, w = f.shape[:2]
        hp, wp = max(1, h // p), max(1, w // p)
        f = f[: hp * p, : wp * p]
        blocks = f.reshape(hp, p, wp, p, 3)
        mean = blocks.mean(axis=(1, 3))
        std = blocks.std(axis=(1, 3))
        luma = 0.299 * blocks[..., 0] + 0.587 * blocks[..., 1] + 0.114 * blocks[..., 2]
        lmean = luma.mean(axis=(1, 3))[..., None]
        lrange = (luma.max(axis=(1, 3)) - luma.min(axis=(1, 3)))[..., None]
        # constant channel keeps every feature vector away from zero norm
        ones = np.ones_like(lmean)
        stats = np.concatenate([mean, std, lmean, lrange, ones], axis=2)
        return (stats @ self._proj.T).astype(np.float32)


class QuantizeSegmentation:
    """Connected components at two luminance granularities.

    Coarse components (above/below the median) act as wholes; components
    of a four-level quantization act as parts and overlap them. Masks are
    ordered by area, largest first, ties by scan order.
    """

    name = BUILTIN_SEGMENTATION
    min_area = 16
    max_masks = 64

    def __call__(self, frame: np.ndarray) -> list[np.ndarray]:
        luma = _luma(frame)
        masks: list[np.ndarray] = []

        coarse = luma > float(np.median(luma))
        for cls in (coarse, ~coarse):
            lab, k = ndimage.label(cls)
            for j in range(1, k + 1):
                m = lab == j
                if int(m.sum()) >= self.min_area:
                    masks.append(m)

        lo, hi = float(luma.min()), float(luma.max())
        span = hi - lo if hi > lo else 1.0
        levels = np.minimum((4 * (luma - lo) / span).astype(np.int32), 3)
        for lv in range(4):
            lab, k = ndimage.label(levels == lv)
            for j in range(1, k + 1):
                m = lab == j
                if int(m.sum()) >= self.min_area:
                    masks.append(m)

        def sort_key(m: np.ndarray):
            ys, xs = np.nonzero(m)
            return (-int(m.sum()), int(ys[0]), int(xs[0]))

        masks.sort(key=sort_key)
        return masks[: self.max_masks]


_GEOMETRY = {BUILTIN_GEOMETRY: LumaDepthGeometry}
_FEATURES = {BUILTIN_FEATURES: PatchStatsFeatures}
_SEGMENTATION = {BUILTIN_SEGMENTATION: QuantizeSegmentation}


def _resolve(table: dict, kind: str, name: str):
    if name not in table:
        raise ModelUnavailable(
            f"{kind} backbone '{name}' has no local weights; built-in options: "
            f"{sorted(table)}"
        )
    return table[name]()


def geometry_backbone(name: str):
    return _resolve(_GEOMETRY, "geometry", name)


def feature_backbone(name: str):
    return _resolve(_FEATURES, "feature", name)


def segmentation_backbone(name: str):
    return _resolve(_SEGMENTATION, "segmentation", name)

"""Geometric core: scene normalization, cross-frame reprojection, voxel pooling.

All poses are camera-to-world. A pixel (x, y) = (column, row) with valid depth
d unprojects to the camera-space point d * K^-1 [x, y, 1]^T and from there to
world space through the pose. Reprojection into another frame composes the
source pose with the inverse of the destination pose, so only relative motion
matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assets import DepthMap, FrameAsset, Pose, SequencePair
from .errors import EmptyGeometry

_EPS_Z = 1e-6
# image-border tolerance; self-reprojection must keep every valid pixel
# in bounds despite rounding in the pose product
_EPS_PIX = 1e-9


def _memo(obj, key: str, compute):
    """Per-instance cache for derived arrays on frozen frames.

    Concurrent recomputation is harmless: every writer stores an identical
    value, so the attribute write is idempotent.
    """
    hit = getattr(obj, key, None)
    if hit is None:
        hit = compute()
        object.__setattr__(obj, key, hit)
    return hit


def _pixel_rays(frame: FrameAsset) -> np.ndarray:
    def compute():
        h, w = frame.shape
        xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
        grid = np.stack([xs, ys, np.ones_like(xs)], axis=-1)
        return grid @ frame.intrinsics.inverse.T

    return _memo(frame, "_memo_rays", compute)


@dataclass(frozen=True)
class NormalizationRecord:
    """Similarity transform applied to a scene: x' = scale * x + offset."""

    scale: float
    offset: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * points + self.offset

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (points - self.offset) / self.scale


def unproject(frame: FrameAsset) -> np.ndarray:
    """World-space point for every pixel, (H, W, 3). Invalid pixels get NaN."""

    def compute():
        cam = _pixel_rays(frame) * frame.depth.values[..., None].astype(np.float64)
        world = cam @ frame.pose.rotation.T + frame.pose.translation
        world[~frame.depth.validity] = np.nan
        return world

    return _memo(frame, "_memo_world", compute)


def normalize_scene(pair: SequencePair) -> tuple[SequencePair, NormalizationRecord]:
    """Rescale both sequences so all observed geometry fits a unit cube.

    The axis-aligned bounding box of every valid unprojected pixel across both
    videos is centered at the origin and scaled so its longest edge spans 2
    units. A degenerate box (single point) keeps scale 1. Raises
    ``EmptyGeometry`` if no frame has a single valid depth pixel.
    """
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    any_valid = False
    for side in ("before", "after"):
        for frame in pair.frames(side):
            pts = unproject(frame)[frame.depth.validity]
            if pts.size:
                any_valid = True
                lo = np.minimum(lo, pts.min(axis=0))
                hi = np.maximum(hi, pts.max(axis=0))
    if not any_valid:
        raise EmptyGeometry("no valid depth pixel in either sequence")

    center = (lo + hi) / 2.0
    extent = float(np.max(hi - lo))
    scale = 1.0 if extent < 1e-9 else 2.0 / extent
    record = NormalizationRecord(scale=scale, offset=-scale * center)

    def rescale(frame: FrameAsset) -> FrameAsset:
        pose = Pose(
            rotation=frame.pose.rotation,
            translation=scale * (frame.pose.translation - center),
        )
        depth = DepthMap(
            values=(frame.depth.values.astype(np.float64) * scale).astype(np.float32),
            validity=frame.depth.validity,
        )
        return FrameAsset(
            frame_id=frame.frame_id,
            intrinsics=frame.intrinsics,
            pose=pose,
            depth=depth,
            features=frame.features,
            regions=frame.regions,
        )

    normalized = SequencePair(
        scene_id=pair.scene_id,
        before=tuple(rescale(f) for f in pair.before),
        after=tuple(rescale(f) for f in pair.after),
    )
    return normalized, record


@dataclass(frozen=True)
class Reprojection:
    """Dense flow of src pixels into dst: continuous target pixels plus the
    depth each point would have in dst's camera. ``in_bounds`` marks pixels
    that are src-valid, in front of dst's camera, and land inside dst's image.
    """

    u: np.ndarray
    v: np.ndarray
    depth_in_dst: np.ndarray
    in_bounds: np.ndarray

    def nearest_pixel(self) -> tuple[np.ndarray, np.ndarray]:
        """Round (u, v) to the nearest integer pixel, clipped to the image."""
        h, w = self.u.shape
        ui = np.clip(np.rint(self.u).astype(np.int64), 0, self.u.shape[1] - 1)
        vi = np.clip(np.rint(self.v).astype(np.int64), 0, self.v.shape[0] - 1)
        return ui, vi


def reproject(src: FrameAsset, dst: FrameAsset) -> Reprojection:
    """Map every valid src pixel through src depth into dst's image plane."""
    cam = _pixel_rays(src) * src.depth.values[..., None].astype(np.float64)

    rel = dst.pose.inverse_matrix @ src.pose.matrix
    pts = cam @ rel[:3, :3].T + rel[:3, 3]
    z = pts[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = dst.intrinsics.fx * pts[..., 0] / z + dst.intrinsics.cx
        v = dst.intrinsics.fy * pts[..., 1] / z + dst.intrinsics.cy

    dh, dw = dst.shape
    in_bounds = (
        src.depth.validity
        & (z > _EPS_Z)
        & (u >= -_EPS_PIX)
        & (u <= dw - 1 + _EPS_PIX)
        & (v >= -_EPS_PIX)
        & (v <= dh - 1 + _EPS_PIX)
    )
    u = np.where(in_bounds, np.clip(u, 0.0, dw - 1.0), 0.0)
    v = np.where(in_bounds, np.clip(v, 0.0, dh - 1.0), 0.0)
    z = np.where(in_bounds, z, 0.0)
    return Reprojection(u=u, v=v, depth_in_dst=z, in_bounds=in_bounds)


def _directed_covisible_fraction(src: FrameAsset, dst: FrameAsset, slack: float) -> float:
    """Fraction of src's valid pixels that land on observed, unoccluded dst
    surface. Occlusion check: the reprojected depth may not exceed dst's
    observed depth by more than ``slack``."""
    n_valid = int(src.depth.validity.sum())
    if n_valid == 0:
        return 0.0
    rp = reproject(src, dst)
    ui, vi = rp.nearest_pixel()
    dst_valid = dst.depth.validity[vi, ui]
    dst_depth = dst.depth.values[vi, ui].astype(np.float64)
    visible = rp.in_bounds & dst_valid & (rp.depth_in_dst <= dst_depth + slack)
    return float(visible.sum()) / n_valid


def covisibility(a: FrameAsset, b: FrameAsset, slack: float = 0.01) -> float:
    """Symmetric co-visibility score in [0, 1]: mean of both directed fractions.

    ``slack`` is an occlusion tolerance in depth units; the default assumes
    unit-cube normalized scenes.
    """
    return 0.5 * (
        _directed_covisible_fraction(a, b, slack) + _directed_covisible_fraction(b, a, slack)
    )


# --- voxel grid over the normalized cube -------------------------------------

# Voxel indices are packed into one int64 key for unique/bincount grouping.
# With offset 2**19 per axis and stride 2**20, coordinates stay positive and
# collision-free for any |index| < 524288, far beyond a unit-cube grid.
_PACK_OFFSET = 1 << 19
_PACK_STRIDE = 1 << 20


def voxel_indices(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Integer voxel coordinates, (N, 3). The cube [-1, 1] maps to index 0
    at -1 so grids are stable across calls."""
    return np.floor((points + 1.0) / voxel_size).astype(np.int64)


def _pack(indices: np.ndarray) -> np.ndarray:
    shifted = indices + _PACK_OFFSET
    if shifted.size and (shifted.min() < 0 or shifted.max() >= _PACK_STRIDE):
        raise ValueError("voxel index out of packing range; voxel size too small for scene")
    return (shifted[:, 0] * _PACK_STRIDE + shifted[:, 1]) * _PACK_STRIDE + shifted[:, 2]


def voxelize(points: np.ndarray, values: np.ndarray, voxel_size: float) -> dict[tuple[int, int, int], float]:
    """Mean of ``values`` per occupied voxel."""
    if points.shape[0] == 0:
        return {}
    idx = voxel_indices(points, voxel_size)
    keys = _pack(idx)
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=values.astype(np.float64), minlength=uniq.size)
    means = sums / counts
    coords = np.empty((uniq.size, 3), dtype=np.int64)
    rem = uniq
    coords[:, 2] = rem % _PACK_STRIDE
    rem = rem // _PACK_STRIDE
    coords[:, 1] = rem % _PACK_STRIDE
    coords[:, 0] = rem // _PACK_STRIDE
    coords -= _PACK_OFFSET
    return {
        (int(c[0]), int(c[1]), int(c[2])): float(m) for c, m in zip(coords, means)
    }


def pooled_voxel_means(points: np.ndarray, values: np.ndarray, voxel_size: float) -> np.ndarray:
    """Per-point lookup of the mean value of that point's voxel.

    Equivalent to ``voxelize`` followed by a per-point dict lookup but done
    with one grouping pass.
    """
    if points.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    keys = _pack(voxel_indices(points, voxel_size))
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=values.astype(np.float64), minlength=uniq.size)
    return (sums / counts)[inverse]

"""Per-frame scene assets and their on-disk format.

A sequence pair lives in one directory::

    root/manifest.json                  {scene_id, n_before, n_after, feat_c}
    root/before/0000/depth.f32          raw little-endian float32, row-major, H*W
                    valid.u8            raw uint8 (0/1), H*W
                    feat.f32            raw little-endian float32, Hf*Wf*C
                    regions.i32         raw little-endian int32, H*W
                    meta.json           per-frame camera + shape record
    root/after/0000/...                 same layout

``meta.json`` keys: frame_id, width, height, feat_h, feat_w, feat_c,
fx, fy, cx, cy, rotation (9 floats, row-major), translation (3 floats).

Arrays are stored raw so a save/load round trip is bit-exact. Validation is
total: any malformed input raises a typed error before a ``SequencePair``
is handed out.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FeatureDimMismatch,
    InvalidPose,
    IoError,
    MissingFile,
    ShapeMismatch,
)

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels. Pixel (x, y) means column x, row y."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ShapeMismatch(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ShapeMismatch(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]], dtype=np.float64
        )

    @property
    def inverse(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Pose:
    """Camera-to-world transform: world = rotation @ cam + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3):
            raise InvalidPose(f"rotation must be 3x3, got {r.shape}")
        if t.shape != (3,):
            raise InvalidPose(f"translation must be a 3-vector, got {t.shape}")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise InvalidPose("pose contains non-finite entries")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise InvalidPose("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise InvalidPose(f"rotation determinant {np.linalg.det(r):.6f} != 1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def inverse_matrix(self) -> np.ndarray:
        # Analytic inverse of a rigid transform.
        m = np.eye(4)
        m[:3, :3] = self.rotation.T
        m[:3, 3] = -self.rotation.T @ self.translation
        return m


@dataclass(frozen=True)
class DepthMap:
    """Depth along camera Z, with an explicit validity grid (no sentinels)."""

    values: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        m = np.ascontiguousarray(np.asarray(self.validity, dtype=bool))
        if v.ndim != 2:
            raise ShapeMismatch(f"depth must be HxW, got shape {v.shape}")
        if m.shape != v.shape:
            raise ShapeMismatch(f"validity shape {m.shape} != depth shape {v.shape}")
        masked = v[m]
        if masked.size and (not np.all(np.isfinite(masked)) or np.any(masked < 0)):
            raise ShapeMismatch("valid depth entries must be finite and nonnegative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "validity", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class FeatureMap:
    """Patch-level feature grid; resolution may differ from the image."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if v.ndim != 3:
            raise ShapeMismatch(f"features must be Hf x Wf x C, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ShapeMismatch("feature map contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.values.shape[:2]


@dataclass(frozen=True)
class RegionMap:
    """Disjoint segmentation as a label grid; 0 = unassigned background."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int32))
        if lab.ndim != 2:
            raise ShapeMismatch(f"region labels must be HxW, got shape {lab.shape}")
        if lab.size and lab.min() < 0:
            raise ShapeMismatch("region labels must be nonnegative")
        object.__setattr__(self, "labels", lab)

    def region_list(self) -> list[tuple[int, int]]:
        """(label, pixel count) for every nonzero label, ascending."""
        labels, counts = np.unique(self.labels, return_counts=True)
        return [(int(l), int(c)) for l, c in zip(labels, counts) if l != 0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class FrameAsset:
    frame_id: int
    intrinsics: Intrinsics
    pose: Pose
    depth: DepthMap
    features: FeatureMap
    regions: RegionMap

    def __post_init__(self):
        hw = (self.intrinsics.height, self.intrinsics.width)
        if self.depth.shape != hw:
            raise ShapeMismatch(
                f"frame {self.frame_id}: depth shape {self.depth.shape} != intrinsics {hw}"
            )
        if self.regions.shape != hw:
            raise ShapeMismatch(
                f"frame {self.frame_id}: region shape {self.regions.shape} != intrinsics {hw}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class SequencePair:
    scene_id: str
    before: tuple[FrameAsset, ...]
    after: tuple[FrameAsset, ...]

    def __post_init__(self):
        object.__setattr__(self, "before", tuple(self.before))
        object.__setattr__(self, "after", tuple(self.after))
        if not self.before or not self.after:
            raise ShapeMismatch("both sequences need at least one frame")
        dims = {f.features.channels for f in self.before + self.after}
        if len(dims) != 1:
            raise FeatureDimMismatch(f"feature dimension differs across frames: {sorted(dims)}")

    @property
    def feat_dim(self) -> int:
        return self.before[0].features.channels

    def frames(self, side: str) -> tuple[FrameAsset, ...]:
        if side == "before":
            return self.before
        if side == "after":
            return self.after
        raise ValueError(f"side must be 'before' or 'after', got {side!r}")

    @property
    def is_two_image(self) -> bool:
        return len(self.before) == 1 and len(self.after) == 1


# --- on-disk format ---------------------------------------------------------

_DEPTH = "depth.f32"
_VALID = "valid.u8"
_FEAT = "feat.f32"
_REGIONS = "regions.i32"
_META = "meta.json"


def _read_json(path: str) -> dict:
    if not os.path.isfile(path):
        raise MissingFile(os.path.basename(path))
    with open(path) as f:
        return json.load(f)


def _read_raw(path: str, dtype: str, shape: tuple[int, ...]) -> np.ndarray:
    if not os.path.isfile(path):
        raise MissingFile(os.path.basename(path))
    data = np.fromfile(path, dtype=np.dtype(dtype))
    expected = int(np.prod(shape))
    if data.size != expected:
        raise ShapeMismatch(
            f"{os.path.basename(path)}: {data.size} entries on disk, manifest declares {expected}"
        )
    return data.reshape(shape)


def _load_frame(frame_dir: str, feat_c: int) -> FrameAsset:
    meta = _read_json(os.path.join(frame_dir, _META))
    w, h = int(meta["width"]), int(meta["height"])
    fh, fw, fc = int(meta["feat_h"]), int(meta["feat_w"]), int(meta["feat_c"])
    if fc != feat_c:
        raise FeatureDimMismatch(
            f"{frame_dir}: frame feat_c={fc} but manifest declares {feat_c}"
        )
    intr = Intrinsics(
        fx=float(meta["fx"]), fy=float(meta["fy"]),
        cx=float(meta["cx"]), cy=float(meta["cy"]),
        width=w, height=h,
    )
    rotation = np.array(meta["rotation"], dtype=np.float64)
    if rotation.size != 9:
        raise InvalidPose(f"{frame_dir}: rotation must have 9 entries")
    pose = Pose(rotation=rotation.reshape(3, 3), translation=np.array(meta["translation"], dtype=np.float64))
    depth = _read_raw(os.path.join(frame_dir, _DEPTH), "<f4", (h, w))
    valid = _read_raw(os.path.join(frame_dir, _VALID), "u1", (h, w)).astype(bool)
    feat = _read_raw(os.path.join(frame_dir, _FEAT), "<f4", (fh, fw, fc))
    regions = _read_raw(os.path.join(frame_dir, _REGIONS), "<i4", (h, w))
    return FrameAsset(
        frame_id=int(meta["frame_id"]),
        intrinsics=intr,
        pose=pose,
        depth=DepthMap(values=depth, validity=valid),
        features=FeatureMap(values=feat),
        regions=RegionMap(labels=regions),
    )


def load_sequence_pair(root: str) -> SequencePair:
    """Load and fully validate a sequence pair from its asset directory."""
    manifest = _read_json(os.path.join(root, "manifest.json"))
    feat_c = int(manifest["feat_c"])
    sides = []
    for side, count_key in (("before", "n_before"), ("after", "n_after")):
        n = int(manifest[count_key])
        frames = []
        for i in range(n):
            frame_dir = os.path.join(root, side, f"{i:04d}")
            if not os.path.isdir(frame_dir):
                raise MissingFile(f"{side}/{i:04d}")
            frames.append(_load_frame(frame_dir, feat_c))
        sides.append(tuple(frames))
    return SequencePair(scene_id=str(manifest["scene_id"]), before=sides[0], after=sides[1])


def load_split_dirs(before_dir: str, after_dir: str, scene_id: str = "scene") -> SequencePair:
    """Load a pair from two bare frame directories (no manifest).

    Frame subdirectories are the zero-padded indices 0000, 0001, ... with no
    gaps; the feature dimension is taken from the first frame of the before
    side and enforced on every other frame.
    """

    def frame_dirs(root: str) -> list[str]:
        if not os.path.isdir(root):
            raise MissingFile(root)
        out = []
        i = 0
        while os.path.isdir(os.path.join(root, f"{i:04d}")):
            out.append(os.path.join(root, f"{i:04d}"))
            i += 1
        if not out:
            raise MissingFile(f"{root}/0000")
        return out

    before_paths = frame_dirs(before_dir)
    first_meta = _read_json(os.path.join(before_paths[0], _META))
    feat_c = int(first_meta["feat_c"])
    before = tuple(_load_frame(d, feat_c) for d in before_paths)
    after = tuple(_load_frame(d, feat_c) for d in frame_dirs(after_dir))
    return SequencePair(scene_id=scene_id, before=before, after=after)


def _save_frame(frame: FrameAsset, frame_dir: str) -> None:
    os.makedirs(frame_dir, exist_ok=True)
    intr = frame.intrinsics
    meta = {
        "frame_id": frame.frame_id,
        "width": intr.width,
        "height": intr.height,
        "feat_h": frame.features.grid_shape[0],
        "feat_w": frame.features.grid_shape[1],
        "feat_c": frame.features.channels,
        "fx": intr.fx,
        "fy": intr.fy,
        "cx": intr.cx,
        "cy": intr.cy,
        "rotation": [float(x) for x in frame.pose.rotation.reshape(-1)],
        "translation": [float(x) for x in frame.pose.translation],
    }
    with open(os.path.join(frame_dir, _META), "w") as f:
        json.dump(meta, f, indent=2)
    frame.depth.values.astype("<f4").tofile(os.path.join(frame_dir, _DEPTH))
    frame.depth.validity.astype("u1").tofile(os.path.join(frame_dir, _VALID))
    frame.features.values.astype("<f4").tofile(os.path.join(frame_dir, _FEAT))
    frame.regions.labels.astype("<i4").tofile(os.path.join(frame_dir, _REGIONS))


def save_sequence_pair(pair: SequencePair, root: str) -> None:
    """Write a pair to disk so that ``load_sequence_pair(root)`` reproduces it bit-exactly."""
    try:
        os.makedirs(root, exist_ok=True)
        manifest = {
            "scene_id": pair.scene_id,
            "n_before": len(pair.before),
            "n_after": len(pair.after),
            "feat_c": pair.feat_dim,
        }
        with open(os.path.join(root, "manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2)
        for side in ("before", "after"):
            for i, frame in enumerate(pair.frames(side)):
                _save_frame(frame, os.path.join(root, side, f"{i:04d}"))
    except OSError as e:
        raise IoError(str(e)) from e

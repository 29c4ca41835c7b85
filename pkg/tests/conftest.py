"""Shared builders for hand-sized camera frames and scene fixtures."""

import numpy as np
import pytest

from scenediff.assets import (
    DepthMap,
    FeatureMap,
    FrameAsset,
    Intrinsics,
    Pose,
    RegionMap,
    SequencePair,
)
from scenediff.synth import generate, random_scene


def make_intrinsics(width=32, height=24, f=30.0):
    return Intrinsics(
        fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height
    )


def make_pose(translation=(0.0, 0.0, 0.0), rotation=None):
    r = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    return Pose(rotation=r, translation=np.asarray(translation, dtype=np.float64))


def make_frame(
    frame_id=0,
    width=32,
    height=24,
    f=30.0,
    depth=None,
    valid=None,
    labels=None,
    features=None,
    feat_c=8,
    downsample=4,
    pose=None,
    intrinsics=None,
):
    """Frame with flat depth 5.0 and a single unit feature unless overridden."""
    intr = intrinsics if intrinsics is not None else make_intrinsics(width, height, f)
    h, w = intr.height, intr.width
    if depth is None:
        depth = np.full((h, w), 5.0, dtype=np.float32)
    else:
        depth = np.asarray(depth, dtype=np.float32)
    if valid is None:
        valid = np.ones_like(depth, dtype=bool)
    if labels is None:
        labels = np.zeros((h, w), dtype=np.int32)
    if features is None:
        features = np.zeros((h // downsample, w // downsample, feat_c), dtype=np.float32)
        features[..., 0] = 1.0
    return FrameAsset(
        frame_id=frame_id,
        intrinsics=intr,
        pose=pose if pose is not None else make_pose(),
        depth=DepthMap(values=depth, validity=valid),
        features=features if isinstance(features, FeatureMap) else FeatureMap(values=features),
        regions=RegionMap(labels=labels),
    )


def square_labels(height=24, width=32, r0=8, r1=16, c0=10, c1=20, label=1):
    """Label grid with one rectangular region, rows r0:r1 and cols c0:c1."""
    labels = np.zeros((height, width), dtype=np.int32)
    labels[r0:r1, c0:c1] = label
    return labels


def unit_axis_features(h_cells, w_cells, feat_c, axis):
    feat = np.zeros((h_cells, w_cells, feat_c), dtype=np.float32)
    feat[..., axis] = 1.0
    return feat


def make_pair(before_frames, after_frames, scene_id="test"):
    return SequencePair(scene_id=scene_id, before=tuple(before_frames), after=tuple(after_frames))


@pytest.fixture(scope="session")
def small_scene():
    """One generated tabletop scene reused by read-only tests."""
    spec = random_scene(seed=5, n_objects=5, n_changes=1, n_frames=3)
    pair, gt = generate(spec)
    return spec, pair, gt

"""Overlay renderings of detections and score-colored point clouds.

Change types use the fixed color map red=Removed, green=Added, blue=Moved.
Overlays draw the depth map as the background, region boundaries as thin
gray lines, and each detection as a filled square with a contrasting rim.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .assets import FrameAsset, SequencePair
from .errors import IoError
from .geometry import unproject

TYPE_COLORS = {
    "Removed": (255, 51, 51),
    "Added": (51, 204, 102),
    "Moved": (0, 153, 255),
}
_FALLBACK_COLOR = (230, 230, 60)


def depth_background(frame: FrameAsset) -> np.ndarray:
    """Grayscale u8 render of the depth map; invalid pixels go black."""
    d = frame.depth.values.astype(np.float64)
    valid = frame.depth.validity
    out = np.zeros(frame.shape, dtype=np.uint8)
    if valid.any():
        lo, hi = float(d[valid].min()), float(d[valid].max())
        span = hi - lo if hi > lo else 1.0
        shade = 230.0 - 180.0 * (d - lo) / span
        out[valid] = np.clip(shade[valid], 0, 255).astype(np.uint8)
    return out


def region_boundaries(labels: np.ndarray) -> np.ndarray:
    """Pixels whose right or bottom neighbor carries a different label."""
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    edge[:-1, :] |= labels[:-1, :] != labels[1:, :]
    return edge


def _stamp(img: np.ndarray, x: float, y: float, color, half: int = 3) -> None:
    h, w = img.shape[:2]
    cx, cy = int(round(x)), int(round(y))
    y0, y1 = max(cy - half - 1, 0), min(cy + half + 2, h)
    x0, x1 = max(cx - half - 1, 0), min(cx + half + 2, w)
    img[y0:y1, x0:x1] = (20, 20, 20)
    y0, y1 = max(cy - half, 0), min(cy + half + 1, h)
    x0, x1 = max(cx - half, 0), min(cx + half + 1, w)
    img[y0:y1, x0:x1] = color


def overlay_frame(frame: FrameAsset, points: list[tuple[float, float, str]]) -> Image.Image:
    """One annotated frame: points are (x, y, change_type)."""
    gray = depth_background(frame)
    img = np.stack([gray, gray, gray], axis=-1)
    img[region_boundaries(frame.regions.labels)] = (120, 120, 120)
    for x, y, change_type in points:
        _stamp(img, x, y, TYPE_COLORS.get(change_type, _FALLBACK_COLOR))
    return Image.fromarray(img)


def write_overlays(pair: SequencePair, detections: dict, out_dir: str) -> list[str]:
    """One PNG per frame of both videos; returns the written paths."""
    by_frame: dict[tuple[str, int], list[tuple[float, float, str]]] = {}
    for obj in detections.get("objects", []):
        for det in obj["detections"]:
            key = (det["video"], int(det["frame_id"]))
            by_frame.setdefault(key, []).append(
                (float(det["x"]), float(det["y"]), obj.get("change_type"))
            )
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        for side in ("before", "after"):
            for frame in pair.frames(side):
                img = overlay_frame(frame, by_frame.get((side, frame.frame_id), []))
                path = os.path.join(out_dir, f"{side}_{frame.frame_id:04d}.png")
                img.save(path)
                paths.append(path)
    except OSError as e:
        raise IoError(str(e)) from e
    return paths


def _score_to_color(t: np.ndarray) -> np.ndarray:
    """Low scores map to cool blue, high scores to warm red."""
    t = np.clip(t, 0.0, 1.0)
    r = np.clip(2.0 * t, 0, 1)
    b = np.clip(2.0 * (1.0 - t), 0, 1)
    g = 1.0 - np.abs(2.0 * t - 1.0)
    return (np.stack([r, g, b], axis=-1) * 255).astype(np.uint8)


def write_score_cloud(
    pair: SequencePair,
    detections: dict,
    path: str,
    max_points_per_frame: int = 4000,
) -> str:
    """ASCII point cloud with per-point score colorization.

    Every valid pixel contributes a world point. A pixel belonging to a
    region that holds a detection point is colored by that object's
    confidence (normalized over the file); everything else is cool blue.
    Format: the PLY header declares vertex count and x/y/z float plus
    r/g/b uchar properties, then one vertex per line. Frames are subsampled
    by a fixed stride so files stay small.
    """
    frame_conf: dict[tuple[str, int], list[tuple[float, float, float]]] = {}
    for obj in detections.get("objects", []):
        conf = float(obj.get("confidence", 0.0))
        for det in obj["detections"]:
            key = (det["video"], int(det["frame_id"]))
            frame_conf.setdefault(key, []).append((float(det["x"]), float(det["y"]), conf))

    confs = [c for pts in frame_conf.values() for _x, _y, c in pts]
    lo = min(confs) if confs else 0.0
    hi = max(confs) if confs else 1.0
    span = hi - lo if hi > lo else 1.0

    rows: list[tuple[float, float, float, int, int, int]] = []
    for side in ("before", "after"):
        for frame in pair.frames(side):
            world = unproject(frame)
            labels = frame.regions.labels
            score_img = np.zeros(frame.shape, dtype=np.float64)
            for x, y, conf in frame_conf.get((side, frame.frame_id), []):
                xi = int(np.clip(round(x), 0, frame.shape[1] - 1))
                yi = int(np.clip(round(y), 0, frame.shape[0] - 1))
                lab = labels[yi, xi]
                t = 0.5 + 0.5 * (conf - lo) / span
                score_img[labels == lab] = np.maximum(score_img[labels == lab], t)
            sel = frame.depth.validity
            pts = world[sel]
            cols = _score_to_color(score_img[sel])
            stride = max(1, pts.shape[0] // max_points_per_frame)
            for p, c in zip(pts[::stride], cols[::stride]):
                rows.append(
                    (float(p[0]), float(p[1]), float(p[2]), int(c[0]), int(c[1]), int(c[2]))
                )
    try:
        with open(path, "w") as f:
            f.write("ply\nformat ascii 1.0\n")
            f.write(f"element vertex {len(rows)}\n")
            for ax in "xyz":
                f.write(f"property float {ax}\n")
            for ch in ("red", "green", "blue"):
                f.write(f"property uchar {ch}\n")
            f.write("end_header\n")
            for x, y, z, r, g, b in rows:
                f.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")
    except OSError as e:
        raise IoError(str(e)) from e
    return path

"""Clip ingestion and rate sampling.

A clip is either a video file (decoded with OpenCV) or a directory of
image frames (decoded with Pillow, ordered by filename, timed by a
declared source rate). Sampling to the job's rate happens here, before
any model runs, so every downstream stage sees only the kept frames.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DecodeError

_IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class SampledClip:
    """Frames kept after rate sampling, with their sample timestamps."""

    frames: tuple[np.ndarray, ...]
    timestamps: tuple[float, ...]
    duration: float
    source: str

    def __len__(self) -> int:
        return len(self.frames)


def sample_indices(n_source: int, source_fps: float, fps: float) -> list[int]:
    """Source frame indices at times 0, 1/fps, 2/fps, ... inside the clip.

    Half-up rounding keeps the choice platform-independent; an index that
    rounds past the end clamps to the last frame rather than dropping the
    sample, so the count stays within one of duration * fps.
    """
    if n_source <= 0:
        return []
    duration = n_source / source_fps
    out = []
    k = 0
    while k / fps < duration:
        idx = int(k / fps * source_fps + 0.5)
        out.append(min(idx, n_source - 1))
        k += 1
    return out


def read_frame_dir(path: str, fps: float, source_fps: float) -> SampledClip:
    """Sample an image-file directory declared to run at source_fps."""
    try:
        names = sorted(
            n for n in os.listdir(path) if os.path.splitext(n)[1].lower() in _IMAGE_EXTS
        )
    except OSError as e:
        raise DecodeError(f"cannot list frame directory {path}: {e}") from None
    if not names:
        raise DecodeError(f"no image frames in {path}")

    from PIL import Image

    targets = sample_indices(len(names), source_fps, fps)
    frames: list[np.ndarray] = []
    cache_idx = -1
    cache_img = None
    for idx in targets:
        if idx != cache_idx:
            full = os.path.join(path, names[idx])
            try:
                with Image.open(full) as im:
                    cache_img = np.asarray(im.convert("RGB"), dtype=np.uint8)
            except Exception as e:
                raise DecodeError(f"cannot decode {full}: {e}") from None
            cache_idx = idx
        frames.append(cache_img)
    stamps = tuple(k / fps for k in range(len(targets)))
    return SampledClip(tuple(frames), stamps, len(names) / source_fps, path)


def read_video(path: str, fps: float) -> SampledClip:
    """Sample a video file at the given rate using its container frame rate."""
    import cv2

    cap = cv2.VideoCapture(path)
    if not cap.isOpened():
        raise DecodeError(f"cannot open video {path}")
    src_fps = float(cap.get(cv2.CAP_PROP_FPS) or 0.0)

    # count without decoding; containers misreport CAP_PROP_FRAME_COUNT
    n = 0
    while cap.grab():
        n += 1
    cap.release()
    if n == 0:
        raise DecodeError(f"no decodable frames in {path}")
    if src_fps <= 0:
        raise DecodeError(f"{path} reports no frame rate; cannot time-sample")

    targets = sample_indices(n, src_fps, fps)
    wanted = set(targets)
    decoded: dict[int, np.ndarray] = {}
    cap = cv2.VideoCapture(path)
    i = 0
    while i <= max(targets):
        if not cap.grab():
            break
        if i in wanted:
            ok, bgr = cap.retrieve()
            if not ok:
                cap.release()
                raise DecodeError(f"frame {i} of {path} failed to decode")
            decoded[i] = np.ascontiguousarray(bgr[:, :, ::-1])
        i += 1
    cap.release()
    if set(decoded) != wanted:
        raise DecodeError(f"{path} ended early; expected frame {max(wanted)}")

    frames = tuple(decoded[idx] for idx in targets)
    stamps = tuple(k / fps for k in range(len(targets)))
    return SampledClip(frames, stamps, n / src_fps, path)


def load_clip(path: str, fps: float, source_fps: float = 30.0) -> SampledClip:
    """Dispatch on path type: directory of frames or a video file."""
    if os.path.isdir(path):
        return read_frame_dir(path, fps, source_fps)
    if os.path.isfile(path):
        return read_video(path, fps)
    raise DecodeError(f"no such clip: {path}")

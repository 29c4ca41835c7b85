import numpy as np
import pytest
from PIL import Image


def paint_frame(i, width=64, height=48, square_x=20, with_square=True):
    """Gradient background plus an optional bright square that jitters."""
    img = np.zeros((height, width, 3), np.uint8)
    img[:, :, 0] = np.linspace(40, 160, width, dtype=np.uint8)[None, :]
    img[:, :, 1] = 90
    img[:, :, 2] = np.linspace(60, 120, height, dtype=np.uint8)[:, None]
    if with_square:
        x = square_x + i % 3
        img[10:26, x : x + 16] = (230, 220, 40)
    return img


def write_frame_dir(path, n, **kw):
    path.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        Image.fromarray(paint_frame(i, **kw)).save(path / f"f{i:04d}.png")
    return path


@pytest.fixture(scope="session")
def clip_pair(tmp_path_factory):
    """Sixty frames at a declared 2 fps: a 30-second clip per video."""
    root = tmp_path_factory.mktemp("clips")
    before = write_frame_dir(root / "before", 60)
    after = write_frame_dir(root / "after", 60, with_square=False)
    return before, after

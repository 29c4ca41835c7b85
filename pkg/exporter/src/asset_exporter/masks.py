"""Overlap resolution: possibly-overlapping masks to one disjoint label map."""

from __future__ import annotations

import numpy as np


def resolve_labels(masks: list[np.ndarray], shape: tuple[int, int]) -> np.ndarray:
    """Disjoint int32 label grid from overlapping binary masks.

    A pixel claimed by several masks goes to the smallest one by area
    (parts beat the wholes that contain them); area ties go to the
    earliest mask in the input. Masks that lose every pixel are dropped
    and the survivors are renumbered 1..k in input order. Pixels no mask
    claims stay 0.
    """
    lab = np.zeros(shape, dtype=np.int32)
    for m in masks:
        if m.dtype != bool or m.shape != tuple(shape):
            raise ValueError(f"mask must be bool {tuple(shape)}, got {m.dtype} {m.shape}")

    # paint large areas first so smaller ones overwrite; among equal areas
    # the lower input index paints last and therefore wins
    order = sorted(range(len(masks)), key=lambda i: (-int(masks[i].sum()), -i))
    for i in order:
        lab[masks[i]] = i + 1

    survivors = [i + 1 for i in range(len(masks)) if bool((lab == i + 1).any())]
    out = np.zeros_like(lab)
    for new, old in enumerate(survivors, start=1):
        out[lab == old] = new
    return out

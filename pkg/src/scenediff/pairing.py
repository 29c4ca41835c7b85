"""Cross-video frame pairing by co-visibility.

Every frame in each video must be paired with at least one frame of the other
video. A pair is kept when its co-visibility clears the threshold; a frame
with no qualifying partner falls back to its single best partner so no frame
is dropped from scoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assets import SequencePair
from .geometry import covisibility


@dataclass(frozen=True)
class FramePairSet:
    """Selected (before_index, after_index) pairs with their co-visibility."""

    pairs: tuple[tuple[int, int], ...]
    scores: tuple[float, ...]

    def by_before(self) -> dict[int, list[int]]:
        grouped: dict[int, list[int]] = {}
        for b, a in self.pairs:
            grouped.setdefault(b, []).append(a)
        return grouped

    def by_after(self) -> dict[int, list[int]]:
        grouped: dict[int, list[int]] = {}
        for b, a in self.pairs:
            grouped.setdefault(a, []).append(b)
        return grouped

    def __len__(self) -> int:
        return len(self.pairs)


def covisibility_matrix(pair: SequencePair, slack: float = 0.01) -> np.ndarray:
    """(n_before, n_after) matrix of symmetric co-visibility scores."""
    nb, na = len(pair.before), len(pair.after)
    c = np.zeros((nb, na), dtype=np.float64)
    for i, fb in enumerate(pair.before):
        for j, fa in enumerate(pair.after):
            c[i, j] = covisibility(fb, fa, slack)
    return c


def pairs_from_matrix(matrix: np.ndarray, threshold: float = 0.5) -> list[tuple[int, int]]:
    """Frame index pairs to score, from a precomputed co-visibility matrix.

    Each before frame keeps every after frame above the threshold, or its
    argmax partner when none qualifies; the same rule runs with roles swapped
    so both videos are covered. Argmax ties go to the lowest index. Output is
    deduplicated and sorted.
    """
    nb, na = matrix.shape
    chosen: set[tuple[int, int]] = set()
    for i in range(nb):
        row = matrix[i]
        above = np.nonzero(row > threshold)[0]
        if above.size:
            chosen.update((i, int(j)) for j in above)
        else:
            chosen.add((i, int(np.argmax(row))))
    for j in range(na):
        col = matrix[:, j]
        above = np.nonzero(col > threshold)[0]
        if above.size:
            chosen.update((int(i), j) for i in above)
        else:
            chosen.add((int(np.argmax(col)), j))
    return sorted(chosen)


def select_pairs(
    pair: SequencePair,
    threshold: float = 0.5,
    slack: float = 0.01,
    matrix: np.ndarray | None = None,
) -> FramePairSet:
    """Pick the before/after frame pairs to score.

    ``matrix`` may be supplied when the co-visibility matrix was already
    computed (e.g. in parallel); otherwise it is computed here.
    """
    if matrix is None:
        matrix = covisibility_matrix(pair, slack)
    selected = pairs_from_matrix(matrix, threshold)
    return FramePairSet(
        pairs=tuple(selected),
        scores=tuple(float(matrix[b, a]) for b, a in selected),
    )

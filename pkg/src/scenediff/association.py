"""From per-pair region scores to scene-level changed objects.

Stages: per-frame score averaging over a frame's pairs, voxel-consistent
re-scoring across frames, maximum-entropy thresholding, greedy cross-frame
merging into objects per side, and cross-side change-type classification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .assets import FrameAsset
from .geometry import pooled_voxel_means, unproject

SIGMA_GEO = 0.02
SIGMA_MERGE = 1.4
TAU_SIM = 0.7
VOXEL_SIZE = 0.02
KAPUR_BINS = 256
FIXED_TAU = 0.2


def average_frame_scores(
    fused: dict[tuple[str, int, int], dict[int, float]],
    sides: tuple[str, ...] = ("before", "after"),
) -> dict[tuple[str, int], dict[int, float]]:
    """Mean fused score per region over all pairs with that frame as source."""
    grouped: dict[tuple[str, int], list[dict[int, float]]] = {}
    for (side, src_idx, _dst_idx), region_scores in sorted(fused.items()):
        grouped.setdefault((side, src_idx), []).append(region_scores)
    averaged: dict[tuple[str, int], dict[int, float]] = {}
    for key, maps in grouped.items():
        labels = sorted(maps[0])
        averaged[key] = {
            lab: float(np.mean([m[lab] for m in maps])) for lab in labels
        }
    return averaged


def voxel_consistency(
    frames: tuple[FrameAsset, ...],
    frame_scores: dict[int, dict[int, float]],
    voxel_size: float = VOXEL_SIZE,
) -> dict[int, dict[int, float]]:
    """Share scores between 3D-co-located pixels of one side's frames.

    Every region pixel carries its region's averaged score; all pixels are
    voxelized together; each region's new score is the mean of its pixels'
    voxel means. Regions with no valid pixel keep their score.
    """
    points_parts: list[np.ndarray] = []
    values_parts: list[np.ndarray] = []
    group_parts: list[np.ndarray] = []
    group_keys: list[tuple[int, int]] = []
    for frame_idx in sorted(frame_scores):
        frame = frames[frame_idx]
        scores = frame_scores[frame_idx]
        if not scores:
            continue
        world = unproject(frame)
        labels = frame.regions.labels
        for lab in sorted(scores):
            sel = (labels == lab) & frame.depth.validity
            n = int(sel.sum())
            if n == 0:
                continue
            points_parts.append(world[sel])
            values_parts.append(np.full(n, scores[lab], dtype=np.float64))
            group_parts.append(np.full(n, len(group_keys), dtype=np.int64))
            group_keys.append((frame_idx, lab))

    updated = {fi: dict(scores) for fi, scores in frame_scores.items()}
    if not points_parts:
        return updated
    points = np.concatenate(points_parts)
    values = np.concatenate(values_parts)
    groups = np.concatenate(group_parts)
    pooled = pooled_voxel_means(points, values, voxel_size)
    sums = np.bincount(groups, weights=pooled, minlength=len(group_keys))
    counts = np.bincount(groups, minlength=len(group_keys))
    for k, (frame_idx, lab) in enumerate(group_keys):
        updated[frame_idx][lab] = float(sums[k] / counts[k])
    return updated


def kapur_threshold(scores, bins: int = KAPUR_BINS) -> float:
    """Histogram threshold maximizing background + foreground Shannon entropy.

    Candidate thresholds are the upper edges of the first ``bins`` histogram
    bins; a candidate leaving either side without mass is skipped (its
    entropy sum is undefined). Ties resolve to the lowest threshold. If all
    scores are equal the distribution is degenerate and that value is
    returned directly, so nothing ends up strictly above it.
    """
    arr = np.asarray(list(scores), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("kapur_threshold needs at least one score")
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return lo
    hist, edges = np.histogram(arr, bins=bins, range=(lo, hi))
    # entropies are evaluated from integer bin counts: H = log(n) - S/n with
    # S = sum(c*log(c)). Splits with mirrored count structure then produce
    # bit-identical psi, so the lowest-threshold tie rule is deterministic.
    counts = [int(c) for c in hist]
    clogc = [c * math.log(c) if c > 0 else 0.0 for c in counts]
    total_n = 0
    total_s = 0.0
    for c, s in zip(counts, clogc):
        total_n += c
        total_s += s
    best_psi = -math.inf
    best_k = None
    nb = 0
    sb = 0.0
    for k in range(1, bins + 1):
        nb += counts[k - 1]
        sb += clogc[k - 1]
        nf = total_n - nb
        sf = total_s - sb
        if nb == 0 or nf == 0:
            continue
        psi = (math.log(nb) - sb / nb) + (math.log(nf) - sf / nf)
        if psi > best_psi:
            best_psi = psi
            best_k = k
    if best_k is None:
        best_k = 1
    return float(edges[best_k])


def detect_regions(
    frame_scores: dict[tuple[str, int], dict[int, float]],
    tau: float,
) -> list[tuple[str, int, int, float]]:
    """Regions strictly above the threshold, as (side, frame_idx, label, score)."""
    out = []
    for (side, frame_idx), scores in sorted(frame_scores.items()):
        for lab in sorted(scores):
            if scores[lab] > tau:
                out.append((side, frame_idx, lab, scores[lab]))
    return out


@dataclass(frozen=True)
class SelectedRegion:
    """One thresholded region with everything association needs."""

    side: str
    frame_index: int
    frame_id: int
    label: int
    score: float
    feature: np.ndarray
    points: np.ndarray
    centroid: tuple[float, float]


@dataclass
class ChangedObject:
    """A cross-frame merged instance on one side."""

    object_id: int
    side: str
    feature: np.ndarray
    cloud: np.ndarray
    members: list[SelectedRegion]
    n_merged: int
    confidence: float
    change_type: str | None = None
    moved_partner: int | None = None


def _geo_fraction(region_points: np.ndarray, cloud: np.ndarray, sigma_geo: float) -> float:
    """Fraction of the region's points whose squared distance to the object's
    cloud is below sigma_geo."""
    if region_points.shape[0] == 0 or cloud.shape[0] == 0:
        return 0.0
    dists, _ = cKDTree(cloud).query(region_points, k=1)
    return float(np.mean(dists * dists < sigma_geo))


def associate(
    regions: list[SelectedRegion],
    sigma_geo: float = SIGMA_GEO,
    sigma_merge: float = SIGMA_MERGE,
) -> list[ChangedObject]:
    """Greedy merging of one side's regions into objects.

    Regions are processed in (frame, label) order. Each region joins the
    most similar existing object when the combined feature + geometry
    similarity exceeds sigma_merge, updating the object's feature by running
    average and concatenating clouds; otherwise it seeds a new object. The
    uniform rule (no special casing of the first frame) guarantees no two
    objects ever exceed the merge score against each other at creation time.
    """
    regions = sorted(regions, key=lambda r: (r.frame_index, r.label))
    objects: list[ChangedObject] = []
    for r in regions:
        best_s = -math.inf
        best_o = None
        for o in objects:
            s_feat = float(np.dot(r.feature, o.feature) / max(np.linalg.norm(o.feature), 1e-12))
            s_geo = _geo_fraction(r.points, o.cloud, sigma_geo)
            s = s_feat + s_geo
            if s > best_s:
                best_s = s
                best_o = o
        if best_o is not None and best_s > sigma_merge:
            w = 1.0 / (best_o.n_merged + 1)
            best_o.feature = w * r.feature + (1.0 - w) * best_o.feature
            best_o.cloud = np.concatenate([best_o.cloud, r.points])
            best_o.members.append(r)
            best_o.n_merged += 1
            best_o.confidence = max(best_o.confidence, r.score)
        else:
            objects.append(
                ChangedObject(
                    object_id=-1,
                    side=r.side,
                    feature=r.feature.copy(),
                    cloud=r.points.copy(),
                    members=[r],
                    n_merged=1,
                    confidence=r.score,
                )
            )
    return objects


def classify(
    before_objs: list[ChangedObject],
    after_objs: list[ChangedObject],
    tau_sim: float = TAU_SIM,
) -> None:
    """Set change types and Moved partnerships in place.

    Cross-side pairs with feature cosine above tau_sim are matched greedily,
    highest cosine first; matched pairs become Moved with mutual partner ids,
    the rest Removed (before side) or Added (after side).
    """
    candidates = []
    for bi, b in enumerate(before_objs):
        nb = np.linalg.norm(b.feature)
        for ai, a in enumerate(after_objs):
            na = np.linalg.norm(a.feature)
            if nb == 0 or na == 0:
                continue
            cos = float(np.dot(b.feature, a.feature) / (nb * na))
            if cos > tau_sim:
                candidates.append((-cos, bi, ai))
    candidates.sort()
    matched_b: set[int] = set()
    matched_a: set[int] = set()
    for _neg_cos, bi, ai in candidates:
        if bi in matched_b or ai in matched_a:
            continue
        matched_b.add(bi)
        matched_a.add(ai)
        before_objs[bi].change_type = "Moved"
        after_objs[ai].change_type = "Moved"
        before_objs[bi].moved_partner = after_objs[ai].object_id
        after_objs[ai].moved_partner = before_objs[bi].object_id
    for b in before_objs:
        if b.change_type is None:
            b.change_type = "Removed"
    for a in after_objs:
        if a.change_type is None:
            a.change_type = "Added"


def emit_detections(objects: list[ChangedObject], scene_id: str) -> dict:
    """Serialize classified objects to the detection-set structure.

    One point detection per member region, at the region's pixel centroid,
    carrying the object's confidence and type.
    """
    entries = []
    for o in sorted(objects, key=lambda x: x.object_id):
        dets = [
            {
                "video": m.side,
                "frame_id": m.frame_id,
                "x": float(m.centroid[0]),
                "y": float(m.centroid[1]),
            }
            for m in sorted(o.members, key=lambda m: (m.frame_index, m.label))
        ]
        entry = {
            "object_id": o.object_id,
            "side": o.side,
            "change_type": o.change_type,
            "confidence": float(o.confidence),
        }
        if o.moved_partner is not None:
            entry["partner_id"] = o.moved_partner
        entry["detections"] = dets
        entries.append(entry)
    return {"scene_id": scene_id, "objects": entries}

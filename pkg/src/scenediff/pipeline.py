"""End-to-end change detection over a precomputed sequence pair.

Stages: unit-cube normalization, co-visibility frame pairing, directed
per-pair scoring, per-frame averaging, cross-frame voxel score sharing,
thresholding, per-side association into objects, cross-side classification.
The two-image case (one frame per side) runs the same scoring but skips the
multi-frame stages: no voxel sharing and no merging, every selected region
becomes its own object.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .assets import FrameAsset, SequencePair
from .association import (
    ChangedObject,
    SelectedRegion,
    associate,
    average_frame_scores,
    classify,
    detect_regions,
    emit_detections,
    kapur_threshold,
    voxel_consistency,
)
from .config import PipelineConfig
from .geometry import normalize_scene, unproject
from .pairing import covisibility_matrix, select_pairs
from .scoring import fuse, pixel_features, score_pair


def _directed_tasks(pairs) -> list[tuple[str, int, int]]:
    """Both scoring directions for every selected frame pair, in a fixed
    order so reductions are independent of worker count."""
    tasks = []
    for b, a in pairs:
        tasks.append(("before", b, a))
        tasks.append(("after", a, b))
    return tasks


def _run_directed(
    pair: SequencePair, task: tuple[str, int, int], cfg: PipelineConfig
) -> dict[int, float]:
    side, src_idx, dst_idx = task
    if side == "before":
        src, dst = pair.before[src_idx], pair.after[dst_idx]
    else:
        src, dst = pair.after[src_idx], pair.before[dst_idx]
    scores = score_pair(
        src,
        dst,
        task,
        tau_occ=cfg.tau_occ,
        exclude_frac=cfg.exclude_frac,
        exclude_on=cfg.exclude_on,
    )
    return fuse(scores, src.regions, cfg.weights)


_MAX_REGION_POINTS = 320


def _build_region(
    side: str, frame_index: int, frame: FrameAsset, label: int, score: float
) -> SelectedRegion:
    sel = frame.regions.labels == label
    ys, xs = np.nonzero(sel)
    centroid = (float(xs.mean()), float(ys.mean()))
    feature = pixel_features(frame)[sel].astype(np.float64).mean(axis=0)
    pts = unproject(frame)[sel & frame.depth.validity]
    if pts.shape[0] > _MAX_REGION_POINTS:
        # fixed-stride subsample keeps association geometry cheap and
        # deterministic; the voxel stage still sees every pixel
        stride = -(-pts.shape[0] // _MAX_REGION_POINTS)
        pts = pts[::stride]
    return SelectedRegion(
        side=side,
        frame_index=frame_index,
        frame_id=frame.frame_id,
        label=label,
        score=score,
        feature=feature,
        points=pts.reshape(-1, 3),
        centroid=centroid,
    )


def run_pipeline(pair: SequencePair, cfg: PipelineConfig | None = None) -> dict:
    """Detect changed objects; returns the detection-set dict plus run info."""
    if cfg is None:
        cfg = PipelineConfig()
    npair, record = normalize_scene(pair)

    matrix = covisibility_matrix(npair, cfg.covis_slack)
    pairset = select_pairs(npair, cfg.covis_threshold, cfg.covis_slack, matrix=matrix)
    tasks = _directed_tasks(pairset.pairs)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda t: _run_directed(npair, t, cfg), tasks))
    else:
        results = [_run_directed(npair, t, cfg) for t in tasks]
    fused = {task: scores for task, scores in zip(tasks, results)}

    averaged = average_frame_scores(fused)
    per_side: dict[str, dict[int, dict[int, float]]] = {"before": {}, "after": {}}
    for (side, frame_idx), scores in averaged.items():
        per_side[side][frame_idx] = scores

    if not npair.is_two_image:
        for side in ("before", "after"):
            per_side[side] = voxel_consistency(
                npair.frames(side), per_side[side], cfg.voxel_size
            )

    pooled = [
        s
        for side in ("before", "after")
        for scores in per_side[side].values()
        for s in scores.values()
    ]
    if cfg.threshold_mode == "fixed":
        tau = float(cfg.fixed_tau)
    elif pooled:
        tau = kapur_threshold(pooled, cfg.kapur_bins)
    else:
        tau = float(cfg.fixed_tau)

    flat = {
        (side, fi): scores
        for side in ("before", "after")
        for fi, scores in per_side[side].items()
    }
    hits = detect_regions(flat, tau)

    regions: dict[str, list[SelectedRegion]] = {"before": [], "after": []}
    for side, frame_idx, label, score in hits:
        frame = npair.frames(side)[frame_idx]
        regions[side].append(_build_region(side, frame_idx, frame, label, score))

    objects: dict[str, list[ChangedObject]] = {}
    for side in ("before", "after"):
        if npair.is_two_image:
            objects[side] = [
                ChangedObject(
                    object_id=-1,
                    side=side,
                    feature=r.feature.copy(),
                    cloud=r.points.copy(),
                    members=[r],
                    n_merged=1,
                    confidence=r.score,
                )
                for r in regions[side]
            ]
        else:
            objects[side] = associate(regions[side], cfg.sigma_geo, cfg.sigma_merge)

    next_id = 1
    for side in ("before", "after"):
        for o in objects[side]:
            o.object_id = next_id
            next_id += 1

    classify(objects["before"], objects["after"], cfg.tau_sim)

    out = emit_detections(objects["before"] + objects["after"], npair.scene_id)
    # the snapshot records everything that shapes the result; worker count
    # only sets execution width and would break byte-identical outputs
    snapshot = cfg.to_dict()
    snapshot.pop("workers")
    out["info"] = {
        "config": snapshot,
        "normalization": {
            "scale": float(record.scale),
            "offset": [float(v) for v in record.offset],
        },
        "frame_pairs": [[int(b), int(a)] for b, a in pairset.pairs],
        "threshold": float(tau),
        "n_regions_selected": len(hits),
    }
    return out

"""Point-based average-precision evaluation of change detections.

Three metrics over a detection set and ground truth for one scene:

  per-view AP      every detection point vs every GT box, each frame
                   independently, single global confidence sweep.
  per-scene AP     object level, type-agnostic: anything present in both
                   videos (GT or prediction) splits into one instance per
                   video; each predicted instance is reduced to its single
                   highest-confidence point.
  per-scene AP_type object level, type-aware: mutually partnered Moved
                   predictions form one entity that must localize correctly
                   in both videos and carry the right change type.

Matching tolerates up to two detections per ground truth: the first inside a
GT box is a true positive, the second is ignored (dropped from the sweep),
further ones are false positives. Unmatched GT are false negatives. Boxes are
closed: points on an edge count as inside.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyMask, SceneMismatch


def _check_scene(dets: dict, gt: dict) -> None:
    if str(dets.get("scene_id")) != str(gt.get("scene_id")):
        raise SceneMismatch(
            f"detections are for scene {dets.get('scene_id')!r}, "
            f"ground truth for {gt.get('scene_id')!r}"
        )


def _point_in_box(x: float, y: float, box: dict) -> bool:
    return box["xmin"] <= x <= box["xmax"] and box["ymin"] <= y <= box["ymax"]


def ap_from_records(records: list[tuple[float, tuple, str]], n_gt: int) -> float:
    """All-points (precision-envelope) AP from matched detection records.

    ``records`` are (confidence, tie_key, outcome) with outcome one of
    "tp", "fp", "ignored". Ignored records never enter the sweep. With no
    ground truth, an empty detection list is a perfect score.
    """
    swept = [r for r in sorted(records, key=lambda r: (-r[0], r[1])) if r[2] != "ignored"]
    if n_gt == 0:
        return 1.0 if not swept else 0.0
    if not swept:
        return 0.0
    tp = np.cumsum([1 if r[2] == "tp" else 0 for r in swept])
    fp = np.cumsum([1 if r[2] == "fp" else 0 for r in swept])
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for i in range(len(swept)):
        if swept[i][2] == "tp":
            ap += (recall[i] - prev_r) * envelope[i]
            prev_r = recall[i]
    return float(ap)


def pr_curve(records: list[tuple[float, tuple, str]], n_gt: int) -> list[tuple[float, float]]:
    """(recall, precision) samples along the confidence sweep."""
    swept = [r for r in sorted(records, key=lambda r: (-r[0], r[1])) if r[2] != "ignored"]
    if n_gt == 0 or not swept:
        return []
    tp = fp = 0
    out = []
    for _conf, _key, outcome in swept:
        if outcome == "tp":
            tp += 1
        else:
            fp += 1
        out.append((tp / n_gt, tp / (tp + fp)))
    return out


def _greedy_match(
    candidates: list[tuple[float, tuple, object]],
    gt_units: list,
    containment,
) -> list[tuple[float, tuple, str]]:
    """Confidence-ordered greedy matching with the two-point tolerance.

    ``containment(pred_payload, gt_unit)`` decides whether a prediction can
    claim a ground-truth unit. Each unit absorbs one TP then one Ignored;
    anything further, or a prediction claiming no unit, is an FP.
    """
    match_counts = [0] * len(gt_units)
    records: list[tuple[float, tuple, str]] = []
    for conf, key, payload in sorted(candidates, key=lambda c: (-c[0], c[1])):
        eligible = [gi for gi, unit in enumerate(gt_units) if containment(payload, unit)]
        fresh = [gi for gi in eligible if match_counts[gi] == 0]
        second = [gi for gi in eligible if match_counts[gi] == 1]
        if fresh:
            match_counts[fresh[0]] += 1
            records.append((conf, key, "tp"))
        elif second:
            match_counts[second[0]] += 1
            records.append((conf, key, "ignored"))
        else:
            records.append((conf, key, "fp"))
    return records


def eval_per_view(dets: dict, gt: dict) -> dict:
    """Per-view AP: every detection point against every same-frame GT box."""
    _check_scene(dets, gt)
    gt_units = []
    for gt_obj in gt["objects"]:
        for box in gt_obj["boxes"]:
            gt_units.append((box["video"], box["frame_id"], box))

    candidates = []
    for obj in dets["objects"]:
        for di, d in enumerate(obj["detections"]):
            key = (int(obj["object_id"]), di)
            payload = (d["video"], d["frame_id"], float(d["x"]), float(d["y"]))
            candidates.append((float(obj["confidence"]), key, payload))

    def contains(payload, unit):
        video, frame_id, x, y = payload
        u_video, u_frame, box = unit
        return video == u_video and frame_id == u_frame and _point_in_box(x, y, box)

    records = _greedy_match(candidates, gt_units, contains)
    return {
        "ap": ap_from_records(records, len(gt_units)),
        "n_gt": len(gt_units),
        "records": records,
        "pr": pr_curve(records, len(gt_units)),
    }


def _top_point(detections: list[dict], video: str | None = None) -> dict | None:
    """First-listed detection, optionally restricted to one video. Detections
    share their object's confidence, so list order is the tie-break."""
    for d in detections:
        if video is None or d["video"] == video:
            return d
    return None


def eval_per_scene(dets: dict, gt: dict, type_aware: bool) -> dict:
    """Object-level AP where each physical object counts once.

    Type-agnostic mode splits every object (ground truth and predicted) with
    presence in both videos into per-video instances and ignores predicted
    types. Type-aware mode keeps Moved objects whole: a partnered prediction
    must place its per-video top point inside the GT box in both videos and
    carry the matching type.
    """
    _check_scene(dets, gt)
    if type_aware:
        return _eval_scene_type_aware(dets, gt)
    return _eval_scene_agnostic(dets, gt)


def _eval_scene_agnostic(dets: dict, gt: dict) -> dict:
    gt_units = []
    for gt_obj in gt["objects"]:
        for video in ("before", "after"):
            boxes = [b for b in gt_obj["boxes"] if b["video"] == video]
            if boxes:
                gt_units.append((video, boxes))

    candidates = []
    for obj in dets["objects"]:
        for video in ("before", "after"):
            top = _top_point(obj["detections"], video)
            if top is None:
                continue
            key = (int(obj["object_id"]), video)
            payload = (video, top["frame_id"], float(top["x"]), float(top["y"]))
            candidates.append((float(obj["confidence"]), key, payload))

    def contains(payload, unit):
        video, frame_id, x, y = payload
        u_video, boxes = unit
        if video != u_video:
            return False
        return any(b["frame_id"] == frame_id and _point_in_box(x, y, b) for b in boxes)

    records = _greedy_match(candidates, gt_units, contains)
    return {
        "ap": ap_from_records(records, len(gt_units)),
        "n_gt": len(gt_units),
        "records": records,
        "pr": pr_curve(records, len(gt_units)),
    }


def _merge_partners(objects: list[dict]) -> list[dict]:
    """Fold mutually partnered Moved predictions into single entities."""
    by_id = {int(o["object_id"]): o for o in objects}
    consumed: set[int] = set()
    entities = []
    for o in sorted(objects, key=lambda o: int(o["object_id"])):
        oid = int(o["object_id"])
        if oid in consumed:
            continue
        partner_id = o.get("partner_id")
        partner = by_id.get(int(partner_id)) if partner_id is not None else None
        mutual = (
            partner is not None
            and int(partner.get("partner_id", -1)) == oid
            and o.get("change_type") == "Moved"
            and partner.get("change_type") == "Moved"
        )
        if mutual:
            consumed.add(oid)
            consumed.add(int(partner["object_id"]))
            entities.append(
                {
                    "entity_id": oid,
                    "change_type": "Moved",
                    "confidence": max(float(o["confidence"]), float(partner["confidence"])),
                    "detections": list(o["detections"]) + list(partner["detections"]),
                }
            )
        else:
            consumed.add(oid)
            entities.append(
                {
                    "entity_id": oid,
                    "change_type": o.get("change_type"),
                    "confidence": float(o["confidence"]),
                    "detections": list(o["detections"]),
                }
            )
    return entities


def _eval_scene_type_aware(dets: dict, gt: dict) -> dict:
    gt_units = list(gt["objects"])
    entities = _merge_partners(dets["objects"])

    candidates = []
    for e in entities:
        candidates.append((float(e["confidence"]), (int(e["entity_id"]),), e))

    def contains(entity, gt_obj) -> bool:
        if entity["change_type"] != gt_obj["change_type"]:
            return False
        if gt_obj["change_type"] == "Moved":
            for video in ("before", "after"):
                top = _top_point(entity["detections"], video)
                if top is None:
                    return False
                boxes = [b for b in gt_obj["boxes"] if b["video"] == video]
                if not any(
                    b["frame_id"] == top["frame_id"]
                    and _point_in_box(float(top["x"]), float(top["y"]), b)
                    for b in boxes
                ):
                    return False
            return True
        top = _top_point(entity["detections"])
        if top is None:
            return False
        return any(
            b["video"] == top["video"]
            and b["frame_id"] == top["frame_id"]
            and _point_in_box(float(top["x"]), float(top["y"]), b)
            for b in gt_obj["boxes"]
        )

    records = _greedy_match(candidates, gt_units, contains)
    return {
        "ap": ap_from_records(records, len(gt_units)),
        "n_gt": len(gt_units),
        "records": records,
        "pr": pr_curve(records, len(gt_units)),
    }


def evaluate(dets: dict, gt: dict) -> dict:
    """All three metrics plus their PR samples."""
    view = eval_per_view(dets, gt)
    scene = eval_per_scene(dets, gt, type_aware=False)
    scene_type = eval_per_scene(dets, gt, type_aware=True)
    return {
        "scene_id": gt["scene_id"],
        "per_view_ap": view["ap"],
        "per_scene_ap": scene["ap"],
        "per_scene_ap_type": scene_type["ap"],
        "detail": {
            "per_view": {"n_gt": view["n_gt"], "pr": view["pr"]},
            "per_scene": {"n_gt": scene["n_gt"], "pr": scene["pr"]},
            "per_scene_type": {"n_gt": scene_type["n_gt"], "pr": scene_type["pr"]},
        },
    }


def mask_to_box(mask: np.ndarray) -> tuple[int, int, int, int]:
    """Tight inclusive bounding box (xmin, ymin, xmax, ymax) of a boolean mask."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("cannot build a box from an empty mask")
    rows = np.nonzero(mask.any(axis=1))[0]
    cols = np.nonzero(mask.any(axis=0))[0]
    return int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1])


def masks_to_gt(
    scene_id: str,
    change_types: dict[int, str],
    frames: list[dict],
    sample_stride: int = 1,
) -> dict:
    """Ground truth from per-frame instance masks.

    ``frames`` entries: {video, frame_id, masks: {object_id: HxW bool}}.
    Frames are subsampled per video with the given stride (1 keeps all),
    mirroring evaluation at a fixed frame rate. A present-but-empty mask is
    an error; objects simply omit frames where they are invisible.
    """
    kept: list[dict] = []
    index_in_video: dict[str, int] = {}
    for fr in frames:
        video = fr["video"]
        k = index_in_video.get(video, 0)
        index_in_video[video] = k + 1
        if k % sample_stride != 0:
            continue
        kept.append(fr)

    boxes_by_obj: dict[int, list[dict]] = {oid: [] for oid in change_types}
    for fr in kept:
        for oid in sorted(fr["masks"]):
            x0, y0, x1, y1 = mask_to_box(fr["masks"][oid])
            boxes_by_obj.setdefault(int(oid), []).append(
                {
                    "video": fr["video"],
                    "frame_id": int(fr["frame_id"]),
                    "xmin": x0,
                    "ymin": y0,
                    "xmax": x1,
                    "ymax": y1,
                }
            )
    objects = []
    for oid in sorted(boxes_by_obj):
        if not boxes_by_obj[oid]:
            continue
        objects.append(
            {
                "gt_id": int(oid),
                "change_type": change_types[oid],
                "boxes": boxes_by_obj[oid],
            }
        )
    return {"scene_id": scene_id, "objects": objects}

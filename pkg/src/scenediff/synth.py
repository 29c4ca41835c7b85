"""Procedural cuboid scenes with analytically exact assets.

A scene is a finite ground plane at z=0 plus axis-aligned cuboids resting on
it. Depth comes from exact ray/plane and ray/slab intersection, the region
label of a pixel is its nearest-hit object id (0 for plane/background), and
the feature grid assigns each cell the embedding of its majority label at a
reduced resolution. Object embeddings are rows of an orthonormal basis, so
distinct objects are exactly orthogonal unless a scene deliberately reuses an
embedding (the repeated-items stress cases).

Changes between the two videos are declared per object: Added (absent
before), Removed (absent after), Moved (displaced). Ground truth boxes are
derived from the rendered masks of the changed objects, so they match the
assets by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assets import (
    DepthMap,
    FeatureMap,
    FrameAsset,
    Intrinsics,
    Pose,
    RegionMap,
    SequencePair,
    save_sequence_pair,
)
from .errors import InvalidSpec
from .evaluation import masks_to_gt

_EPS_T = 1e-6


@dataclass(frozen=True)
class Cuboid:
    obj_id: int
    center: tuple[float, float, float]
    extents: tuple[float, float, float]
    embedding_index: int

    def bounds(self, center=None) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center if center is None else center, dtype=np.float64)
        e = np.asarray(self.extents, dtype=np.float64) / 2.0
        return c - e, c + e


@dataclass(frozen=True)
class Trajectory:
    """Camera path. Orbit: eyes on a circle of ``radius`` at ``height``,
    each looking at a ring point of ``target_radius`` (0 = scene center, so
    the orbit faces inward; larger than ``radius`` faces outward across the
    scene). Linear: eyes interpolate start->end, fixed target."""

    kind: str
    n_frames: int
    radius: float = 1.8
    height: float = 1.4
    angle_start: float = 0.0
    angle_end: float = 2.0 * math.pi
    target_radius: float = 0.0
    target_height: float = 0.0
    start: tuple[float, float, float] = (0.0, 0.0, 1.0)
    end: tuple[float, float, float] = (0.5, 0.0, 1.0)
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def cameras(self) -> list[tuple[np.ndarray, np.ndarray]]:
        if self.n_frames < 1:
            raise InvalidSpec("trajectory needs at least one frame")
        out = []
        if self.kind == "orbit":
            # endpoint excluded for full circles so frame 0 is not repeated
            full = abs((self.angle_end - self.angle_start) % (2 * math.pi)) < 1e-9
            angles = np.linspace(
                self.angle_start, self.angle_end, self.n_frames, endpoint=not full
            )
            for a in angles:
                eye = np.array(
                    [self.radius * math.cos(a), self.radius * math.sin(a), self.height]
                )
                tgt = np.array(
                    [
                        self.target_radius * math.cos(a),
                        self.target_radius * math.sin(a),
                        self.target_height,
                    ]
                )
                out.append((eye, tgt))
        elif self.kind == "linear":
            ts = np.linspace(0.0, 1.0, self.n_frames)
            s = np.asarray(self.start, dtype=np.float64)
            e = np.asarray(self.end, dtype=np.float64)
            tgt = np.asarray(self.target, dtype=np.float64)
            for t in ts:
                out.append((s + t * (e - s), tgt.copy()))
        else:
            raise InvalidSpec(f"unknown trajectory kind {self.kind!r}")
        return out


def outward_arc(
    n_frames: int,
    radius: float = 0.4,
    height: float = 1.1,
    angle_start: float = 0.0,
    angle_end: float = 2.0 * math.pi,
    target_radius: float = 1.2,
    target_height: float = 0.15,
) -> Trajectory:
    """Default camera path: a sweep looking outward across the scene."""
    return Trajectory(
        kind="orbit",
        n_frames=n_frames,
        radius=radius,
        height=height,
        angle_start=angle_start,
        angle_end=angle_end,
        target_radius=target_radius,
        target_height=target_height,
    )


def inward_orbit(
    n_frames: int,
    radius: float = 2.6,
    height: float = 2.05,
    angle_start: float = 0.0,
    angle_end: float = 1.4,
    target_height: float = 0.12,
) -> Trajectory:
    """Object-centric arc: all cameras look at the scene center."""
    return Trajectory(
        kind="orbit",
        n_frames=n_frames,
        radius=radius,
        height=height,
        angle_start=angle_start,
        angle_end=angle_end,
        target_radius=0.0,
        target_height=target_height,
    )


@dataclass(frozen=True)
class ChangeSpec:
    obj_id: int
    kind: str
    displacement: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class NoiseSpec:
    depth_sigma: float = 0.0
    feat_sigma: float = 0.0
    pose_jitter: float = 0.0

    @property
    def any(self) -> bool:
        return self.depth_sigma > 0 or self.feat_sigma > 0 or self.pose_jitter > 0


@dataclass(frozen=True)
class SynthScene:
    scene_id: str
    seed: int
    cuboids: tuple[Cuboid, ...]
    changes: tuple[ChangeSpec, ...]
    before_trajectory: Trajectory
    after_trajectory: Trajectory
    width: int = 256
    height: int = 192
    feat_c: int = 32
    feat_downsample: int = 4
    plane_half_extent: float = 1.3
    noise: NoiseSpec = NoiseSpec()
    allow_repeated_embeddings: bool = False


def _validate_spec(spec: SynthScene) -> None:
    if spec.width % spec.feat_downsample or spec.height % spec.feat_downsample:
        raise InvalidSpec("image size must be divisible by feat_downsample")
    ids = [c.obj_id for c in spec.cuboids]
    if len(set(ids)) != len(ids) or any(i < 1 for i in ids):
        raise InvalidSpec("cuboid obj_ids must be unique and >= 1")
    emb_idx = [c.embedding_index for c in spec.cuboids]
    if any(i < 1 for i in emb_idx):
        raise InvalidSpec("embedding index 0 is reserved for the background")
    if max(emb_idx, default=0) + 1 > spec.feat_c:
        raise InvalidSpec("more embeddings than feature channels support")
    if not spec.allow_repeated_embeddings and len(set(emb_idx)) != len(emb_idx):
        raise InvalidSpec("repeated embeddings require allow_repeated_embeddings")
    change_ids = [ch.obj_id for ch in spec.changes]
    if len(set(change_ids)) != len(change_ids):
        raise InvalidSpec("multiple changes declared for one object")
    known = set(ids)
    for ch in spec.changes:
        if ch.obj_id not in known:
            raise InvalidSpec(f"change references unknown object {ch.obj_id}")
        if ch.kind not in ("Added", "Removed", "Moved"):
            raise InvalidSpec(f"unknown change kind {ch.kind!r}")
        if ch.kind == "Moved" and not any(abs(d) > 0 for d in ch.displacement):
            raise InvalidSpec("Moved change needs a nonzero displacement")
    for state in ("before", "after"):
        boxes = _state_boxes(spec, state)
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                lo_a, hi_a, _ = boxes[i]
                lo_b, hi_b, _ = boxes[j]
                if np.all(hi_a > lo_b) and np.all(hi_b > lo_a):
                    raise InvalidSpec(
                        f"cuboids {boxes[i][2]} and {boxes[j][2]} intersect in {state} state"
                    )


def _change_map(spec: SynthScene) -> dict[int, ChangeSpec]:
    return {ch.obj_id: ch for ch in spec.changes}


def _state_boxes(spec: SynthScene, state: str) -> list[tuple[np.ndarray, np.ndarray, int]]:
    """(lo, hi, obj_id) of every cuboid present in one video's scene state."""
    changes = _change_map(spec)
    out = []
    for c in spec.cuboids:
        ch = changes.get(c.obj_id)
        if state == "before":
            if ch is not None and ch.kind == "Added":
                continue
            lo, hi = c.bounds()
        else:
            if ch is not None and ch.kind == "Removed":
                continue
            center = np.asarray(c.center, dtype=np.float64)
            if ch is not None and ch.kind == "Moved":
                center = center + np.asarray(ch.displacement, dtype=np.float64)
            lo, hi = c.bounds(center)
        out.append((lo, hi, c.obj_id))
    return out


def orthonormal_embeddings(seed: int, n: int, c: int) -> np.ndarray:
    """n pairwise-orthogonal unit C-vectors from a seeded draw (n <= c)."""
    if n > c:
        raise InvalidSpec(f"cannot fit {n} orthogonal embeddings in {c} dims")
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((c, n))
    q, r = np.linalg.qr(m)
    # fix signs so the basis is a deterministic function of the draw
    q = q * np.sign(np.diag(r))[None, :]
    return np.ascontiguousarray(q.T)


def look_at(eye: np.ndarray, target: np.ndarray) -> Pose:
    """Camera-to-world pose with x right, y down, z forward (view direction)."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(forward)
    if n < 1e-12:
        raise InvalidSpec("camera eye and target coincide")
    forward = forward / n
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(forward, up))) > 1.0 - 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=1)
    return Pose(rotation=rotation, translation=eye)


def default_intrinsics(width: int, height: int) -> Intrinsics:
    f = 0.9 * width
    return Intrinsics(
        fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height
    )


def _ray_dirs(intr: Intrinsics) -> np.ndarray:
    xs, ys = np.meshgrid(
        np.arange(intr.width, dtype=np.float64), np.arange(intr.height, dtype=np.float64)
    )
    return np.stack([xs, ys, np.ones_like(xs)], axis=-1) @ intr.inverse.T


def render_frame(
    boxes: list[tuple[np.ndarray, np.ndarray, int]],
    plane_half_extent: float,
    intr: Intrinsics,
    pose: Pose,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact depth, region labels, and validity for one camera.

    Rays carry unit camera-space Z, so the nearest-hit ray parameter IS the
    depth along camera Z. Pixels that hit nothing are invalid.
    """
    dirs = _ray_dirs(intr) @ pose.rotation.T
    origin = pose.translation
    h, w = dirs.shape[:2]
    t_best = np.full((h, w), np.inf)
    labels = np.zeros((h, w), dtype=np.int32)

    with np.errstate(divide="ignore", invalid="ignore"):
        tp = -origin[2] / dirs[..., 2]
        px = origin[0] + tp * dirs[..., 0]
        py = origin[1] + tp * dirs[..., 1]
        ok = (
            np.isfinite(tp)
            & (tp > _EPS_T)
            & (np.abs(px) <= plane_half_extent)
            & (np.abs(py) <= plane_half_extent)
        )
    t_best[ok] = tp[ok]

    for lo, hi, oid in sorted(boxes, key=lambda b: b[2]):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[None, None, :] - origin) / dirs
            t2 = (hi[None, None, :] - origin) / dirs
        near = np.minimum(t1, t2)
        far = np.maximum(t1, t2)
        # a zero direction component gives +-inf (outside slab misses via
        # same-signed infinities) or NaN exactly on a face plane; NaN
        # comparisons below resolve to miss
        with np.errstate(invalid="ignore"):
            tmin = np.nanmax(np.where(np.isnan(near), -np.inf, near), axis=-1)
            tmax = np.nanmin(np.where(np.isnan(far), np.inf, far), axis=-1)
            hit = (tmax >= tmin) & (tmin > _EPS_T) & (tmin < t_best)
        t_best[hit] = tmin[hit]
        labels[hit] = oid

    valid = np.isfinite(t_best)
    depth = np.where(valid, t_best, 0.0)
    labels = np.where(valid, labels, 0).astype(np.int32)
    return depth, labels, valid


def majority_feature_grid(
    labels: np.ndarray,
    valid: np.ndarray,
    emb_row_of_label: np.ndarray,
    embeddings: np.ndarray,
    ds: int,
) -> np.ndarray:
    """Feature cell = embedding of the majority label in its pixel block.

    Invalid pixels count as background. Majority ties go to the lowest label.
    """
    lab = np.where(valid, labels, 0)
    h, w = lab.shape
    fh, fw = h // ds, w // ds
    blocks = lab.reshape(fh, ds, fw, ds).transpose(0, 2, 1, 3).reshape(fh * fw, ds * ds)
    n_labels = int(emb_row_of_label.size)
    counts = np.zeros((fh * fw, n_labels), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(fh * fw), ds * ds), blocks.ravel()), 1)
    majority = counts.argmax(axis=1).reshape(fh, fw)
    return embeddings[emb_row_of_label[majority]].astype(np.float32)


def _rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    a = axis / max(np.linalg.norm(axis), 1e-12)
    k = np.array(
        [[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]], dtype=np.float64
    )
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def generate(spec: SynthScene, out_dir: str | None = None) -> tuple[SequencePair, dict]:
    """Render both videos and derive ground truth from the rendered masks.

    Deterministic per spec (one RNG stream seeded by ``spec.seed`` drives all
    noise). Raises ``InvalidSpec`` for malformed scenes, including a declared
    change that is never visible in some video where the object exists.
    """
    _validate_spec(spec)
    n_emb = max((c.embedding_index for c in spec.cuboids), default=0) + 1
    embeddings = orthonormal_embeddings(spec.seed, n_emb, spec.feat_c)
    max_label = max((c.obj_id for c in spec.cuboids), default=0)
    emb_row = np.zeros(max_label + 1, dtype=np.int64)
    for c in spec.cuboids:
        emb_row[c.obj_id] = c.embedding_index

    intr = default_intrinsics(spec.width, spec.height)
    rng = np.random.default_rng(spec.seed + 1)
    changes = _change_map(spec)

    sides: dict[str, list[FrameAsset]] = {}
    gt_frames: list[dict] = []
    for side in ("before", "after"):
        boxes = _state_boxes(spec, side)
        traj = spec.before_trajectory if side == "before" else spec.after_trajectory
        frames = []
        for frame_id, (eye, target) in enumerate(traj.cameras()):
            pose = look_at(eye, target)
            depth, labels, valid = render_frame(boxes, spec.plane_half_extent, intr, pose)
            feat = majority_feature_grid(
                labels, valid, emb_row, embeddings, spec.feat_downsample
            )
            if spec.noise.pose_jitter > 0:
                axis = rng.standard_normal(3)
                angle = float(rng.normal(0.0, spec.noise.pose_jitter))
                rot = _rodrigues(axis, angle) @ pose.rotation
                trans = pose.translation + rng.normal(0.0, spec.noise.pose_jitter, 3)
                u, _s, vt = np.linalg.svd(rot)
                pose = Pose(rotation=u @ vt, translation=trans)
            if spec.noise.depth_sigma > 0:
                depth = depth + np.where(
                    valid, rng.normal(0.0, spec.noise.depth_sigma, depth.shape), 0.0
                )
                depth = np.maximum(depth, 1e-6)
                depth[~valid] = 0.0
            if spec.noise.feat_sigma > 0:
                feat = feat + rng.normal(0.0, spec.noise.feat_sigma, feat.shape).astype(
                    np.float32
                )
            frames.append(
                FrameAsset(
                    frame_id=frame_id,
                    intrinsics=intr,
                    pose=pose,
                    depth=DepthMap(values=depth.astype(np.float32), validity=valid),
                    features=FeatureMap(values=feat.astype(np.float32)),
                    regions=RegionMap(labels=labels),
                )
            )
            masks = {}
            for oid, ch in changes.items():
                if side == "before" and ch.kind == "Added":
                    continue
                if side == "after" and ch.kind == "Removed":
                    continue
                m = labels == oid
                if m.any():
                    masks[oid] = m
            gt_frames.append({"video": side, "frame_id": frame_id, "masks": masks})
        sides[side] = frames

    for oid, ch in changes.items():
        for side in ("before", "after"):
            if (side == "before" and ch.kind == "Added") or (
                side == "after" and ch.kind == "Removed"
            ):
                continue
            seen = any(
                oid in fr["masks"] for fr in gt_frames if fr["video"] == side
            )
            if not seen:
                raise InvalidSpec(
                    f"changed object {oid} is never visible in the {side} video"
                )

    pair = SequencePair(
        scene_id=spec.scene_id,
        before=tuple(sides["before"]),
        after=tuple(sides["after"]),
    )
    gt = masks_to_gt(
        spec.scene_id,
        {oid: ch.kind for oid, ch in changes.items()},
        gt_frames,
    )
    if out_dir is not None:
        save_sequence_pair(pair, out_dir)
    return pair, gt


def changed_masks(spec: SynthScene) -> list[dict]:
    """Rendered masks of the changed objects, per frame (for tests and viz)."""
    _validate_spec(spec)
    intr = default_intrinsics(spec.width, spec.height)
    changes = _change_map(spec)
    out = []
    for side in ("before", "after"):
        boxes = _state_boxes(spec, side)
        traj = spec.before_trajectory if side == "before" else spec.after_trajectory
        for frame_id, (eye, target) in enumerate(traj.cameras()):
            pose = look_at(eye, target)
            _depth, labels, _valid = render_frame(boxes, spec.plane_half_extent, intr, pose)
            masks = {}
            for oid, ch in changes.items():
                if side == "before" and ch.kind == "Added":
                    continue
                if side == "after" and ch.kind == "Removed":
                    continue
                m = labels == oid
                if m.any():
                    masks[oid] = m
            out.append({"video": side, "frame_id": frame_id, "masks": masks})
    return out


# --- randomized scene construction -------------------------------------------


def _screen_scene(spec: SynthScene, min_visible_px: int) -> bool:
    """Admission filter for randomly drawn scenes.

    Two conditions, both on the noise-free render:
      1. every changed object shows either zero or >= min_visible_px pixels
         in each frame of the videos where it exists, and appears in at
         least two frames per such video (no slivers, stable evidence);
      2. the changed volume is openly visible from the other video's
         cameras: reprojected change evidence dies when another object
         occludes the spot, so each ghost box must have most of its corners
         unoccluded in most of the other video's frames.
    """
    clean = replace(spec, noise=NoiseSpec())
    intr = default_intrinsics(clean.width, clean.height)
    changes = _change_map(clean)
    renders: dict[str, list] = {}
    for side in ("before", "after"):
        boxes = _state_boxes(clean, side)
        traj = clean.before_trajectory if side == "before" else clean.after_trajectory
        renders[side] = []
        for eye, target in traj.cameras():
            pose = look_at(eye, target)
            depth, labels, valid = render_frame(boxes, clean.plane_half_extent, intr, pose)
            renders[side].append((depth, labels, valid, pose))

    seen: dict[tuple[str, int], int] = {}
    for side in ("before", "after"):
        for depth, labels, valid, pose in renders[side]:
            for oid, ch in changes.items():
                if (side == "before" and ch.kind == "Added") or (
                    side == "after" and ch.kind == "Removed"
                ):
                    continue
                npx = int((labels == oid).sum())
                if 0 < npx < min_visible_px:
                    return False
                seen[(side, oid)] = seen.get((side, oid), 0) + (npx > 0)
    for oid, ch in changes.items():
        for side in ("before", "after"):
            if (side == "before" and ch.kind == "Added") or (
                side == "after" and ch.kind == "Removed"
            ):
                continue
            if seen.get((side, oid), 0) < 2:
                return False

    cuboid_of = {c.obj_id: c for c in spec.cuboids}

    def ghost_open(lo: np.ndarray, hi: np.ndarray, other_side: str) -> bool:
        corners = np.array(
            [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
        )
        for depth, _labels, valid, pose in renders[other_side]:
            cam = (corners - pose.translation) @ pose.rotation
            z = cam[:, 2]
            u = intr.fx * cam[:, 0] / z + intr.cx
            v = intr.fy * cam[:, 1] / z + intr.cy
            inside = (z > 1e-6) & (u >= 0) & (u <= intr.width - 1) & (v >= 0) & (v <= intr.height - 1)
            ui = np.clip(np.rint(u).astype(int), 0, intr.width - 1)
            vi = np.clip(np.rint(v).astype(int), 0, intr.height - 1)
            surf = depth[vi, ui]
            vis = valid[vi, ui]
            open_ = inside & (~vis | (surf >= z - 0.03))
            if int(open_.sum()) < 6:
                return False
        return True

    for oid, ch in changes.items():
        c = cuboid_of[oid]
        lo, hi = c.bounds()
        if ch.kind == "Removed" and not ghost_open(lo, hi, "after"):
            return False
        if ch.kind == "Added" and not ghost_open(lo, hi, "before"):
            return False
        if ch.kind == "Moved":
            center = np.asarray(c.center) + np.asarray(ch.displacement)
            nlo, nhi = c.bounds(center)
            if not ghost_open(nlo, nhi, "before"):
                return False
            if not ghost_open(lo, hi, "after"):
                return False
    return True


_SLOT_SPACING = 0.48


def _lattice_slots(max_radius: float = 1.12) -> list[tuple[float, float]]:
    """Ground positions on a square lattice, extreme corners dropped so the
    whole layout stays inside every camera's view."""
    coords = [k * _SLOT_SPACING for k in range(-2, 3)]
    return [
        (x, y) for x in coords for y in coords if math.hypot(x, y) <= max_radius
    ]


def random_scene(
    seed: int,
    n_objects: int | None = None,
    n_changes: int | None = None,
    n_frames: int = 8,
    width: int = 256,
    height: int = 192,
    noise: NoiseSpec = NoiseSpec(),
    min_visible_px: int = 120,
    scene_id: str | None = None,
) -> SynthScene:
    """A validated random tabletop scene.

    Placement, change assignment, and camera arcs are drawn from one seeded
    stream; candidate scenes are re-drawn until every changed object is
    either absent or clearly visible (>= min_visible_px) in each frame, so
    downstream detection is never asked to find a sliver. Deterministic per
    seed. The visibility screen always runs on the noise-free render.
    """
    rng = np.random.default_rng(seed * 10007 + 17)
    if n_objects is None:
        n_objects = int(rng.integers(5, 16))
    if n_changes is None:
        # keep unchanged objects in the clear majority; the pooled score
        # histogram is then dominated by its near-zero mode and the entropy
        # threshold lands below the change scores instead of between them
        cap = min(4, max(1, (n_objects - 3) // 2))
        n_changes = int(rng.integers(1, cap + 1))
    n_changes = min(n_changes, n_objects)

    slots = _lattice_slots()
    for attempt in range(60):
        order = rng.permutation(len(slots))
        slot_of = {i + 1: int(order[i]) for i in range(n_objects)}
        cuboids = []
        for i in range(n_objects):
            # footprints vary; heights stay uniform so genuine changes score
            # in one tight cluster that entropy thresholding cannot split
            ext = rng.uniform(0.26, 0.36, 3)
            ext[2] = float(rng.uniform(0.29, 0.31))
            x, y = slots[slot_of[i + 1]]
            cuboids.append(
                Cuboid(
                    obj_id=i + 1,
                    center=(x, y, float(ext[2]) / 2.0),
                    extents=tuple(float(v) for v in ext),
                    embedding_index=i + 1,
                )
            )
        cuboids = tuple(cuboids)

        change_ids = rng.choice(n_objects, size=n_changes, replace=False) + 1
        kinds = rng.choice(["Added", "Removed", "Moved"], size=n_changes)
        changes = []
        after_used = set(slot_of.values())
        for oid, kind in zip(sorted(int(i) for i in change_ids), kinds):
            if kind == "Removed":
                after_used.discard(slot_of[oid])
        for oid, kind in zip(sorted(int(i) for i in change_ids), kinds):
            if kind != "Moved":
                changes.append(ChangeSpec(obj_id=int(oid), kind=str(kind)))
                continue
            free = [k for k in range(len(slots)) if k not in after_used]
            target = free[int(rng.integers(len(free)))]
            after_used.discard(slot_of[oid])
            after_used.add(target)
            base = cuboids[oid - 1].center
            changes.append(
                ChangeSpec(
                    obj_id=int(oid),
                    kind="Moved",
                    displacement=(
                        slots[target][0] - base[0],
                        slots[target][1] - base[1],
                        0.0,
                    ),
                )
            )

        a0 = float(rng.uniform(0.0, 2.0 * math.pi))
        span = float(rng.uniform(1.1, 1.5))
        offset = float(rng.uniform(0.12, 0.3))
        spec = SynthScene(
            scene_id=scene_id or f"synth-{seed:04d}",
            seed=seed,
            cuboids=cuboids,
            changes=tuple(changes),
            before_trajectory=inward_orbit(n_frames, angle_start=a0, angle_end=a0 + span),
            after_trajectory=inward_orbit(
                n_frames, angle_start=a0 + offset, angle_end=a0 + span + offset
            ),
            width=width,
            height=height,
            noise=noise,
        )
        if _screen_scene(spec, min_visible_px):
            return spec
    raise InvalidSpec(f"could not draw a valid scene for seed {seed}")


# --- stress suite -------------------------------------------------------------


def _simple_cuboid(oid: int, x: float, y: float, size: float = 0.34, emb: int | None = None) -> Cuboid:
    return Cuboid(
        obj_id=oid,
        center=(x, y, size / 2.0),
        extents=(size, size, size),
        embedding_index=emb if emb is not None else oid,
    )


def stress_suite(n_frames: int = 6) -> list[tuple[SynthScene, dict]]:
    """Hand-built scenes covering the qualitative failure modes.

    Each entry is (scene, expectation); expectation["kind"] tells the test
    what to assert. The no-change expectation holds under a fixed threshold
    (entropy thresholding always splits a unimodal score distribution).
    """
    suite: list[tuple[SynthScene, dict]] = []

    base_objs = (
        _simple_cuboid(1, 0.55, 0.0),
        _simple_cuboid(2, -0.3, 0.45),
        _simple_cuboid(3, -0.25, -0.5),
    )

    def arcs(offset: float = 0.18):
        return (
            inward_orbit(n_frames, angle_start=0.3, angle_end=1.6),
            inward_orbit(n_frames, angle_start=0.3 + offset, angle_end=1.6 + offset),
        )

    b, a = arcs()
    suite.append(
        (
            SynthScene(
                scene_id="stress-no-change",
                seed=101,
                cuboids=base_objs,
                changes=(),
                before_trajectory=b,
                after_trajectory=a,
            ),
            {"kind": "no_change"},
        )
    )

    for kind in ("Added", "Removed"):
        b, a = arcs()
        suite.append(
            (
                SynthScene(
                    scene_id=f"stress-single-{kind.lower()}",
                    seed=102,
                    cuboids=base_objs,
                    changes=(ChangeSpec(obj_id=2, kind=kind),),
                    before_trajectory=b,
                    after_trajectory=a,
                ),
                {"kind": "exact", "changes": {2: kind}},
            )
        )

    b, a = arcs()
    suite.append(
        (
            SynthScene(
                scene_id="stress-single-move",
                seed=103,
                cuboids=base_objs,
                changes=(ChangeSpec(obj_id=2, kind="Moved", displacement=(0.75, -0.9, 0.0)),),
                before_trajectory=b,
                after_trajectory=a,
            ),
            {"kind": "exact", "changes": {2: "Moved"}},
        )
    )

    # three identical cans; the third disappears and a fourth appears
    # elsewhere: indistinguishable from the third can having moved
    cans = (
        _simple_cuboid(1, 0.55, 0.25, emb=1),
        _simple_cuboid(2, 0.1, 0.6, emb=1),
        _simple_cuboid(3, -0.45, 0.3, emb=1),
    )
    b, a = arcs()
    suite.append(
        (
            SynthScene(
                scene_id="stress-identical-swap",
                seed=104,
                cuboids=cans,
                changes=(ChangeSpec(obj_id=3, kind="Moved", displacement=(0.35, -0.85, 0.0)),),
                before_trajectory=b,
                after_trajectory=a,
                allow_repeated_embeddings=True,
            ),
            {"kind": "ambiguous", "obj_id": 3},
        )
    )

    # many identical items, one removed: geometry still localizes the change
    # but identical embeddings make the change type ambiguous (the removed
    # item has exact appearance counterparts elsewhere in the scene)
    repetitive = tuple(
        _simple_cuboid(i + 1, 0.62 * math.cos(t), 0.62 * math.sin(t), size=0.3, emb=1)
        for i, t in enumerate(np.linspace(0.0, 2 * math.pi, 6, endpoint=False))
    )
    b, a = arcs()
    suite.append(
        (
            SynthScene(
                scene_id="stress-repetitive",
                seed=105,
                cuboids=repetitive,
                changes=(ChangeSpec(obj_id=4, kind="Removed"),),
                before_trajectory=b,
                after_trajectory=a,
                allow_repeated_embeddings=True,
            ),
            {"kind": "ambiguous", "obj_id": 4},
        )
    )

    # a wall hides an unchanged object from the after cameras only; the only
    # real change is a removal elsewhere. the hidden object must not be
    # flagged: its reprojections land on the nearer wall, giving negative
    # depth differences that the asymmetric rule rejects as evidence
    occl_objs = (
        Cuboid(obj_id=1, center=(0.0, 0.55, 0.16), extents=(0.36, 0.36, 0.32), embedding_index=1),
        Cuboid(obj_id=2, center=(0.0, 0.0, 0.3), extents=(0.9, 0.1, 0.6), embedding_index=2),
        Cuboid(obj_id=3, center=(0.5, -0.55, 0.17), extents=(0.34, 0.34, 0.34), embedding_index=3),
    )
    suite.append(
        (
            SynthScene(
                scene_id="stress-occlusion",
                seed=106,
                cuboids=occl_objs,
                changes=(ChangeSpec(obj_id=3, kind="Removed"),),
                before_trajectory=Trajectory(
                    kind="orbit",
                    n_frames=n_frames,
                    radius=1.7,
                    height=0.55,
                    angle_start=math.pi / 2 - 0.5,
                    angle_end=math.pi / 2 + 0.5,
                    target_radius=0.0,
                    target_height=0.2,
                ),
                after_trajectory=Trajectory(
                    kind="orbit",
                    n_frames=n_frames,
                    radius=1.7,
                    height=0.55,
                    angle_start=-math.pi / 2 - 0.5,
                    angle_end=-math.pi / 2 + 0.5,
                    target_radius=0.0,
                    target_height=0.2,
                ),
            ),
            {"kind": "occlusion", "hidden_obj": 1, "changes": {3: "Removed"}},
        )
    )

    # two-image case
    suite.append(
        (
            SynthScene(
                scene_id="stress-two-image",
                seed=107,
                cuboids=base_objs,
                changes=(ChangeSpec(obj_id=1, kind="Removed"),),
                before_trajectory=inward_orbit(1, angle_start=0.8, angle_end=0.8),
                after_trajectory=inward_orbit(1, angle_start=0.85, angle_end=0.85),
            ),
            {"kind": "exact", "changes": {1: "Removed"}},
        )
    )

    return suite

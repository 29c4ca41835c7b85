"""Score aggregation, entropy thresholding, merging, and classification."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_frame, make_pose
from oracles import associate_partition, geo_fraction_brute, kapur_scan
from scenediff.association import (
    ChangedObject,
    SelectedRegion,
    _geo_fraction,
    associate,
    average_frame_scores,
    classify,
    detect_regions,
    emit_detections,
    kapur_threshold,
    voxel_consistency,
)

FEAT_C = 8


def unit_feature(axis, c=FEAT_C):
    v = np.zeros(c, dtype=np.float64)
    v[axis] = 1.0
    return v


def blend_feature(cos, axis_a=0, axis_b=1, c=FEAT_C):
    """Unit vector at the given cosine to the axis_a basis vector."""
    v = np.zeros(c, dtype=np.float64)
    v[axis_a] = cos
    v[axis_b] = math.sqrt(max(0.0, 1.0 - cos * cos))
    return v


def make_region(
    side="before",
    frame_index=0,
    frame_id=None,
    label=1,
    score=0.5,
    feature=None,
    points=None,
    centroid=(1.0, 2.0),
):
    if feature is None:
        feature = unit_feature(0)
    if points is None:
        points = np.zeros((4, 3), dtype=np.float64)
    return SelectedRegion(
        side=side,
        frame_index=frame_index,
        frame_id=frame_index if frame_id is None else frame_id,
        label=label,
        score=score,
        feature=np.asarray(feature, dtype=np.float64),
        points=np.asarray(points, dtype=np.float64),
        centroid=centroid,
    )


def grid_points(n, origin=(0.0, 0.0, 0.0), spacing=0.001):
    """n points in a tight line so they share one object cloud."""
    pts = np.zeros((n, 3), dtype=np.float64)
    pts[:, 0] = origin[0] + spacing * np.arange(n)
    pts[:, 1] = origin[1]
    pts[:, 2] = origin[2]
    return pts


# ---------------------------------------------------------------- averaging


def test_average_frame_scores_hand_example():
    fused = {
        ("before", 0, 1): {1: 0.2},
        ("before", 0, 2): {1: 0.4},
    }
    out = average_frame_scores(fused)
    assert set(out) == {("before", 0)}
    assert out[("before", 0)][1] == pytest.approx(0.3, abs=1e-12)


def test_average_frame_scores_groups_by_side_and_source():
    fused = {
        ("before", 0, 1): {1: 0.1, 2: 0.3},
        ("before", 1, 0): {1: 0.7},
        ("after", 0, 0): {4: 1.0},
    }
    out = average_frame_scores(fused)
    assert set(out) == {("before", 0), ("before", 1), ("after", 0)}
    assert out[("before", 0)] == {1: pytest.approx(0.1), 2: pytest.approx(0.3)}
    assert out[("before", 1)][1] == pytest.approx(0.7)
    assert out[("after", 0)][4] == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_average_frame_scores_matches_plain_mean(data):
    n_src = data.draw(st.integers(1, 3))
    n_dst = data.draw(st.integers(1, 3))
    labels = data.draw(st.lists(st.integers(1, 5), min_size=1, max_size=3, unique=True))
    fused = {}
    for s in range(n_src):
        for d in range(n_dst):
            fused[("before", s, d)] = {
                lab: data.draw(st.floats(0, 1, allow_nan=False)) for lab in labels
            }
    out = average_frame_scores(fused)
    for s in range(n_src):
        for lab in labels:
            expected = np.mean([fused[("before", s, d)][lab] for d in range(n_dst)])
            assert out[("before", s)][lab] == pytest.approx(expected, abs=1e-12)


# ------------------------------------------------------- voxel consistency


def test_voxel_consistency_single_frame_is_fixed_point():
    labels = np.zeros((24, 32), dtype=np.int32)
    labels[4:10, 6:14] = 1
    frame = make_frame(labels=labels)
    out = voxel_consistency((frame,), {0: {1: 0.25}})
    # every pixel carries 0.25 so each voxel mean and the region mean are
    # exactly 0.25 (sums of copies of a power of two are exact)
    assert out[0][1] == 0.25


def test_voxel_consistency_shares_across_identical_frames():
    labels = np.zeros((24, 32), dtype=np.int32)
    labels[4:10, 6:14] = 1
    f0 = make_frame(frame_id=0, labels=labels)
    f1 = make_frame(frame_id=1, labels=labels)
    out = voxel_consistency((f0, f1), {0: {1: 0.1}, 1: {1: 0.5}})
    assert out[0][1] == pytest.approx(0.3, abs=1e-12)
    assert out[1][1] == pytest.approx(0.3, abs=1e-12)


def test_voxel_consistency_distant_regions_do_not_interact():
    labels = np.zeros((24, 32), dtype=np.int32)
    labels[2:6, 2:6] = 1
    labels[18:22, 26:30] = 2
    frame = make_frame(labels=labels)
    out = voxel_consistency((frame,), {0: {1: 0.25, 2: 0.75}})
    assert out[0][1] == 0.25
    assert out[0][2] == 0.75


def test_voxel_consistency_empty_scores_no_op():
    frame = make_frame()
    out = voxel_consistency((frame,), {0: {}})
    assert out == {0: {}}


def test_voxel_consistency_region_without_valid_pixels_keeps_score():
    labels = np.zeros((24, 32), dtype=np.int32)
    labels[4:8, 4:8] = 1
    valid = np.ones((24, 32), dtype=bool)
    valid[4:8, 4:8] = False
    frame = make_frame(labels=labels, valid=valid)
    out = voxel_consistency((frame,), {0: {1: 0.9}})
    assert out[0][1] == 0.9


# ------------------------------------------------------------ thresholding


def test_kapur_empty_raises():
    with pytest.raises(ValueError):
        kapur_threshold([])


def test_kapur_degenerate_returns_common_value():
    t = kapur_threshold([0.3] * 7)
    assert t == 0.3
    # nothing is strictly above the returned threshold
    assert not any(s > t for s in [0.3] * 7)


def test_kapur_bimodal_threshold_separates_clusters():
    scores = [0.01] * 100 + [0.9] * 10
    t = kapur_threshold(scores)
    assert 0.01 < t < 0.9
    above = [s for s in scores if s > t]
    assert above == [0.9] * 10


def test_kapur_uniform_threshold_is_central():
    rng = np.random.default_rng(0)
    t = kapur_threshold(rng.uniform(0.0, 1.0, 20000))
    assert 0.4 < t < 0.6


def test_kapur_matches_exhaustive_scan():
    rng = np.random.default_rng(42)
    for trial in range(100):
        kind = trial % 4
        if kind == 0:
            arr = rng.uniform(0, 1, int(rng.integers(2, 8)))
        elif kind == 1:
            arr = rng.uniform(0, 1, int(rng.integers(8, 400)))
        elif kind == 2:
            arr = np.concatenate(
                [rng.normal(0.1, 0.02, 80), rng.normal(0.8, 0.05, 12)]
            )
        else:
            vals = rng.uniform(0, 1, int(rng.integers(2, 4)))
            arr = np.repeat(vals, rng.integers(1, 15, vals.size))
        if np.unique(arr).size < 2:
            continue
        assert kapur_threshold(arr) == kapur_scan(arr)


# ------------------------------------------------------------- selection


def test_detect_regions_strict_inequality():
    flat = {("before", 0): {1: 0.5, 2: 0.5000001}}
    hits = detect_regions(flat, 0.5)
    assert hits == [("before", 0, 2, 0.5000001)]


def test_detect_regions_sorted_output():
    flat = {
        ("before", 1): {2: 0.9},
        ("before", 0): {1: 0.8},
        ("after", 0): {5: 0.7},
    }
    hits = detect_regions(flat, 0.0)
    assert hits == [
        ("after", 0, 5, 0.7),
        ("before", 0, 1, 0.8),
        ("before", 1, 2, 0.9),
    ]


# ------------------------------------------------------------- geo fraction


def test_geo_fraction_all_near():
    pts = grid_points(5)
    assert _geo_fraction(pts, pts.copy(), 0.02) == 1.0


def test_geo_fraction_partial():
    cloud = grid_points(5)
    region = np.concatenate([grid_points(7), grid_points(3, origin=(5.0, 0, 0))])
    assert _geo_fraction(region, cloud, 0.02) == pytest.approx(0.7)


def test_geo_fraction_empty_inputs():
    pts = grid_points(3)
    empty = np.zeros((0, 3))
    assert _geo_fraction(empty, pts, 0.02) == 0.0
    assert _geo_fraction(pts, empty, 0.02) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_geo_fraction_matches_brute_force(data):
    n_r = data.draw(st.integers(1, 12))
    n_c = data.draw(st.integers(1, 12))
    rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
    region = rng.uniform(-1, 1, (n_r, 3))
    cloud = rng.uniform(-1, 1, (n_c, 3))
    got = _geo_fraction(region, cloud, 0.02)
    want = geo_fraction_brute(region, cloud, 0.02)
    assert got == pytest.approx(want, abs=1e-12)


# ------------------------------------------------------------- association


def test_associate_identical_regions_merge():
    pts = grid_points(6)
    r0 = make_region(frame_index=0, score=0.4, points=pts)
    r1 = make_region(frame_index=1, score=0.6, points=pts)
    objs = associate([r0, r1])
    assert len(objs) == 1
    o = objs[0]
    assert o.n_merged == 2
    assert o.confidence == 0.6
    assert o.cloud.shape == (12, 3)
    assert [m.frame_index for m in o.members] == [0, 1]
    np.testing.assert_allclose(o.feature, unit_feature(0))


def test_associate_dissimilar_regions_stay_separate():
    r0 = make_region(frame_index=0, feature=unit_feature(0), points=grid_points(4))
    r1 = make_region(
        frame_index=1, feature=unit_feature(1), points=grid_points(4, origin=(5.0, 0, 0))
    )
    objs = associate([r0, r1])
    assert len(objs) == 2
    assert {o.n_merged for o in objs} == {1}


def test_associate_merge_just_above_boundary():
    # feature cosine 0.8 plus geometric fraction 0.7 exceeds the 1.4 gate
    pts = grid_points(10)
    region2_pts = np.concatenate([grid_points(7), grid_points(3, origin=(5.0, 0, 0))])
    r0 = make_region(frame_index=0, feature=unit_feature(0), points=pts, score=0.5)
    r1 = make_region(
        frame_index=1, feature=blend_feature(0.8), points=region2_pts, score=0.5
    )
    objs = associate([r0, r1])
    assert len(objs) == 1
    expected = 0.5 * unit_feature(0) + 0.5 * blend_feature(0.8)
    np.testing.assert_allclose(objs[0].feature, expected, atol=1e-12)


def test_associate_exact_boundary_does_not_merge():
    # cosine 1.0 plus fraction 0.4 lands exactly on the gate; the rule is
    # strictly greater so the regions stay separate
    pts = grid_points(5)
    region2_pts = np.concatenate([pts[:2], grid_points(3, origin=(5.0, 0, 0))])
    r0 = make_region(frame_index=0, points=pts)
    r1 = make_region(frame_index=1, points=region2_pts)
    s = 1.0 + _geo_fraction(region2_pts, pts, 0.02)
    assert s == 1.4
    objs = associate([r0, r1])
    assert len(objs) == 2


def test_associate_running_average_weights():
    # third identical region joins with weight 1/3
    f_a = unit_feature(0)
    f_b = blend_feature(0.9)
    pts = grid_points(8)
    r0 = make_region(frame_index=0, feature=f_a, points=pts)
    r1 = make_region(frame_index=1, feature=f_a, points=pts)
    r2 = make_region(frame_index=2, feature=f_b, points=pts)
    objs = associate([r0, r1, r2])
    assert len(objs) == 1
    expected = (1.0 / 3.0) * f_b + (2.0 / 3.0) * f_a
    np.testing.assert_allclose(objs[0].feature, expected, atol=1e-12)


@st.composite
def region_batch(draw):
    n = draw(st.integers(1, 8))
    rng = np.random.default_rng(draw(st.integers(0, 100_000)))
    regions = []
    for i in range(n):
        axis = int(rng.integers(0, 3))
        cos = float(rng.uniform(0.4, 1.0))
        feature = blend_feature(cos, axis_a=axis, axis_b=(axis + 3) % FEAT_C)
        center = rng.uniform(-0.5, 0.5, 3) * rng.integers(0, 2)
        pts = center + rng.uniform(-0.05, 0.05, (int(rng.integers(1, 12)), 3))
        regions.append(
            make_region(
                frame_index=i,
                label=int(rng.integers(1, 4)),
                score=float(rng.uniform(0.1, 1.0)),
                feature=feature,
                points=pts,
            )
        )
    return regions


@settings(max_examples=40, deadline=None)
@given(region_batch())
def test_associate_partition_matches_reference(regions):
    objs = associate(regions)
    got = {frozenset((m.frame_index, m.label) for m in o.members) for o in objs}
    want = associate_partition(regions, 0.02, 1.4)
    assert got == set(want)


# ---------------------------------------------------------- classification


def numbered(objs, start=1):
    for i, o in enumerate(objs):
        o.object_id = start + i
    return objs


def make_object(side, feature, object_id=-1, confidence=0.5):
    return ChangedObject(
        object_id=object_id,
        side=side,
        feature=np.asarray(feature, dtype=np.float64),
        cloud=grid_points(4),
        members=[make_region(side=side, feature=feature)],
        n_merged=1,
        confidence=confidence,
    )


def test_classify_identical_features_become_moved():
    b = numbered([make_object("before", unit_feature(0))], start=1)
    a = numbered([make_object("after", unit_feature(0))], start=2)
    classify(b, a)
    assert b[0].change_type == "Moved"
    assert a[0].change_type == "Moved"
    assert b[0].moved_partner == 2
    assert a[0].moved_partner == 1


def test_classify_low_similarity_becomes_removed_and_added():
    b = numbered([make_object("before", unit_feature(0))], start=1)
    a = numbered([make_object("after", blend_feature(0.6))], start=2)
    classify(b, a)
    assert b[0].change_type == "Removed"
    assert a[0].change_type == "Added"
    assert b[0].moved_partner is None
    assert a[0].moved_partner is None


def test_classify_greedy_prefers_highest_cosine():
    b = numbered([make_object("before", unit_feature(0))], start=1)
    a = numbered(
        [
            make_object("after", blend_feature(0.8)),
            make_object("after", blend_feature(0.9)),
        ],
        start=2,
    )
    classify(b, a)
    assert b[0].change_type == "Moved"
    assert b[0].moved_partner == 3
    assert a[1].moved_partner == 1
    assert a[0].change_type == "Added"


def test_classify_zero_feature_is_never_matched():
    b = numbered([make_object("before", np.zeros(FEAT_C))], start=1)
    a = numbered([make_object("after", unit_feature(0))], start=2)
    classify(b, a)
    assert b[0].change_type == "Removed"
    assert a[0].change_type == "Added"


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_classify_greedy_matching_invariants(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 100_000)))
    nb = data.draw(st.integers(0, 4))
    na = data.draw(st.integers(0, 4))

    def rand_feature():
        v = rng.normal(size=FEAT_C)
        return v / np.linalg.norm(v)

    b = numbered([make_object("before", rand_feature()) for _ in range(nb)], start=1)
    a = numbered(
        [make_object("after", rand_feature()) for _ in range(na)], start=1 + nb
    )
    classify(b, a)

    def cos(x, y):
        return float(np.dot(x.feature, y.feature))

    id_to_after = {o.object_id: o for o in a}
    matched_after = set()
    for o in b:
        if o.change_type == "Moved":
            partner = id_to_after[o.moved_partner]
            assert partner.change_type == "Moved"
            assert partner.moved_partner == o.object_id
            assert cos(o, partner) > 0.7
            assert partner.object_id not in matched_after
            matched_after.add(partner.object_id)
        else:
            assert o.change_type == "Removed"
    for o in a:
        if o.change_type != "Moved":
            assert o.change_type == "Added"
            assert o.object_id not in matched_after
    # any unmatched cross pair above the gate must be blocked by a strictly
    # better or equal earlier match at one of its endpoints
    for ob in b:
        for oa in a:
            if ob.moved_partner == oa.object_id:
                continue
            c = cos(ob, oa)
            if c <= 0.7:
                continue
            blocked = False
            if ob.change_type == "Moved" and cos(ob, id_to_after[ob.moved_partner]) >= c:
                blocked = True
            if oa.change_type == "Moved":
                partner_b = next(x for x in b if x.object_id == oa.moved_partner)
                if cos(partner_b, oa) >= c:
                    blocked = True
            assert blocked


# -------------------------------------------------------------- emission


def test_emit_detections_structure_and_order():
    pts = grid_points(3)
    b = ChangedObject(
        object_id=2,
        side="before",
        feature=unit_feature(0),
        cloud=pts,
        members=[
            make_region(frame_index=1, label=3, centroid=(4.0, 5.0), frame_id=11),
            make_region(frame_index=0, label=2, centroid=(1.5, 2.5), frame_id=10),
        ],
        n_merged=2,
        confidence=0.75,
        change_type="Removed",
    )
    a = ChangedObject(
        object_id=1,
        side="after",
        feature=unit_feature(0),
        cloud=pts,
        members=[make_region(side="after", frame_index=0, label=1, centroid=(7.0, 8.0))],
        n_merged=1,
        confidence=0.5,
        change_type="Moved",
        moved_partner=9,
    )
    out = emit_detections([b, a], "scene-x")
    assert out["scene_id"] == "scene-x"
    assert [e["object_id"] for e in out["objects"]] == [1, 2]
    moved, removed = out["objects"]
    assert moved["change_type"] == "Moved"
    assert moved["partner_id"] == 9
    assert moved["detections"] == [
        {"video": "after", "frame_id": 0, "x": 7.0, "y": 8.0}
    ]
    assert removed["change_type"] == "Removed"
    assert "partner_id" not in removed
    assert removed["detections"] == [
        {"video": "before", "frame_id": 10, "x": 1.5, "y": 2.5},
        {"video": "before", "frame_id": 11, "x": 4.0, "y": 5.0},
    ]
    assert removed["confidence"] == 0.75


def test_emit_detections_empty():
    out = emit_detections([], "empty")
    assert out == {"scene_id": "empty", "objects": []}

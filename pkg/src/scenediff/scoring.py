"""Per-pair change cues and their fusion into region-level scores.

For one directed frame pair (src, dst) three cues are computed:

  e_geom(p)   signed depth difference at the reprojected pixel. Positive
              means dst's surface lies behind the point src saw there, i.e.
              content present only in src. Negative is ambiguous (occlusion
              or new content in dst), so only values >= tau_occ pass into the
              directional mask.
  e_feat(p)   masked feature dissimilarity 1 - cos between src's feature at p
              and dst's feature at the reprojected pixel.
  e_region(r) 1 - cos between a src region's mean feature and its best-matching
              dst region's mean feature. Regions mostly covered by the
              directional mask are excluded (geometry already flags them).

The fused region score is a weighted sum of region means of the dense cues
plus the region matching term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assets import FeatureMap, FrameAsset
from .errors import NoDstRegions
from .geometry import Reprojection, _memo, reproject

TAU_OCC = -0.02
WEIGHTS = (1.0, 0.5, 0.2)
EXCLUDE_FRAC = 0.6


def feature_cell_index(coords: np.ndarray, image_size: int, grid_size: int) -> np.ndarray:
    """Nearest feature cell along one axis for (continuous) pixel coordinates.

    Pixel centers sit at integer coordinates, so coordinate x covers the
    normalized span (x + 0.5) / image_size.
    """
    cells = np.floor((coords + 0.5) * (grid_size / image_size)).astype(np.int64)
    return np.clip(cells, 0, grid_size - 1)


def pixel_features(frame: FrameAsset) -> np.ndarray:
    """Feature vector per pixel, (H, W, C), by nearest-cell lookup."""

    def compute():
        h, w = frame.shape
        fh, fw = frame.features.grid_shape
        rows = feature_cell_index(np.arange(h, dtype=np.float64), h, fh)
        cols = feature_cell_index(np.arange(w, dtype=np.float64), w, fw)
        return frame.features.values[rows[:, None], cols[None, :]]

    return _memo(frame, "_memo_pixfeat", compute)


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine along the last axis. Zero-norm vectors compare as identical
    (cos = 1) so missing features never fabricate change evidence."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    dot = np.einsum("...c,...c->...", a.astype(np.float64), b.astype(np.float64))
    denom = na * nb
    out = np.ones_like(dot, dtype=np.float64)
    nz = denom > 0
    out[nz] = dot[nz] / denom[nz]
    return out


@dataclass(frozen=True)
class DirectionalMask:
    """Pixels of src that geometry trusts in this direction: visible in dst's
    frustum, landing on valid dst depth, and not flagged as occluded."""

    mask: np.ndarray


@dataclass(frozen=True)
class PairScores:
    """All cues for one directed (src, dst) comparison."""

    direction: tuple[str, int, int]
    e_geom: np.ndarray
    e_feat: np.ndarray
    e_region: dict[int, float]
    excluded_regions: frozenset[int]
    mask: np.ndarray
    src_valid: np.ndarray


def geom_score(
    src: FrameAsset,
    dst: FrameAsset,
    field: Reprojection,
    tau_occ: float = TAU_OCC,
) -> tuple[np.ndarray, DirectionalMask]:
    """Depth-difference cue and the directional visibility mask.

    e_geom(p) = D_dst(p') - reprojected depth, sampled nearest-neighbor,
    zero where undefined. mask(p) = (e_geom >= tau_occ) and in_bounds and
    dst-valid at p'.
    """
    ui, vi = field.nearest_pixel()
    dst_valid = dst.depth.validity[vi, ui]
    observed = dst.depth.values[vi, ui].astype(np.float64)
    defined = field.in_bounds & dst_valid
    e_geom = np.where(defined, observed - field.depth_in_dst, 0.0)
    mask = defined & (e_geom >= tau_occ)
    return e_geom, DirectionalMask(mask=mask)


def pixel_feature_norms(frame: FrameAsset) -> np.ndarray:
    """Norm of each pixel's feature vector, (H, W) float32."""

    def compute():
        f = pixel_features(frame)
        return np.sqrt(np.einsum("hwc,hwc->hw", f, f))

    return _memo(frame, "_memo_pixnorm", compute)


def _cell_norms(frame: FrameAsset) -> np.ndarray:
    def compute():
        f = frame.features.values
        return np.sqrt(np.einsum("hwc,hwc->hw", f, f))

    return _memo(frame, "_memo_cellnorm", compute)


def feat_score(
    src: FrameAsset,
    dst: FrameAsset,
    field: Reprojection,
    mask: DirectionalMask,
) -> np.ndarray:
    """Masked reprojected-feature dissimilarity, (H, W) in [0, 2]."""
    src_feat = pixel_features(src)
    dh, dw = dst.shape
    fh, fw = dst.features.grid_shape
    cell_r = feature_cell_index(field.v, dh, fh)
    cell_c = feature_cell_index(field.u, dw, fw)
    dst_feat = dst.features.values[cell_r, cell_c]
    # single-precision products; the norm caches keep this the hot path's
    # only full-image reduction
    dot = np.einsum("hwc,hwc->hw", src_feat, dst_feat).astype(np.float64)
    denom = (pixel_feature_norms(src) * _cell_norms(dst)[cell_r, cell_c]).astype(np.float64)
    cos = np.ones_like(dot)
    nz = denom > 0
    cos[nz] = dot[nz] / denom[nz]
    return np.where(mask.mask, 1.0 - cos, 0.0)


def region_mean_features(frame: FrameAsset) -> dict[int, np.ndarray]:
    """Mean pixel-level feature per nonzero region label."""

    def compute():
        feats = pixel_features(frame).astype(np.float64)
        labels = frame.regions.labels
        uniq, inverse = np.unique(labels, return_inverse=True)
        inverse = inverse.reshape(labels.shape)
        c = feats.shape[2]
        sums = np.zeros((uniq.size, c), dtype=np.float64)
        np.add.at(sums, inverse.ravel(), feats.reshape(-1, c))
        counts = np.bincount(inverse.ravel(), minlength=uniq.size).astype(np.float64)
        return {
            int(lab): sums[k] / counts[k]
            for k, lab in enumerate(uniq)
            if lab != 0
        }

    return _memo(frame, "_memo_regfeat", compute)


def region_match_score(
    src: FrameAsset,
    dst: FrameAsset,
    mask: DirectionalMask,
    exclude_frac: float = EXCLUDE_FRAC,
    exclude_on: str = "masked",
) -> tuple[dict[int, float], frozenset[int]]:
    """Best-match feature dissimilarity per src region, plus the excluded set.

    A region is excluded from matching when more than ``exclude_frac`` of its
    pixels are covered by the directional mask (``exclude_on="masked"``) or by
    its complement (``exclude_on="unmasked"``). Raises ``NoDstRegions`` when
    dst has no regions at all.
    """
    if exclude_on not in ("masked", "unmasked"):
        raise ValueError(f"exclude_on must be 'masked' or 'unmasked', got {exclude_on!r}")
    src_regions = src.regions.region_list()
    dst_means = region_mean_features(dst)
    if not dst_means:
        raise NoDstRegions(f"frame {dst.frame_id} has no regions to match against")
    dst_labels = sorted(dst_means)
    dst_mat = np.stack([dst_means[l] for l in dst_labels])

    coverage_grid = mask.mask if exclude_on == "masked" else ~mask.mask
    labels = src.regions.labels
    src_means = region_mean_features(src)

    e_region: dict[int, float] = {}
    excluded = set()
    for lab, count in src_regions:
        covered = int(coverage_grid[labels == lab].sum())
        if covered > exclude_frac * count:
            excluded.add(lab)
            continue
        cos = _cosine(src_means[lab][None, :], dst_mat)
        # argmax ties break to the lowest dst label (argmax returns first max)
        best = int(np.argmax(cos))
        e_region[lab] = float(1.0 - cos[best])
    return e_region, frozenset(excluded)


def score_pair(
    src: FrameAsset,
    dst: FrameAsset,
    direction: tuple[str, int, int],
    tau_occ: float = TAU_OCC,
    exclude_frac: float = EXCLUDE_FRAC,
    exclude_on: str = "masked",
) -> PairScores:
    """All three cues for one directed comparison.

    When dst carries no regions, region matching is skipped: every src region
    is excluded and contributes no e_region term.
    """
    field = reproject(src, dst)
    e_geom, mask = geom_score(src, dst, field, tau_occ)
    e_feat = feat_score(src, dst, field, mask)
    try:
        e_region, excluded = region_match_score(src, dst, mask, exclude_frac, exclude_on)
    except NoDstRegions:
        e_region = {}
        excluded = frozenset(lab for lab, _ in src.regions.region_list())
    return PairScores(
        direction=direction,
        e_geom=e_geom,
        e_feat=e_feat,
        e_region=e_region,
        excluded_regions=excluded,
        mask=mask.mask,
        src_valid=src.depth.validity,
    )


def fuse(
    scores: PairScores,
    regions,
    weights: tuple[float, float, float] = WEIGHTS,
) -> dict[int, float]:
    """Fused score per region: weighted sum of region-mean dense cues and the
    region matching term.

    Dense means run over the region's src-valid pixels; a region with no
    valid pixel scores 0. Excluded regions contribute no matching term.
    """
    lg, lf, lr = weights
    labels = regions.labels
    uniq, inverse = np.unique(labels, return_inverse=True)
    flat_inv = inverse.ravel()
    valid = scores.src_valid.ravel().astype(np.float64)
    n_valid = np.bincount(flat_inv, weights=valid, minlength=uniq.size)
    geom_sums = np.bincount(
        flat_inv, weights=scores.e_geom.ravel() * valid, minlength=uniq.size
    )
    feat_sums = np.bincount(
        flat_inv, weights=scores.e_feat.ravel() * valid, minlength=uniq.size
    )
    fused: dict[int, float] = {}
    for k, lab in enumerate(uniq):
        lab = int(lab)
        if lab == 0:
            continue
        if n_valid[k] == 0:
            fused[lab] = 0.0
            continue
        delta = lg * geom_sums[k] / n_valid[k] + lf * feat_sums[k] / n_valid[k]
        if lab in scores.e_region:
            delta += lr * scores.e_region[lab]
        fused[lab] = float(delta)
    return fused

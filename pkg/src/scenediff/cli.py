"""Command-line entry point: detect, eval, synth, viz."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .assets import load_sequence_pair, load_split_dirs, save_sequence_pair
from .config import PipelineConfig
from .errors import DecodeError, InputError, SceneDiffError
from .evaluation import evaluate
from .pipeline import run_pipeline
from .synth import NoiseSpec, random_scene, generate, stress_suite
from .viz import write_overlays, write_score_cloud

log = logging.getLogger("scenediff")


def _setup_logging() -> None:
    level_name = os.environ.get("SCENEDIFF_LOG", "").upper()
    if level_name:
        logging.basicConfig(
            level=getattr(logging, level_name, logging.INFO),
            format="%(asctime)s %(name)s %(levelname)s %(message)s",
        )


def _write_json(data: dict, path: str) -> None:
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def _read_json_file(path: str) -> dict:
    if not os.path.isfile(path):
        raise InputError(f"no such file: {path}")
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DecodeError(f"{path}: {e}") from e


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides: dict = {
        "tau_occ": args.tau_occ,
        "covis_threshold": args.covis,
        "exclude_frac": args.exclude_frac,
        "sigma_geo": args.sigma_geo,
        "sigma_merge": args.sigma_merge,
        "tau_sim": args.tau_sim,
        "voxel_size": args.voxel,
        "workers": args.workers,
    }
    if args.weights is not None:
        parts = args.weights.split(",")
        if len(parts) != 3:
            raise InputError(f"--weights expects three comma-separated values, got {args.weights!r}")
        try:
            g, f, r = (float(p) for p in parts)
        except ValueError as e:
            raise InputError(f"--weights: {e}") from e
        overrides.update(weight_geom=g, weight_feat=f, weight_region=r)
    if args.threshold is not None:
        if args.threshold == "kapur":
            overrides["threshold_mode"] = "kapur"
        elif args.threshold.startswith("fixed:"):
            try:
                overrides["fixed_tau"] = float(args.threshold[len("fixed:"):])
            except ValueError as e:
                raise InputError(f"--threshold: {e}") from e
            overrides["threshold_mode"] = "fixed"
        else:
            raise InputError(
                f"--threshold must be 'kapur' or 'fixed:X', got {args.threshold!r}"
            )
    return cfg.with_overrides(**overrides)


def _load_pair(args: argparse.Namespace):
    if args.pair_dir is not None:
        if args.before or args.after:
            raise InputError("give either a pair directory or --before/--after, not both")
        return load_sequence_pair(args.pair_dir)
    if not (args.before and args.after):
        raise InputError("need a pair directory or both --before and --after")
    return load_split_dirs(args.before, args.after)


def cmd_detect(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    pair = _load_pair(args)
    log.info("loaded scene %s (%d+%d frames)", pair.scene_id, len(pair.before), len(pair.after))
    out = run_pipeline(pair, cfg)
    _write_json(out, args.out)
    counts: dict[str, int] = {}
    for obj in out["objects"]:
        counts[obj["change_type"]] = counts.get(obj["change_type"], 0) + 1
    summary = ", ".join(f"{counts[k]} {k}" for k in sorted(counts)) or "no changes"
    print(
        f"{pair.scene_id}: {len(out['objects'])} objects ({summary}); "
        f"threshold {out['info']['threshold']:.4f}; "
        f"{len(out['info']['frame_pairs'])} frame pairs -> {args.out}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    dets = _read_json_file(args.pred)
    gt = _read_json_file(args.gt)
    report = evaluate(dets, gt)
    _write_json(report, args.out)
    print(
        f"per_view_ap={report['per_view_ap']:.4f} "
        f"per_scene_ap={report['per_scene_ap']:.4f} "
        f"per_scene_ap_type={report['per_scene_ap_type']:.4f}"
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.stress:
        matches = [s for s, _exp in stress_suite() if s.scene_id == args.stress]
        if not matches:
            names = ", ".join(s.scene_id for s, _ in stress_suite())
            raise InputError(f"unknown stress scene {args.stress!r}; available: {names}")
        spec = matches[0]
    else:
        spec = random_scene(
            seed=args.seed,
            n_objects=args.n_objects,
            n_changes=args.n_changes,
            n_frames=args.frames,
            noise=NoiseSpec(
                depth_sigma=args.noise_depth, feat_sigma=args.noise_feat
            ),
        )
    pair, gt = generate(spec, out_dir=args.out)
    _write_json(gt, os.path.join(args.out, "gt.json"))
    print(
        f"{spec.scene_id}: {len(pair.before)}+{len(pair.after)} frames, "
        f"{len(gt['objects'])} changed objects -> {args.out}"
    )
    return 0


def cmd_viz(args: argparse.Namespace) -> int:
    pair = load_sequence_pair(args.pair_dir)
    dets = _read_json_file(args.detections)
    os.makedirs(args.out, exist_ok=True)
    paths = write_overlays(pair, dets, args.out)
    cloud = write_score_cloud(pair, dets, os.path.join(args.out, "cloud.ply"))
    print(f"{len(paths)} overlays + {os.path.basename(cloud)} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenediff",
        description="Object-level change detection between two captures of a scene.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the detection pipeline on an asset directory")
    p.add_argument("pair_dir", nargs="?", help="directory with manifest.json, before/, after/")
    p.add_argument("--before", help="before-video frame directory (with --after)")
    p.add_argument("--after", help="after-video frame directory (with --before)")
    p.add_argument("--out", required=True, help="output detections JSON")
    p.add_argument("--config", help="JSON config file (defaults < file < flags)")
    p.add_argument("--tau-occ", type=float, dest="tau_occ")
    p.add_argument("--weights", help="geometry,feature,region weights as g,f,r")
    p.add_argument("--covis", type=float, help="frame pairing co-visibility threshold")
    p.add_argument("--exclude-frac", type=float, dest="exclude_frac")
    p.add_argument("--sigma-geo", type=float, dest="sigma_geo")
    p.add_argument("--sigma-merge", type=float, dest="sigma_merge")
    p.add_argument("--tau-sim", type=float, dest="tau_sim")
    p.add_argument("--voxel", type=float, help="voxel edge length in normalized units")
    p.add_argument("--threshold", help="'kapur' or 'fixed:X'")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score a detections file against ground truth")
    p.add_argument("pred", help="detections JSON")
    p.add_argument("gt", help="ground-truth JSON")
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output asset directory")
    p.add_argument("--frames", type=int, default=8, help="frames per video")
    p.add_argument("--n-objects", type=int, dest="n_objects")
    p.add_argument("--n-changes", type=int, dest="n_changes")
    p.add_argument("--noise-depth", type=float, default=0.0, dest="noise_depth")
    p.add_argument("--noise-feat", type=float, default=0.0, dest="noise_feat")
    p.add_argument("--stress", help="emit a named stress scene instead of a random one")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("viz", help="render detection overlays and a score cloud")
    p.add_argument("pair_dir")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_viz)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except SceneDiffError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

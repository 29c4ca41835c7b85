"""Command-line entry: one export per invocation."""

from __future__ import annotations

import argparse
import os
import sys

from .backbones import BUILTIN_FEATURES, BUILTIN_GEOMETRY, BUILTIN_SEGMENTATION
from .errors import ExporterError, InputError
from .export import ExportJob, export


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="asset-export",
        description=(
            "Turn a before/after video pair (or frame directories) into a "
            "validated per-frame asset directory"
        ),
    )
    p.add_argument("--before", required=True, help="before video file or frame directory")
    p.add_argument("--after", required=True, help="after video file or frame directory")
    p.add_argument("--out", required=True, help="output asset directory")
    p.add_argument("--fps", type=float, default=1.0, help="sampling rate in frames per second")
    p.add_argument("--geom-model", default=BUILTIN_GEOMETRY, dest="geom_model")
    p.add_argument("--feat-model", default=BUILTIN_FEATURES, dest="feat_model")
    p.add_argument("--seg-model", default=BUILTIN_SEGMENTATION, dest="seg_model")
    p.add_argument(
        "--source-fps",
        type=float,
        default=30.0,
        dest="source_fps",
        help="frame rate assumed for directory inputs (videos carry their own)",
    )
    p.add_argument("--scene-id", dest="scene_id", help="scene id for the manifest")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    scene_id = args.scene_id or os.path.basename(os.path.normpath(args.out)) or "export"
    try:
        job = ExportJob(
            before=args.before,
            after=args.after,
            out=args.out,
            fps=args.fps,
            geom_model=args.geom_model,
            feat_model=args.feat_model,
            seg_model=args.seg_model,
            source_fps=args.source_fps,
            scene_id=scene_id,
        )
        out = export(job)
    except InputError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except ExporterError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(f"{scene_id}: validated assets -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

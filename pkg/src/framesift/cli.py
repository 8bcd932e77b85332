"""Command line entry point: ``framesift <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or processing error, 2 usage error,
3 missing input path, 10-16 pipeline stage failure (10 + stage position in
categorize, background, sample, dedup, negatives, split, augment).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__, kernels
from ._util import canonical_json
from .augmentation import AugmentPolicy, materialize
from .background import BackgroundParams, estimate_background, estimate_background_windows
from .config import CONFIG_SCHEMA, ConfigError, default_config, load_config, merge, validate_config
from .evaluation import COCO_THRESHOLDS, evaluate
from .media_io import (
    MANIFEST_SCHEMA, MediaError, list_videos, open_video, read_detections, read_manifest, read_pnm,
    write_detections, write_manifest, write_pnm,
)
from .pipeline import STAGES, PipelineError, run_pipeline
from .sampling import (
    DuplicateFilterParams, audit_annotations, category_stats, compute_sample_plan, filter_duplicates,
    format_gap_report, inject_negatives, select_frames, split_manifest,
)
from .scene import ClassifierParams, categorize_videos, format_category_report, read_category_report
from .tta import fuse, parse_view, unmap_detections

log = logging.getLogger("framesift")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_MISSING = 0, 1, 2, 3


def _jobs(args) -> int:
    if args.jobs is not None:
        return args.jobs
    env = os.environ.get("FRAMESIFT_JOBS")
    return int(env) if env else 1


def _fps(text) -> Fraction:
    return Fraction(text)


def _videos_by_id(directory, fps):
    return {v.source.video_id: v for v in list_videos(directory, fps)}


# --------------------------------------------------------------------------- commands


def cmd_categorize(args):
    bg = BackgroundParams(args.window_seconds, args.keep_fraction, args.seed)
    clf = ClassifierParams(args.night_threshold, args.fog_epsilon)
    res = categorize_videos(list_videos(args.videos, args.fps), bg, clf, _jobs(args))
    Path(args.out).write_text(format_category_report(res.results, bg, clf), encoding="utf-8", newline="\n")
    for vid, err in sorted(res.failures.items()):
        print(f"video {vid}: {err}", file=sys.stderr)
    print(f"categorized {len(res.results)} videos -> {args.out}")
    return EXIT_OK if res.results else EXIT_ERROR


def cmd_background(args):
    video = open_video(args.video, args.video_id, args.fps)
    params = BackgroundParams(args.window_seconds, args.keep_fraction, args.seed, args.window_start)
    out = Path(args.out)
    if args.all_windows:
        models = estimate_background_windows(video, params, rgb=args.rgb, jobs=_jobs(args))
        for w, m in enumerate(models):
            path = out.with_name(f"{out.stem}_w{w:03d}{out.suffix}")
            write_pnm(path, m.background)
            print(f"{path}: {m.describe()}")
    else:
        m = estimate_background(video, params, rgb=args.rgb, jobs=_jobs(args))
        write_pnm(out, m.background)
        print(f"{out}: {m.describe()}")
    return EXIT_OK


def cmd_sample(args):
    cats = read_category_report(args.categories)
    sources = [v.source for v in list_videos(args.videos, args.fps) if v.source.video_id in cats]
    plan = compute_sample_plan(args.frames, category_stats(sources, cats), args.mode)
    manifest = select_frames(plan, [(s, cats[s.video_id]) for s in sources], args.seed)
    write_manifest(args.out, manifest)
    print(json.dumps(plan.to_dict()))
    print(f"selected {len(manifest.entries)} frames -> {args.out}")
    return EXIT_OK


def cmd_dedup(args):
    manifest = read_manifest(args.manifest)
    videos = _videos_by_id(args.videos, args.fps)
    res = filter_duplicates(
        manifest, lambda v, i: videos[v].frame(i), DuplicateFilterParams(args.hash_size, args.threshold), _jobs(args)
    )
    write_manifest(args.out or args.manifest, res.manifest)
    if args.log:
        Path(args.log).write_text(canonical_json({"removed": res.removed, "unreadable": res.unreadable}),
                                  encoding="utf-8")
    print(f"kept {len(res.manifest.positives)} frames, removed {len(res.removed)}")
    return EXIT_OK


def cmd_negatives(args):
    manifest = read_manifest(args.manifest)
    videos = _videos_by_id(args.videos, args.fps)
    params = BackgroundParams(args.window_seconds, args.keep_fraction, args.seed)
    from .background import estimate_all_backgrounds

    batch = estimate_all_backgrounds(
        [videos[v] for v in sorted({e.video_id for e in manifest.positives}) if v in videos], params,
        jobs=_jobs(args),
    )
    out, warnings = inject_negatives(manifest, batch.models, args.augment_count, AugmentPolicy.load(args.policy))
    for w in warnings:
        print(w, file=sys.stderr)
    write_manifest(args.out or args.manifest, out)
    print(f"added {len(out.negatives)} negative entries")
    return EXIT_OK


def cmd_split(args):
    res = split_manifest(read_manifest(args.manifest), args.ratio, args.seed)
    write_manifest(args.out or args.manifest, res.manifest)
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{res.runs} runs: train {res.train_frames}, val {res.val_frames} "
          f"(train fraction {res.train_fraction:.4f})")
    return EXIT_OK


def cmd_audit(args):
    gaps = audit_annotations(read_detections(args.gt, False), args.iou)
    Path(args.out).write_text(format_gap_report(gaps), encoding="utf-8", newline="\n")
    print(f"{len(gaps)} suspected missing annotations -> {args.out}")
    return EXIT_OK


def cmd_augment(args):
    manifest = read_manifest(args.manifest)
    videos = _videos_by_id(args.videos, args.fps)
    gt = read_detections(args.gt, False) if args.gt else []
    bg_params = BackgroundParams(args.window_seconds, args.keep_fraction, manifest.seed)
    backgrounds = {}

    def load_background(vid):
        if vid not in backgrounds:
            if args.backgrounds:
                backgrounds[vid] = read_pnm(Path(args.backgrounds) / f"v{vid:04d}.pgm", vid)
            else:
                from .background import video_params
                backgrounds[vid] = estimate_background(videos[vid], video_params(bg_params, vid), rgb=not args.gray).background
        return backgrounds[vid]

    res = materialize(
        manifest, args.out, lambda v, i: videos[v].frame(i, rgb=not args.gray), gt,
        policy=AugmentPolicy.load(args.policy), variants_per_frame=args.variants_per_frame,
        seed=args.seed, load_background=load_background, frame_base=args.frame_base, jobs=_jobs(args),
    )
    print(f"wrote {len(res.images)} images to {args.out} ({len(res.skipped)} entries skipped)")
    return EXIT_OK


def _parse_pred(spec: str):
    path, sep, view = spec.partition(":")
    return path, parse_view(view if sep else "identity")


def cmd_tta_fuse(args):
    views, dropped = [], {}
    for spec in args.pred:
        path, view = _parse_pred(spec)
        recs, n = unmap_detections(read_detections(path, True), view)
        views.append(recs)
        dropped[f"{path}:{view.tag}"] = n
    fused = fuse(views, args.iou, args.rule)
    write_detections(args.out, [f.record for f in fused], with_confidence=True)
    report = {
        "views": [s for s in args.pred],
        "iou": args.iou,
        "confidence_rule": args.rule,
        "dropped_outside_frame": dropped,
        "fused": len(fused),
        "member_histogram": {str(k): sum(1 for f in fused if f.member_count == k)
                             for k in sorted({f.member_count for f in fused})},
    }
    if args.report:
        Path(args.report).write_text(canonical_json(report), encoding="utf-8")
    print(f"fused {sum(len(v) for v in views)} detections from {len(views)} views into {len(fused)} -> {args.out}")
    return EXIT_OK


def cmd_eval(args):
    thresholds = COCO_THRESHOLDS if args.coco_range else (args.iou,)
    report = evaluate(read_detections(args.gt, False), read_detections(args.pred, True), thresholds)
    if args.out:
        Path(args.out).write_text(canonical_json(report.to_dict()), encoding="utf-8")
    print(report.format_table())
    return EXIT_OK


_FLAG_OVERRIDES = {
    "videos": ("paths", "videos"),
    "gt": ("paths", "gt"),
    "out": ("paths", "out"),
    "seed": ("seed",),
    "frames": ("sampling", "frames"),
    "mode": ("sampling", "mode"),
}


def cmd_pipeline(args):
    cfg = load_config(args.config) if args.config else default_config()
    override: dict = {}
    for flag, path in _FLAG_OVERRIDES.items():
        val = getattr(args, flag)
        if val is not None:
            node = override
            for key in path[:-1]:
                node = node.setdefault(key, {})
            node[path[-1]] = val
    if args.jobs is not None or os.environ.get("FRAMESIFT_JOBS"):
        override["jobs"] = _jobs(args)
    if args.frame_base_set:
        override["frame_base"] = args.frame_base
    cfg = validate_config(merge(cfg, override))
    summary = run_pipeline(cfg, args.resume)
    print(canonical_json(summary["stages"]), end="")
    return EXIT_OK


def cmd_version(args):
    print(f"framesift {__version__} (kernels: {kernels.backend()})")
    return EXIT_OK


def cmd_config(args):
    if args.action == "schema":
        print(canonical_json(CONFIG_SCHEMA if args.which == "config" else MANIFEST_SCHEMA), end="")
    elif args.action == "defaults":
        print(canonical_json(default_config()), end="")
    else:
        if not args.path:
            print("error: config validate needs a path", file=sys.stderr)
            return EXIT_USAGE
        if args.which == "manifest":
            read_manifest(args.path)
        else:
            load_config(args.path)
        print(f"{args.path}: valid")
    return EXIT_OK


def _parse_entry_id(text: str):
    parts = text.split(":")
    if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] not in ("neg", "negative")):
        raise ValueError(f"entry id must be VIDEO:FRAME or VIDEO:VARIANT:neg, got {text!r}")
    return int(parts[0]), int(parts[1]), len(parts) == 3


def cmd_explain(args):
    manifest = read_manifest(args.manifest)
    key = _parse_entry_id(args.entry)
    for e in manifest.entries:
        if e.key == key:
            break
    else:
        print(f"error: no manifest entry {args.entry}", file=sys.stderr)
        return EXIT_ERROR
    print(f"entry       video {e.video_id}, {'background variant' if e.is_negative else 'frame'} {e.frame_index}")
    print(f"category    {e.category}")
    print(f"split       {e.split}")
    print(f"negative    {e.is_negative}")
    print(f"manifest    seed={manifest.seed} mode={manifest.mode} tool_version={manifest.tool_version}")
    print("provenance:")
    for i, step in enumerate(e.provenance.split(";")):
        print(f"  {i + 1}. {step}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="framesift", description="Curate, augment and score video detection datasets.")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default $FRAMESIFT_JOBS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def video_opts(sp):
        sp.add_argument("--fps", type=_fps, default=Fraction(10), help="frame rate for PNM-directory videos")

    def bg_opts(sp, seed=True):
        sp.add_argument("--window-seconds", type=float, default=10.0)
        sp.add_argument("--keep-fraction", type=float, default=0.6)
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    def frame_base(sp):
        sp.add_argument("--frame-base", type=int, choices=(0, 1), default=1,
                        help="frame_id of the first frame in CSV files")

    sp = sub.add_parser("categorize", help="classify videos as night / fog / day")
    sp.add_argument("--videos", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--night-threshold", type=int, default=150)
    sp.add_argument("--fog-epsilon", type=float, default=0.25)
    bg_opts(sp)
    video_opts(sp)
    sp.set_defaults(func=cmd_categorize)

    sp = sub.add_parser("background", help="estimate a video's static background")
    sp.add_argument("--video", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--video-id", type=int, default=1)
    sp.add_argument("--window-start", type=int, default=None)
    sp.add_argument("--all-windows", action="store_true")
    sp.add_argument("--rgb", action="store_true")
    bg_opts(sp)
    video_opts(sp)
    sp.set_defaults(func=cmd_background)

    sp = sub.add_parser("sample", help="select frames per category")
    sp.add_argument("--videos", required=True)
    sp.add_argument("--categories", required=True)
    sp.add_argument("--frames", type=int, required=True)
    sp.add_argument("--mode", choices=("balanced", "paper"), default="balanced")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    video_opts(sp)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("dedup", help="drop near-duplicate frames")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--videos", required=True)
    sp.add_argument("--threshold", type=int, default=5)
    sp.add_argument("--hash-size", type=int, default=8)
    sp.add_argument("--out", default=None, help="default: overwrite --manifest")
    sp.add_argument("--log", default=None, help="write removed-frame log as JSON")
    video_opts(sp)
    sp.set_defaults(func=cmd_dedup)

    sp = sub.add_parser("negatives", help="add background negatives")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--videos", required=True)
    sp.add_argument("--augment-count", type=int, default=2)
    sp.add_argument("--policy", default="default6")
    sp.add_argument("--out", default=None)
    bg_opts(sp)
    video_opts(sp)
    sp.set_defaults(func=cmd_negatives)

    sp = sub.add_parser("split", help="sequence-disjoint train/val split")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--ratio", type=float, default=0.7)
    sp.add_argument("--seed", type=int, default=None, help="default: manifest seed")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("audit", help="find likely missing ground-truth boxes")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--iou", type=float, default=0.3)
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("augment", help="write augmented training images")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--videos", required=True)
    sp.add_argument("--gt", default=None)
    sp.add_argument("--policy", default="default6", help="'default6' or a policy JSON file")
    sp.add_argument("--variants-per-frame", type=int, default=6)
    sp.add_argument("--seed", type=int, default=None, help="default: manifest seed")
    sp.add_argument("--backgrounds", default=None, help="directory of vNNNN.pgm backgrounds for negatives")
    sp.add_argument("--gray", action="store_true", help="write luma PGM instead of RGB PPM")
    sp.add_argument("--out", required=True)
    bg_opts(sp, seed=False)
    frame_base(sp)
    video_opts(sp)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("tta-fuse", help="fuse detections from test-time views")
    sp.add_argument("--pred", action="append", required=True,
                    help="FILE[:identity|:hflip:WIDTH|:scale:FACTOR], repeatable")
    sp.add_argument("--iou", type=float, default=0.55)
    sp.add_argument("--rule", choices=("views", "members"), default="views")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", default=None)
    sp.set_defaults(func=cmd_tta_fuse)

    sp = sub.add_parser("eval", help="mAP of a detection file against ground truth")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--pred", required=True)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--iou", type=float, default=0.5)
    g.add_argument("--coco-range", action="store_true", help="IoU 0.50:0.05:0.95")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("pipeline", help="run every stage into one run directory")
    sp.add_argument("--config", default=None, help="config JSON (a run_summary.json also works)")
    sp.add_argument("--videos", default=None)
    sp.add_argument("--gt", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--frames", type=int, default=None)
    sp.add_argument("--mode", choices=("balanced", "paper"), default=None)
    sp.add_argument("--resume", choices=STAGES, default=None, help="resume at this stage")
    sp.add_argument("--frame-base", type=int, choices=(0, 1), default=None)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("version", help="print the tool version")
    sp.set_defaults(func=cmd_version)

    sp = sub.add_parser("config", help="print schemas/defaults or validate a file")
    sp.add_argument("action", choices=("schema", "defaults", "validate"))
    sp.add_argument("path", nargs="?")
    sp.add_argument("--which", choices=("config", "manifest"), default="config")
    sp.set_defaults(func=cmd_config)

    sp = sub.add_parser("explain", help="show the provenance of one manifest entry")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--entry", required=True, help="VIDEO:FRAME, or VIDEO:VARIANT:neg for negatives")
    sp.set_defaults(func=cmd_explain)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "pipeline":
        args.frame_base_set = args.frame_base is not None
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}\nresume with: framesift pipeline --config <run>/run_summary.json "
              f"--resume {exc.resume_token}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, MediaError, ValueError, KeyError, LookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end run: categorize -> background -> sample -> dedup -> negatives -> split -> augment.

Every stage reads its inputs from, and writes its outputs to, the run
directory, so a failed run can resume at the failing stage with all earlier
artifacts reused as they are. ``run_summary.json`` is rewritten after each
stage and carries the full resolved config; passing it back as the config
reproduces the run.
"""

from __future__ import annotations

import json
import logging
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from ._util import canonical_json
from .augmentation import AugmentPolicy, materialize
from .background import BackgroundModel, BackgroundParams, estimate_background, video_params
from .media_io import (
    Frame, list_videos, read_detections, read_manifest, read_pnm, write_manifest, write_pnm,
)
from .sampling import (
    DuplicateFilterParams, category_stats, compute_sample_plan, filter_duplicates, inject_negatives,
    select_frames, split_manifest,
)
from .scene import ClassifierParams, categorize_videos, format_category_report, read_category_report

log = logging.getLogger(__name__)

STAGES = ("categorize", "background", "sample", "dedup", "negatives", "split", "augment")
SUMMARY = "run_summary.json"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self) -> int:
        return 10 + STAGES.index(self.stage)

    @property
    def resume_token(self) -> str:
        return self.stage


def _json(path: Path, obj) -> None:
    path.write_text(canonical_json(obj), encoding="utf-8", newline="\n")


class Run:
    def __init__(self, config: dict):
        self.cfg = config
        self.out = Path(config["paths"]["out"])
        self.jobs = config["jobs"]
        self._videos = None
        self._backgrounds: dict[int, BackgroundModel] | None = None

    # ---- shared inputs

    @property
    def videos(self) -> dict:
        if self._videos is None:
            vids = list_videos(self.cfg["paths"]["videos"], Fraction(str(self.cfg["video"]["fps"])))
            self._videos = {v.source.video_id: v for v in vids}
        return self._videos

    def bg_params(self) -> BackgroundParams:
        b = self.cfg["background"]
        return BackgroundParams(b["window_seconds"], b["keep_fraction"], self.cfg["seed"])

    def load_frame(self, video_id: int, frame_index: int, rgb: bool = False) -> Frame:
        if video_id not in self.videos:
            raise LookupError(f"unknown video {video_id}")
        return self.videos[video_id].frame(frame_index, rgb=rgb)

    def load_backgrounds(self) -> dict[int, BackgroundModel]:
        if self._backgrounds is None:
            meta = json.loads((self.out / "backgrounds.json").read_text(encoding="utf-8"))
            models = {}
            for m in meta["backgrounds"]:
                vid = m["video_id"]
                frame = read_pnm(self.out / m["image"], vid, m["source_frame_indices"][0])
                params = BackgroundParams(**m["params"])
                models[vid] = BackgroundModel(frame, params, tuple(m["source_frame_indices"]), tuple(m["window"]))
            self._backgrounds = models
        return self._backgrounds

    # ---- stages

    def categorize(self) -> dict:
        clf = ClassifierParams(**self.cfg["classifier"])
        res = categorize_videos(self.videos.values(), self.bg_params(), clf, self.jobs)
        if not res.results:
            raise RuntimeError("no video could be categorized")
        self._backgrounds = res.backgrounds
        (self.out / "categories.csv").write_text(
            format_category_report(res.results, self.bg_params(), clf), encoding="utf-8", newline="\n"
        )
        counts = {c: sum(1 for r in res.results.values() if r.category.value == c) for c in ("night", "fog", "day")}
        return {"videos": len(self.videos), **counts, "failures": {str(k): v for k, v in res.failures.items()}}

    def background(self) -> dict:
        cats = read_category_report(self.out / "categories.csv")
        models = self._backgrounds or {}
        bg_dir = self.out / "backgrounds"
        bg_dir.mkdir(exist_ok=True)
        meta = []
        for vid in sorted(cats):
            model = models.get(vid) or estimate_background(self.videos[vid], video_params(self.bg_params(), vid))
            models[vid] = model
            name = f"backgrounds/v{vid:04d}.pgm"
            write_pnm(self.out / name, model.background)
            meta.append({
                "video_id": vid,
                "image": name,
                "params": model.params.to_dict(),
                "window": list(model.window),
                "source_frame_indices": list(model.source_frame_indices),
            })
        self._backgrounds = models
        _json(self.out / "backgrounds.json", {"backgrounds": meta})
        return {"backgrounds": len(meta)}

    def sample(self) -> dict:
        cats = read_category_report(self.out / "categories.csv")
        s = self.cfg["sampling"]
        sources = [v.source for v in self.videos.values() if v.source.video_id in cats]
        plan = compute_sample_plan(s["frames"], category_stats(sources, cats), s["mode"])
        manifest = select_frames(plan, [(src, cats[src.video_id]) for src in sources], self.cfg["seed"])
        write_manifest(self.out / "manifest_sampled.json", manifest)
        per_cat = {}
        for e in manifest.entries:
            per_cat[e.category] = per_cat.get(e.category, 0) + 1
        return {"selected": len(manifest.entries), "per_category": per_cat, "plan": plan.to_dict()}

    def dedup(self) -> dict:
        s = self.cfg["sampling"]
        manifest = read_manifest(self.out / "manifest_sampled.json")
        params = DuplicateFilterParams(s["hash_size"], s["dedup_threshold"])
        res = filter_duplicates(manifest, self.load_frame, params, self.jobs)
        write_manifest(self.out / "manifest_dedup.json", res.manifest)
        _json(self.out / "dedup_removed.json", {"removed": res.removed, "unreadable": res.unreadable})
        return {"kept": len(res.manifest.entries), "removed": len(res.removed), "unreadable": len(res.unreadable)}

    def policy(self) -> AugmentPolicy:
        p = self.cfg["augmentation"]["policy"]
        return AugmentPolicy.from_dict(p) if isinstance(p, dict) else AugmentPolicy.load(p)

    def negatives(self) -> dict:
        manifest = read_manifest(self.out / "manifest_dedup.json")
        out, warnings = inject_negatives(
            manifest, self.load_backgrounds(), self.cfg["sampling"]["negative_augment_count"], self.policy()
        )
        write_manifest(self.out / "manifest_negatives.json", out)
        return {"negatives": len(out.negatives), "warnings": warnings}

    def split(self) -> dict:
        manifest = read_manifest(self.out / "manifest_negatives.json")
        res = split_manifest(manifest, self.cfg["sampling"]["split_ratio"])
        write_manifest(self.out / "manifest.json", res.manifest)
        return {
            "runs": res.runs,
            "train": res.train_frames,
            "val": res.val_frames,
            "negatives_train": len(res.manifest.negatives),
            "warnings": res.warnings,
        }

    def augment(self) -> dict:
        a = self.cfg["augmentation"]
        manifest = read_manifest(self.out / "manifest.json")
        gt_path = self.cfg["paths"]["gt"]
        gt = read_detections(gt_path, False) if gt_path else []
        backgrounds = self.load_backgrounds()
        rgb = a["rgb"]

        def load_bg(vid):
            bg = backgrounds[vid].background
            if rgb and not bg.is_rgb:
                return bg.with_pixels(np.repeat(bg.pixels[..., None], 3, axis=2))
            return bg

        res = materialize(
            manifest, self.out / "augmented", lambda v, i: self.load_frame(v, i, rgb), gt,
            policy=self.policy(), variants_per_frame=a["variants_per_frame"], seed=self.cfg["seed"],
            load_background=load_bg, frame_base=self.cfg["frame_base"],
            augment_splits=tuple(a["augment_splits"]), jobs=self.jobs,
        )
        return {"images": len(res.images), "skipped": len(res.skipped)}


def check_inputs(config: dict) -> None:
    videos = config["paths"]["videos"]
    if not videos or not Path(videos).is_dir():
        raise FileNotFoundError(f"video directory not found: {videos}")
    gt = config["paths"]["gt"]
    if gt and not Path(gt).is_file():
        raise FileNotFoundError(f"ground-truth file not found: {gt}")


def run_pipeline(config: dict, resume_from: str | None = None) -> dict:
    """Run every stage (or those from ``resume_from`` on) and return the run summary.

    Raises :class:`PipelineError` naming the failed stage; earlier artifacts
    and the partial summary stay on disk.
    """
    check_inputs(config)
    if resume_from is not None and resume_from not in STAGES:
        raise ValueError(f"unknown stage {resume_from!r}; choose from {', '.join(STAGES)}")
    run = Run(config)
    run.out.mkdir(parents=True, exist_ok=True)
    summary = {
        "tool_version": __version__,
        "numpy_version": np.__version__,
        "config": config,
        "status": "running",
        "stages": {},
    }
    start = 0
    if resume_from is not None:
        start = STAGES.index(resume_from)
        prior = run.out / SUMMARY
        if prior.exists():
            old = json.loads(prior.read_text(encoding="utf-8"))
            summary["stages"] = {k: v for k, v in old.get("stages", {}).items() if STAGES.index(k) < start}
    for stage in STAGES[start:]:
        log.info("stage %s", stage)
        try:
            summary["stages"][stage] = getattr(run, stage)()
        except Exception as exc:
            summary["status"] = "failed"
            summary["failed_stage"] = stage
            summary["resume_token"] = stage
            summary["error"] = str(exc)
            _json(run.out / SUMMARY, summary)
            raise PipelineError(stage, exc) from exc
        _json(run.out / SUMMARY, summary)
    summary["status"] = "complete"
    _json(run.out / SUMMARY, summary)
    return summary

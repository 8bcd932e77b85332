"""Category-balanced frame selection, near-duplicate removal, negatives and splitting.

Near-duplicate removal uses a 64-bit average hash with transitive clustering
inside each video. It stands in for a learned clustering step and is
deterministic by construction.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from ._util import decimal_fraction, derive_seed, make_rng, round_half_up
from .augmentation import AugmentPolicy
from .background import BackgroundModel
from .evaluation import iou
from .media_io import DetectionRecord, Frame, ManifestEntry, SampleManifest, VideoSource, format_number
from .scene import SceneCategory

log = logging.getLogger(__name__)

CATEGORY_ORDER = (SceneCategory.NIGHT, SceneCategory.FOG, SceneCategory.DAY)


# --------------------------------------------------------------------------- planning


@dataclass(frozen=True)
class CategoryStats:
    category: SceneCategory
    n_videos: int
    fps: tuple[Fraction, ...]
    total_frames: int


def category_stats(sources: Iterable[VideoSource], categories: Mapping[int, SceneCategory]) -> list[CategoryStats]:
    groups: dict[SceneCategory, list[VideoSource]] = {}
    for src in sources:
        cat = categories.get(src.video_id)
        if cat is not None:
            groups.setdefault(SceneCategory(cat), []).append(src)
    return [
        CategoryStats(c, len(groups[c]), tuple(s.fps for s in groups[c]), sum(s.frame_count for s in groups[c]))
        for c in CATEGORY_ORDER if c in groups
    ]


@dataclass(frozen=True)
class SamplePlan:
    requested_frames: int
    mode: str
    rates: dict[SceneCategory, float]
    quotas: dict[SceneCategory, int]
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "requested_frames": self.requested_frames,
            "mode": self.mode,
            "rates": {c.value: r for c, r in self.rates.items()},
            "quotas": {c.value: q for c, q in self.quotas.items()},
            "warnings": list(self.warnings),
        }


def compute_sample_plan(requested: int, stats: Sequence[CategoryStats], mode: str = "balanced") -> SamplePlan:
    """Sampling rate per category.

    ``paper`` applies one global rate ``requested / total frames`` to every
    category. ``balanced`` gives each non-empty category the quota
    ``ceil(requested / #categories)`` so small categories are sampled at a
    higher rate. Rates above 1 are clamped with a warning.
    """
    if requested < 1:
        raise ValueError("requested frame count must be at least 1")
    present = [s for s in stats if s.total_frames > 0]
    if not present:
        raise ValueError("no category has any frames")
    warnings = []
    rates, quotas = {}, {}
    if mode == "paper":
        total = sum(s.total_frames for s in present)
        rate = requested / total
        if rate > 1:
            warnings.append(f"requested {requested} frames but only {total} exist; rate clamped to 1")
        exact = min(Fraction(requested, total), Fraction(1))
        for s in present:
            rates[s.category] = min(rate, 1.0)
            quotas[s.category] = math.ceil(exact * s.total_frames)
    elif mode == "balanced":
        q = -(-requested // len(present))
        for s in present:
            if q > s.total_frames:
                warnings.append(
                    f"category {s.category.value} has {s.total_frames} frames, fewer than its quota {q}; "
                    "rate clamped to 1"
                )
            rates[s.category] = min(1.0, q / s.total_frames)
            quotas[s.category] = min(q, s.total_frames)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    for w in warnings:
        log.warning(w)
    return SamplePlan(requested, mode, rates, quotas, tuple(warnings))


def stride_for(rate: float) -> int:
    return max(1, round_half_up(1.0 / rate))


def select_frames(plan: SamplePlan, videos: Iterable[tuple[VideoSource, SceneCategory]], seed: int) -> SampleManifest:
    """Uniform-stride selection with a seeded phase per video."""
    entries = []
    for src, cat in sorted(videos, key=lambda vc: vc[0].video_id):
        cat = SceneCategory(cat)
        if cat not in plan.rates:
            log.warning("video %d: category %s not in plan, skipped", src.video_id, cat.value)
            continue
        rate = plan.rates[cat]
        stride = stride_for(rate)
        phase = int(make_rng(derive_seed(seed, "phase", src.video_id)).integers(0, stride))
        prov = f"stride-sample:mode={plan.mode}:rate={rate:.6g}:stride={stride}:phase={phase}"
        for idx in range(phase, src.frame_count, stride):
            entries.append(ManifestEntry(src.video_id, idx, cat.value, "none", False, stride, prov))
    return SampleManifest(seed, plan.mode, tuple(entries))


def expected_selection_count(frame_count: int, stride: int, phase: int) -> int:
    return max(0, (frame_count - phase + stride - 1) // stride)


# --------------------------------------------------------------------------- duplicates


@dataclass(frozen=True)
class DuplicateFilterParams:
    hash_size: int = 8
    hamming_threshold: int = 5

    def __post_init__(self):
        if self.hash_size < 1:
            raise ValueError("hash_size must be positive")
        if not 0 <= self.hamming_threshold <= self.hash_size ** 2:
            raise ValueError("hamming_threshold out of range")


def average_hash(image: Frame | np.ndarray, hash_size: int = 8) -> int:
    """Mean-thresholded hash of the ``hash_size`` x ``hash_size`` box-averaged luma.

    Planes smaller than the grid are first enlarged by pixel repetition.
    Bits are packed row-major, most significant first.
    """
    plane = image.luma() if isinstance(image, Frame) else np.asarray(image, dtype=np.uint8)
    H, W = plane.shape
    if H < hash_size:
        plane = np.repeat(plane, -(-hash_size // H), axis=0)
    if W < hash_size:
        plane = np.repeat(plane, -(-hash_size // W), axis=1)
    H, W = plane.shape
    rows = np.array([i * H // hash_size for i in range(hash_size + 1)], dtype=np.int64)
    cols = np.array([i * W // hash_size for i in range(hash_size + 1)], dtype=np.int64)
    sums = kernels.box_sums(plane, rows, cols)
    areas = np.diff(rows)[:, None] * np.diff(cols)[None, :]
    means = sums / areas
    bits = (means > means.mean()).ravel()
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def hamming(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


@dataclass
class DedupResult:
    manifest: SampleManifest
    removed: list[dict] = field(default_factory=list)
    unreadable: list[str] = field(default_factory=list)
    hashes: dict[tuple[int, int], int] = field(default_factory=dict)


def _cluster(indices: list[int], hashes: list[int], threshold: int) -> list[int]:
    """Union-find root (position of the earliest member) per position."""
    parent = list(range(len(indices)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(indices)):
        for j in range(i + 1, len(indices)):
            if hamming(hashes[i], hashes[j]) <= threshold:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    return [find(i) for i in range(len(indices))]


def filter_duplicates(manifest: SampleManifest, load_frame: Callable[[int, int], Frame],
                      params: DuplicateFilterParams = DuplicateFilterParams(), jobs: int = 1) -> DedupResult:
    """Keep only the earliest frame of each near-duplicate cluster within a video.

    Two frames are linked when their hash distance is at most the threshold;
    clusters are the transitive closure of links. Negatives pass through.
    """
    positives = [e for e in manifest.entries if not e.is_negative]

    def hash_one(e):
        try:
            return e, average_hash(load_frame(e.video_id, e.frame_index), params.hash_size), None
        except (OSError, ValueError, LookupError) as exc:
            return e, None, str(exc)

    with ThreadPoolExecutor(max(1, jobs)) as pool:
        hashed = list(pool.map(hash_one, positives))
    result = DedupResult(manifest)
    per_video: dict[int, list[tuple[ManifestEntry, int]]] = {}
    for e, h, err in hashed:
        if err is not None:
            msg = f"video {e.video_id} frame {e.frame_index}: {err}"
            log.warning("dropping unreadable frame %s", msg)
            result.unreadable.append(msg)
            continue
        result.hashes[(e.video_id, e.frame_index)] = h
        per_video.setdefault(e.video_id, []).append((e, h))
    keep: set[tuple[int, int]] = set()
    for vid in sorted(per_video):
        items = sorted(per_video[vid], key=lambda eh: eh[0].frame_index)
        idxs = [e.frame_index for e, _ in items]
        hs = [h for _, h in items]
        roots = _cluster(idxs, hs, params.hamming_threshold)
        for pos, root in enumerate(roots):
            if pos == root:
                keep.add((vid, idxs[pos]))
            else:
                result.removed.append({
                    "video_id": vid,
                    "frame_index": idxs[pos],
                    "cluster": idxs[root],
                    "distance_to_kept": hamming(hs[pos], hs[root]),
                })
    entries = [e for e in manifest.entries if e.is_negative or (e.video_id, e.frame_index) in keep]
    result.manifest = manifest.replace_entries(entries)
    return result


# --------------------------------------------------------------------------- negatives


def inject_negatives(manifest: SampleManifest, backgrounds: Mapping[int, BackgroundModel], augment_count: int = 2,
                     policy: AugmentPolicy = AugmentPolicy(), seed: int | None = None
                     ) -> tuple[SampleManifest, list[str]]:
    """Add each referenced video's background (plus seeded variants) as train negatives.

    Variants draw only from flip, blur and colour so the image stays a valid
    full-frame background. Existing negatives are replaced.
    """
    if augment_count < 0:
        raise ValueError("augment_count must be non-negative")
    seed = manifest.seed if seed is None else seed
    positives = [e for e in manifest.entries if not e.is_negative]
    cats: dict[int, str] = {}
    for e in positives:
        cats.setdefault(e.video_id, e.category)
    warnings = []
    negatives = []
    for vid in sorted(cats):
        model = backgrounds.get(vid)
        if model is None:
            msg = f"video {vid}: no background available, no negatives added"
            log.warning(msg)
            warnings.append(msg)
            continue
        W, H = model.background.width, model.background.height
        base = "negative:" + model.describe()
        for variant in range(augment_count + 1):
            prov = base
            if variant:
                prov += ";aug=" + policy.negative_spec(seed, vid, variant, W, H).describe()
            negatives.append(ManifestEntry(vid, variant, cats[vid], "train", True, 0, prov))
    return manifest.replace_entries(positives + negatives), warnings


# --------------------------------------------------------------------------- split


def find_runs(entries: Sequence[ManifestEntry]) -> list[list[ManifestEntry]]:
    """Group positives into runs of consecutive selections (one stride apart) per video."""
    per_video: dict[int, list[ManifestEntry]] = {}
    for e in entries:
        if not e.is_negative:
            per_video.setdefault(e.video_id, []).append(e)
    runs = []
    for vid in sorted(per_video):
        items = sorted(per_video[vid], key=lambda e: e.frame_index)
        gaps = [b.frame_index - a.frame_index for a, b in zip(items, items[1:])]
        fallback = min(gaps) if gaps else 1
        run = [items[0]]
        for prev, cur in zip(items, items[1:]):
            step = prev.stride or fallback
            if cur.frame_index - prev.frame_index == step:
                run.append(cur)
            else:
                runs.append(run)
                run = [cur]
        runs.append(run)
    return runs


@dataclass
class SplitResult:
    manifest: SampleManifest
    runs: int
    train_frames: int
    val_frames: int
    warnings: list[str] = field(default_factory=list)

    @property
    def train_fraction(self) -> float:
        total = self.train_frames + self.val_frames
        return self.train_frames / total if total else 0.0


def split_manifest(manifest: SampleManifest, ratio: float = 0.7, seed: int | None = None) -> SplitResult:
    """Assign whole runs to train (in seeded random order) until train reaches ``ratio``; the rest is val."""
    if not 0 <= ratio <= 1:
        raise ValueError("ratio must be within [0, 1]")
    if not manifest.entries:
        raise ValueError("cannot split an empty manifest")
    seed = manifest.seed if seed is None else seed
    runs = find_runs(manifest.entries)
    total = sum(len(r) for r in runs)
    target = decimal_fraction(ratio) * total
    warnings = []
    biggest = max((len(r) for r in runs), default=0)
    if runs and biggest > target:
        msg = f"a run of {biggest} frames exceeds the train target {float(target):g}; ratio unattainable"
        log.warning(msg)
        warnings.append(msg)
    order = make_rng(derive_seed(seed, "split")).permutation(len(runs)) if runs else []
    assign: dict[tuple[int, int], str] = {}
    train = 0
    for ri in order:
        run = runs[int(ri)]
        split = "train" if train < target else "val"
        if split == "train":
            train += len(run)
        for e in run:
            assign[(e.video_id, e.frame_index)] = split
    entries = [
        replace(e, split="train" if e.is_negative else assign[(e.video_id, e.frame_index)])
        for e in manifest.entries
    ]
    return SplitResult(manifest.replace_entries(entries), len(runs), train, total - train, warnings)


# --------------------------------------------------------------------------- audit


@dataclass(frozen=True)
class AnnotationGap:
    video_id: int
    frame_id: int
    class_id: int
    box: tuple[float, float, float, float]


def _greedy_links(a: Sequence[DetectionRecord], b: Sequence[DetectionRecord], threshold: float):
    pairs = []
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            o = iou(x.box, y.box)
            if o >= threshold:
                pairs.append((-o, i, j))
    pairs.sort()
    used_a, used_b, links = set(), set(), []
    for _, i, j in pairs:
        if i not in used_a and j not in used_b:
            used_a.add(i)
            used_b.add(j)
            links.append((a[i], b[j]))
    return links


def audit_annotations(gt: Sequence[DetectionRecord], iou_threshold: float = 0.3) -> list[AnnotationGap]:
    """Flag frames where an object annotated on both neighbours is missing.

    Boxes of one class on frames ``t-1`` and ``t+1`` are linked greedily by
    IoU. For each link, frame ``t`` must hold a box of that class overlapping
    the linear interpolation of the pair by at least the threshold.
    """
    index: dict[tuple[int, int], dict[int, list[DetectionRecord]]] = {}
    for r in gt:
        index.setdefault((r.video_id, r.class_id), {}).setdefault(r.frame_id, []).append(r)
    gaps = []
    for (vid, cls), frames in sorted(index.items()):
        for t in range(min(frames) + 1, max(frames)):
            before, after = frames.get(t - 1), frames.get(t + 1)
            if not before or not after:
                continue
            current = frames.get(t, [])
            for x, y in _greedy_links(before, after, iou_threshold):
                mid = tuple((p + q) / 2 for p, q in zip(x.box, y.box))
                if not any(iou(mid, c.box) >= iou_threshold for c in current):
                    gaps.append(AnnotationGap(vid, t, cls, mid))
    return gaps


def format_gap_report(gaps: Iterable[AnnotationGap]) -> str:
    lines = ["video_id,frame_id,class_id,bb_left,bb_top,bb_width,bb_height"]
    for g in gaps:
        lines.append(",".join([str(g.video_id), str(g.frame_id), str(g.class_id)]
                              + [format_number(v) for v in g.box]))
    return "\n".join(lines) + "\n"

"""Static background estimation by per-pixel temporal median.

A window of ``window_seconds`` is placed in the video (at a seeded random
start unless given explicitly), a seeded ``keep_fraction`` of its frames is
drawn without replacement, and each pixel of the background is the lower
median of that pixel over the drawn frames.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from ._util import decimal_fraction, derive_seed, make_rng
from .media_io import Frame, MediaError

log = logging.getLogger(__name__)

MIN_WINDOW_FRAMES = 3


class BackgroundError(ValueError):
    pass


@dataclass(frozen=True)
class BackgroundParams:
    window_seconds: float = 10.0
    keep_fraction: float = 0.6
    seed: int = 0
    window_start: int | None = None

    def __post_init__(self):
        if not self.window_seconds > 0:
            raise ValueError("window_seconds must be positive")
        if not 0 < self.keep_fraction <= 1:
            raise ValueError("keep_fraction must be in (0, 1]")
        if self.window_start is not None and self.window_start < 0:
            raise ValueError("window_start must be non-negative")

    def to_dict(self) -> dict:
        return {
            "window_seconds": self.window_seconds,
            "keep_fraction": self.keep_fraction,
            "seed": self.seed,
            "window_start": self.window_start,
        }


@dataclass(frozen=True)
class BackgroundModel:
    background: Frame
    params: BackgroundParams
    source_frame_indices: tuple[int, ...]
    window: tuple[int, int]

    def describe(self) -> str:
        p = self.params
        return (
            f"background(window_seconds={p.window_seconds},keep_fraction={p.keep_fraction},"
            f"seed={p.seed},window=[{self.window[0]},{self.window[1]}),"
            f"frames={len(self.source_frame_indices)})"
        )


def window_length(video, window_seconds: float) -> int:
    fps = video.source.fps
    return math.floor(decimal_fraction(window_seconds) * fps)


def retained_count(window_frames: int, keep_fraction: float) -> int:
    return math.ceil(decimal_fraction(keep_fraction) * window_frames)


def _median_stack(stack: np.ndarray, jobs: int) -> np.ndarray:
    rows = stack.shape[1]
    if jobs <= 1 or rows < 2 * jobs:
        return kernels.lower_median(stack)
    bounds = np.linspace(0, rows, jobs + 1).astype(int)
    with ThreadPoolExecutor(jobs) as pool:
        parts = pool.map(lambda ab: kernels.lower_median(stack[:, ab[0]:ab[1]]), zip(bounds[:-1], bounds[1:]))
        return np.concatenate(list(parts), axis=0)


def _estimate_window(video, params: BackgroundParams, start: int, wlen: int, rng, rgb: bool,
                     jobs: int) -> BackgroundModel:
    k = retained_count(wlen, params.keep_fraction)
    picked = np.sort(rng.choice(wlen, size=k, replace=False)) + start
    indices = tuple(int(i) for i in picked)
    stack = np.stack([video.frame(i, rgb=rgb).pixels for i in indices])
    bg = _median_stack(stack, jobs)
    frame = Frame(bg, video.source.video_id, indices[0])
    return BackgroundModel(frame, params, indices, (start, start + wlen))


def estimate_background(video, params: BackgroundParams = BackgroundParams(), rgb: bool = False,
                        jobs: int = 1) -> BackgroundModel:
    n = len(video)
    wlen = window_length(video, params.window_seconds)
    rng = make_rng(params.seed)
    if params.window_start is not None:
        start = params.window_start
        if start + wlen > n:
            raise BackgroundError(
                f"video {video.source.video_id}: window [{start}, {start + wlen}) exceeds {n} frames"
            )
    else:
        wlen = min(wlen, n)
        start = int(rng.integers(0, n - wlen + 1)) if wlen > 0 else 0
    if wlen < MIN_WINDOW_FRAMES:
        raise BackgroundError(
            f"video {video.source.video_id}: only {wlen} frames in window, need {MIN_WINDOW_FRAMES}"
        )
    return _estimate_window(video, params, start, wlen, rng, rgb, jobs)


def estimate_background_windows(video, params: BackgroundParams = BackgroundParams(), rgb: bool = False,
                                jobs: int = 1) -> list[BackgroundModel]:
    """One background per disjoint full window, for videos longer than one window."""
    n = len(video)
    wlen = window_length(video, params.window_seconds)
    if wlen < MIN_WINDOW_FRAMES or wlen > n:
        return [estimate_background(video, params, rgb, jobs)]
    models = []
    for w, start in enumerate(range(0, n - wlen + 1, wlen)):
        p = replace(params, seed=derive_seed(params.seed, "window", w), window_start=start)
        models.append(_estimate_window(video, p, start, wlen, make_rng(p.seed), rgb, jobs))
    return models


@dataclass
class BackgroundBatch:
    models: dict[int, BackgroundModel] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)

    def summary(self) -> str:
        lines = [f"{len(self.models)} backgrounds estimated, {len(self.failures)} failed"]
        lines += [f"  video {vid}: {msg}" for vid, msg in sorted(self.failures.items())]
        return "\n".join(lines)


def video_params(params: BackgroundParams, video_id: int) -> BackgroundParams:
    """Per-video parameters: the seed becomes ``seed XOR hash(video_id)``."""
    return replace(params, seed=derive_seed(params.seed, video_id))


def estimate_all_backgrounds(videos, params: BackgroundParams = BackgroundParams(), rgb: bool = False,
                             jobs: int = 1) -> BackgroundBatch:
    batch = BackgroundBatch()

    def one(video):
        vid = video.source.video_id
        try:
            return vid, estimate_background(video, video_params(params, vid), rgb), None
        except (BackgroundError, MediaError, OSError) as exc:
            return vid, None, str(exc)

    with ThreadPoolExecutor(max(1, jobs)) as pool:
        results = list(pool.map(one, videos))
    for vid, model, err in sorted(results, key=lambda r: r[0]):
        if err is None:
            batch.models[vid] = model
        else:
            log.warning("background estimation failed for video %d: %s", vid, err)
            batch.failures[vid] = err
    return batch

"""Day / night / fog categorisation of a video from its background image.

The rule works on the 256-bin luma histogram of the background: if the most
frequent pixel value is below ``night_threshold`` the video is night;
otherwise a near-zero histogram skewness means fog and anything else is day.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .background import BackgroundError, BackgroundModel, BackgroundParams, estimate_background, video_params
from .media_io import Frame, MediaError

log = logging.getLogger(__name__)


class SceneCategory(str, enum.Enum):
    NIGHT = "night"
    FOG = "fog"
    DAY = "day"


class DegenerateHistogramError(ValueError):
    """All pixels share one value; skewness is undefined."""


@dataclass(frozen=True)
class PixelHistogram:
    bins: tuple[int, ...]

    def __post_init__(self):
        if len(self.bins) != 256:
            raise ValueError("histogram needs 256 bins")
        if any(b < 0 for b in self.bins):
            raise ValueError("histogram counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.bins)

    def argmax(self) -> int:
        """Smallest pixel value with the maximal count."""
        return int(np.argmax(self.bins))


@dataclass(frozen=True)
class ClassifierParams:
    night_threshold: int = 150
    fog_skewness_epsilon: float = 0.25

    def __post_init__(self):
        if not 0 <= self.night_threshold <= 255:
            raise ValueError("night_threshold must be in [0, 255]")
        if not self.fog_skewness_epsilon >= 0:
            raise ValueError("fog_skewness_epsilon must be non-negative")

    def to_dict(self) -> dict:
        return {"night_threshold": self.night_threshold, "fog_skewness_epsilon": self.fog_skewness_epsilon}


@dataclass(frozen=True)
class SceneResult:
    category: SceneCategory
    argmax_value: int
    skewness: float | None


def luma_histogram(image: Frame | np.ndarray) -> PixelHistogram:
    plane = image.luma() if isinstance(image, Frame) else np.asarray(image, dtype=np.uint8)
    if plane.size == 0:
        raise ValueError("empty image")
    return PixelHistogram(tuple(int(c) for c in kernels.histogram_u8(plane)))


def histogram_skewness(h: PixelHistogram) -> float:
    """Population (Fisher-Pearson) skewness ``m3 / m2**1.5`` of the pixel values.

    Power sums are accumulated as Python integers, so the central moments are
    exact and a symmetric histogram gives exactly 0.
    """
    n = s1 = s2 = s3 = 0
    for v, c in enumerate(h.bins):
        if c:
            n += c
            s1 += c * v
            s2 += c * v * v
            s3 += c * v * v * v
    if n < 2:
        raise DegenerateHistogramError("need at least two pixels")
    # n^2 * m2 and n^3 * m3
    c2 = n * s2 - s1 * s1
    if c2 == 0:
        raise DegenerateHistogramError("zero variance")
    c3 = n * n * s3 - 3 * n * s1 * s2 + 2 * s1 ** 3
    return c3 / c2 ** 1.5


def classify_histogram(h: PixelHistogram, params: ClassifierParams = ClassifierParams()) -> SceneResult:
    peak = h.argmax()
    try:
        skew = histogram_skewness(h)
    except DegenerateHistogramError:
        skew = None
    if peak < params.night_threshold:
        cat = SceneCategory.NIGHT
    elif skew is None:
        cat = SceneCategory.DAY
    elif abs(skew) < params.fog_skewness_epsilon:
        cat = SceneCategory.FOG
    else:
        cat = SceneCategory.DAY
    return SceneResult(cat, peak, skew)


def classify_scene(background: Frame | np.ndarray, params: ClassifierParams = ClassifierParams()) -> SceneResult:
    return classify_histogram(luma_histogram(background), params)


@dataclass
class CategorizeResult:
    results: dict[int, SceneResult] = field(default_factory=dict)
    backgrounds: dict[int, BackgroundModel] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def categories(self) -> dict[int, SceneCategory]:
        return {vid: r.category for vid, r in self.results.items()}


def categorize_videos(videos, bg_params: BackgroundParams = BackgroundParams(),
                      params: ClassifierParams = ClassifierParams(), jobs: int = 1) -> CategorizeResult:
    out = CategorizeResult()

    def one(video):
        vid = video.source.video_id
        try:
            model = estimate_background(video, video_params(bg_params, vid))
            return vid, model, classify_scene(model.background, params), None
        except (BackgroundError, MediaError, OSError, ValueError) as exc:
            return vid, None, None, str(exc)

    with ThreadPoolExecutor(max(1, jobs)) as pool:
        rows = list(pool.map(one, videos))
    for vid, model, res, err in sorted(rows, key=lambda r: r[0]):
        if err is not None:
            log.warning("categorisation failed for video %d: %s", vid, err)
            out.failures[vid] = err
        else:
            out.backgrounds[vid] = model
            out.results[vid] = res
    return out


def _fmt_skew(s: float | None) -> str:
    return "nan" if s is None else f"{s:.6f}"


def format_category_report(results: dict[int, SceneResult], bg_params: BackgroundParams | None = None,
                           params: ClassifierParams | None = None) -> str:
    lines = []
    if bg_params is not None and params is not None:
        lines.append(
            f"# night_threshold={params.night_threshold} fog_epsilon={params.fog_skewness_epsilon} "
            f"window_seconds={bg_params.window_seconds} keep_fraction={bg_params.keep_fraction} "
            f"seed={bg_params.seed}"
        )
    lines.append("video_id,category,argmax,skewness")
    for vid in sorted(results):
        r = results[vid]
        lines.append(f"{vid},{r.category.value},{r.argmax_value},{_fmt_skew(r.skewness)}")
    return "\n".join(lines) + "\n"


def read_category_report(path) -> dict[int, SceneCategory]:
    cats = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#") or line.startswith("video_id,"):
            continue
        vid, cat = line.split(",")[:2]
        cats[int(vid)] = SceneCategory(cat)
    return cats

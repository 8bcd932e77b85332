"""Pixel augmentations with bounding-box co-transforms.

Boxes are ``(left, top, width, height)`` tuples or :class:`DetectionRecord`
rows; geometric ops map a box to the axis-aligned hull of its four mapped
corners, clipped to the output frame. Photometric ops never touch boxes.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, ClassVar, Sequence

import numpy as np

from . import __version__, kernels
from ._util import canonical_json, derive_seed, make_rng, round_half_up
from .media_io import (
    DetectionRecord, Frame, SampleManifest, encode_pnm, format_detections, pnm_suffix,
)

log = logging.getLogger(__name__)


class AugmentationError(ValueError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"spec #{index}: {message}")
        self.index = index


Box = tuple


def _corners(box):
    l, t, w, h = box
    return ((l, t), (l + w, t), (l, t + h), (l + w, t + h))


def _clip_box(x0, y0, x1, y1, W, H):
    x0, x1 = min(max(x0, 0), W), min(max(x1, 0), W)
    y0, y1 = min(max(y0, 0), H), min(max(y1, 0), H)
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def _per_channel(pixels: np.ndarray, fn) -> np.ndarray:
    if pixels.ndim == 2:
        return fn(pixels)
    return np.stack([fn(pixels[..., c]) for c in range(pixels.shape[2])], axis=-1)


class _Spec:
    op: ClassVar[str]
    geometric: ClassVar[bool]

    def to_dict(self) -> dict:
        return {"op": self.op, **asdict(self)}

    def output_size(self, W: int, H: int) -> tuple[int, int]:
        return W, H

    def map_box(self, box: Box, W: int, H: int) -> Box | None:
        return tuple(box)

    def apply_pixels(self, pixels: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        args = ",".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in asdict(self).items())
        return f"{self.op}({args})"


@dataclass(frozen=True)
class HFlip(_Spec):
    op: ClassVar[str] = "hflip"
    geometric: ClassVar[bool] = True

    def map_box(self, box, W, H):
        l, t, w, h = box
        return (W - l - w, t, w, h)

    def apply_pixels(self, pixels):
        return pixels[:, ::-1]


@dataclass(frozen=True)
class Rotate(_Spec):
    """Counter-clockwise rotation about the image centre onto an expanded canvas."""

    degrees: float
    op: ClassVar[str] = "rotate"
    geometric: ClassVar[bool] = True

    @property
    def is_identity(self) -> bool:
        return self.degrees % 360 == 0

    def _cs(self):
        quarter = self.degrees % 360
        if quarter in (0, 90, 180, 270):
            return {0: (1.0, 0.0), 90: (0.0, 1.0), 180: (-1.0, 0.0), 270: (0.0, -1.0)}[quarter]
        th = math.radians(self.degrees)
        return math.cos(th), math.sin(th)

    def output_size(self, W, H):
        if self.is_identity:
            return W, H
        c, s = self._cs()
        return (
            max(1, math.ceil(W * abs(c) + H * abs(s) - 1e-9)),
            max(1, math.ceil(W * abs(s) + H * abs(c) - 1e-9)),
        )

    def map_point(self, x, y, W, H):
        c, s = self._cs()
        W2, H2 = self.output_size(W, H)
        dx, dy = x - W / 2, y - H / 2
        return (W2 / 2 + dx * c + dy * s, H2 / 2 - dx * s + dy * c)

    def map_box(self, box, W, H):
        if self.is_identity:
            return tuple(box)
        pts = [self.map_point(x, y, W, H) for x, y in _corners(box)]
        xs, ys = [p[0] for p in pts], [p[1] for p in pts]
        return _clip_box(min(xs), min(ys), max(xs), max(ys), *self.output_size(W, H))

    def apply_pixels(self, pixels):
        if self.is_identity:
            return pixels
        H, W = pixels.shape[:2]
        W2, H2 = self.output_size(W, H)
        c, s = self._cs()
        du = np.arange(W2, dtype=np.float64)[None, :] + 0.5 - W2 / 2
        dv = np.arange(H2, dtype=np.float64)[:, None] + 0.5 - H2 / 2
        xs = W / 2 + du * c - dv * s - 0.5
        ys = H / 2 + du * s + dv * c - 0.5
        return _per_channel(pixels, lambda p: kernels.bilinear_sample(p, xs, ys, clamp=False, fill=0.0))


@dataclass(frozen=True)
class Scale(_Spec):
    factor: float
    op: ClassVar[str] = "scale"
    geometric: ClassVar[bool] = True

    def __post_init__(self):
        if not self.factor > 0:
            raise AugmentationError(f"scale factor must be positive, got {self.factor}")

    def output_size(self, W, H):
        return max(1, round_half_up(W * self.factor)), max(1, round_half_up(H * self.factor))

    def map_box(self, box, W, H):
        f = self.factor
        l, t, w, h = box
        return _clip_box(l * f, t * f, (l + w) * f, (t + h) * f, *self.output_size(W, H))

    def apply_pixels(self, pixels):
        H, W = pixels.shape[:2]
        W2, H2 = self.output_size(W, H)
        if (W2, H2) == (W, H) and self.factor == 1:
            return pixels
        xs = np.broadcast_to((np.arange(W2, dtype=np.float64)[None, :] + 0.5) / self.factor - 0.5, (H2, W2))
        ys = np.broadcast_to((np.arange(H2, dtype=np.float64)[:, None] + 0.5) / self.factor - 0.5, (H2, W2))
        return _per_channel(pixels, lambda p: kernels.bilinear_sample(p, xs, ys, clamp=True))


@dataclass(frozen=True)
class Crop(_Spec):
    """Keep the rectangle; boxes retaining less than ``min_visible`` of their area are dropped."""

    left: int
    top: int
    width: int
    height: int
    min_visible: float = 0.25
    op: ClassVar[str] = "crop"
    geometric: ClassVar[bool] = True

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise AugmentationError("crop width and height must be positive")

    def clamped(self, W, H):
        x0, y0 = max(0, self.left), max(0, self.top)
        x1, y1 = min(W, self.left + self.width), min(H, self.top + self.height)
        if x1 <= x0 or y1 <= y0:
            raise AugmentationError(
                f"crop ({self.left},{self.top},{self.width},{self.height}) lies outside the {W}x{H} frame"
            )
        return x0, y0, x1, y1

    def output_size(self, W, H):
        x0, y0, x1, y1 = self.clamped(W, H)
        return x1 - x0, y1 - y0

    def map_box(self, box, W, H):
        x0, y0, x1, y1 = self.clamped(W, H)
        l, t, w, h = box
        out = _clip_box(l - x0, t - y0, l + w - x0, t + h - y0, x1 - x0, y1 - y0)
        if out is None or out[2] * out[3] < self.min_visible * (w * h):
            return None
        return out

    def apply_pixels(self, pixels):
        H, W = pixels.shape[:2]
        x0, y0, x1, y1 = self.clamped(W, H)
        return pixels[y0:y1, x0:x1]


def gaussian_weights(radius: float) -> np.ndarray:
    sigma = radius / 2
    half = math.ceil(3 * sigma)
    if half == 0 or sigma * sigma == 0:
        return np.ones(1)
    k = np.arange(-half, half + 1, dtype=np.float64)
    with np.errstate(over="ignore"):  # denormal sigma: off-centre taps underflow to 0
        w = np.exp(-(k * k) / (2 * sigma * sigma))
    return w / w.sum()


@dataclass(frozen=True)
class Blur(_Spec):
    """Gaussian blur, sigma = radius / 2, kernel truncated at 3 sigma."""

    radius: float
    op: ClassVar[str] = "blur"
    geometric: ClassVar[bool] = False

    def __post_init__(self):
        if not self.radius >= 0:
            raise AugmentationError("blur radius must be non-negative")

    def apply_pixels(self, pixels):
        if self.radius == 0:
            return pixels
        w = gaussian_weights(self.radius)
        return _per_channel(pixels, lambda p: kernels.convolve_separable(p, w))


@dataclass(frozen=True)
class Color(_Spec):
    """Brightness (fraction of 255, additive), then contrast about 128, then saturation."""

    brightness: float = 0.0
    contrast: float = 1.0
    saturation: float = 1.0
    op: ClassVar[str] = "color"
    geometric: ClassVar[bool] = False

    def __post_init__(self):
        if not -1 <= self.brightness <= 1:
            raise AugmentationError("brightness must be in [-1, 1]")
        if not self.contrast > 0:
            raise AugmentationError("contrast must be positive")
        if not self.saturation >= 0:
            raise AugmentationError("saturation must be non-negative")

    def apply_pixels(self, pixels):
        v = pixels.astype(np.float64) + self.brightness * 255.0
        v = (v - 128.0) * self.contrast + 128.0
        if v.ndim == 3:
            gray = 0.299 * v[..., 0] + 0.587 * v[..., 1] + 0.114 * v[..., 2]
            v = gray[..., None] + self.saturation * (v - gray[..., None])
        return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


SPEC_TYPES = {cls.op: cls for cls in (HFlip, Rotate, Scale, Crop, Blur, Color)}


def spec_from_dict(d: dict) -> _Spec:
    d = dict(d)
    try:
        cls = SPEC_TYPES[d.pop("op")]
    except KeyError:
        raise AugmentationError(f"unknown augmentation {d!r}") from None
    return cls(**d)


# --------------------------------------------------------------------------- applying


@dataclass(frozen=True)
class AugmentedSample:
    frame: Frame
    boxes: tuple
    applied: tuple = ()


def _box_of(b):
    return b.box if isinstance(b, DetectionRecord) else tuple(b)


def _with_box(b, new):
    if isinstance(b, DetectionRecord):
        return replace(b, bb_left=new[0], bb_top=new[1], bb_width=new[2], bb_height=new[3])
    return tuple(new)


def apply(frame: Frame, boxes: Sequence, spec: _Spec) -> AugmentedSample:
    W, H = frame.width, frame.height
    pixels = spec.apply_pixels(frame.pixels)
    if spec.geometric:
        out = []
        for b in boxes:
            nb = spec.map_box(_box_of(b), W, H)
            if nb is not None:
                out.append(_with_box(b, nb))
    else:
        out = list(boxes)
    return AugmentedSample(frame.with_pixels(pixels) if pixels is not frame.pixels else frame, tuple(out), (spec,))


def apply_chain(frame: Frame, boxes: Sequence, specs: Sequence[_Spec]) -> AugmentedSample:
    cur, cur_boxes = frame, tuple(boxes)
    for i, spec in enumerate(specs):
        try:
            res = apply(cur, cur_boxes, spec)
        except AugmentationError as exc:
            raise AugmentationError(str(exc), i) from None
        cur, cur_boxes = res.frame, res.boxes
    return AugmentedSample(cur, cur_boxes, tuple(specs))


# --------------------------------------------------------------------------- policy

NEGATIVE_OPS = ("hflip", "blur", "color")


@dataclass(frozen=True)
class AugmentPolicy:
    """Which single-op variants to draw and the parameter ranges to draw from."""

    name: str = "default6"
    ops: tuple[str, ...] = ("hflip", "rotate", "scale", "crop", "blur", "color")
    rotate_degrees: tuple[float, float] = (-15.0, 15.0)
    scale_factor: tuple[float, float] = (0.5, 1.5)
    crop_area: tuple[float, float] = (0.6, 0.9)
    crop_min_visible: float = 0.25
    blur_radius: tuple[float, float] = (0.5, 3.0)
    brightness: tuple[float, float] = (-0.2, 0.2)
    contrast: tuple[float, float] = (0.8, 1.2)
    saturation: tuple[float, float] = (0.5, 1.5)

    def __post_init__(self):
        for op in self.ops:
            if op not in SPEC_TYPES:
                raise ValueError(f"unknown op {op!r} in policy")
        if not self.ops:
            raise ValueError("policy needs at least one op")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPolicy":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    @classmethod
    def load(cls, name_or_path: str) -> "AugmentPolicy":
        if name_or_path == "default6":
            return cls()
        return cls.from_dict(json.loads(Path(name_or_path).read_text(encoding="utf-8")))

    def draw(self, op: str, rng: np.random.Generator, W: int, H: int) -> _Spec:
        u = lambda lo_hi: float(rng.uniform(lo_hi[0], lo_hi[1]))  # noqa: E731
        if op == "hflip":
            return HFlip()
        if op == "rotate":
            return Rotate(round(u(self.rotate_degrees), 3))
        if op == "scale":
            return Scale(round(u(self.scale_factor), 3))
        if op == "crop":
            side = math.sqrt(u(self.crop_area))
            cw, ch = max(1, round_half_up(W * side)), max(1, round_half_up(H * side))
            left = int(rng.integers(0, W - cw + 1))
            top = int(rng.integers(0, H - ch + 1))
            return Crop(left, top, cw, ch, self.crop_min_visible)
        if op == "blur":
            return Blur(round(u(self.blur_radius), 3))
        if op == "color":
            return Color(round(u(self.brightness), 3), round(u(self.contrast), 3), round(u(self.saturation), 3))
        raise AugmentationError(f"unknown op {op!r}")

    def variant_spec(self, seed: int, video_id: int, frame_index: int, variant: int, W: int, H: int) -> _Spec:
        op = self.ops[(variant - 1) % len(self.ops)]
        rng = make_rng(derive_seed(seed, "augment", video_id, frame_index, variant))
        return self.draw(op, rng, W, H)

    def negative_spec(self, seed: int, video_id: int, variant: int, W: int, H: int) -> _Spec:
        """Geometry-preserving variant for background negatives (flip, blur or colour only)."""
        op = NEGATIVE_OPS[(variant - 1) % len(NEGATIVE_OPS)]
        rng = make_rng(derive_seed(seed, "negative", video_id, variant))
        return self.draw(op, rng, W, H)


# --------------------------------------------------------------------------- materialize


@dataclass
class MaterializeResult:
    images: list[dict] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def index(self, seed: int, policy: AugmentPolicy, variants: int) -> dict:
        return {
            "tool_version": __version__,
            "seed": seed,
            "policy": policy.to_dict(),
            "variants_per_frame": variants,
            "images": self.images,
        }


def _clip_to_frame(records, W, H):
    out = []
    for r in records:
        nb = _clip_box(r.bb_left, r.bb_top, r.bb_left + r.bb_width, r.bb_top + r.bb_height, W, H)
        if nb is not None:
            out.append(_with_box(r, nb))
    return out


def materialize(manifest: SampleManifest, out_dir, load_frame: Callable[[int, int], Frame],
                gt: Sequence[DetectionRecord] = (), *, policy: AugmentPolicy = AugmentPolicy(),
                variants_per_frame: int = 6, seed: int | None = None,
                load_background: Callable[[int], Frame] | None = None, frame_base: int = 1,
                augment_splits: tuple[str, ...] = ("train", "none"), jobs: int = 1) -> MaterializeResult:
    """Write originals plus seeded single-op variants as PNM images with per-image GT CSV.

    ``load_frame(video_id, frame_index)`` supplies source frames and
    ``load_background(video_id)`` the background used for negative entries.
    An ``index.json`` listing every written image is placed in ``out_dir``.
    """
    seed = manifest.seed if seed is None else seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_frame: dict[tuple[int, int], list[DetectionRecord]] = {}
    for r in gt:
        by_frame.setdefault((r.video_id, r.frame_id - frame_base), []).append(r)

    def job(entry):
        rows = []
        try:
            if entry.is_negative:
                if load_background is None:
                    raise LookupError("no background source for negatives")
                frame = load_background(entry.video_id)
            else:
                frame = load_frame(entry.video_id, entry.frame_index)
        except (LookupError, OSError, ValueError) as exc:
            return rows, f"video {entry.video_id} frame {entry.frame_index}: {exc}"
        W, H = frame.width, frame.height
        if entry.is_negative:
            specs = [] if entry.frame_index == 0 else [policy.negative_spec(seed, entry.video_id, entry.frame_index, W, H)]
            stem = f"neg_v{entry.video_id:04d}_b{entry.frame_index:02d}"
            plan = [(entry.frame_index, stem, specs)]
            boxes: list = []
        else:
            boxes = _clip_to_frame(by_frame.get((entry.video_id, entry.frame_index), []), W, H)
            k = variants_per_frame if entry.split in augment_splits else 0
            plan = [(0, f"v{entry.video_id:04d}_f{entry.frame_index:06d}_a00", [])]
            for j in range(1, k + 1):
                spec = policy.variant_spec(seed, entry.video_id, entry.frame_index, j, W, H)
                plan.append((j, f"v{entry.video_id:04d}_f{entry.frame_index:06d}_a{j:02d}", [spec]))
        for variant, stem, specs in plan:
            sample = apply_chain(frame, boxes, specs)
            image = stem + pnm_suffix(sample.frame)
            (out_dir / image).write_bytes(encode_pnm(sample.frame))
            (out_dir / f"{stem}.csv").write_text(
                format_detections(sample.boxes, with_confidence=False), encoding="utf-8", newline="\n"
            )
            rows.append({
                "image": image,
                "gt": f"{stem}.csv",
                "video_id": entry.video_id,
                "frame_index": entry.frame_index,
                "variant": variant,
                "split": entry.split,
                "is_negative": entry.is_negative,
                "ops": [s.to_dict() for s in specs],
                "boxes": len(sample.boxes),
            })
        return rows, None

    result = MaterializeResult()
    with ThreadPoolExecutor(max(1, jobs)) as pool:
        for rows, err in pool.map(job, manifest.entries):
            if err is not None:
                log.warning("skipping %s", err)
                result.skipped.append(err)
            result.images.extend(rows)
    (out_dir / "index.json").write_text(
        canonical_json(result.index(seed, policy, variants_per_frame)), encoding="utf-8", newline="\n"
    )
    return result

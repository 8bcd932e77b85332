"""Fusing detections made on several test-time views of the same frames.

Each view's detections are first mapped back to original image coordinates,
then boxes are clustered greedily per ``(video, frame, class)`` and averaged.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .evaluation import iou
from .media_io import DetectionRecord


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class IdentityView:
    def map_box(self, box):
        return tuple(box)

    def unmap_box(self, box):
        return tuple(box)

    @property
    def tag(self) -> str:
        return "identity"

    def clip_width(self):
        return None


@dataclass(frozen=True)
class HFlipView:
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("hflip width must be positive")

    def map_box(self, box):
        l, t, w, h = box
        return (self.width - l - w, t, w, h)

    unmap_box = map_box

    @property
    def tag(self) -> str:
        return f"hflip:{self.width:g}"

    def clip_width(self):
        return self.width


@dataclass(frozen=True)
class ScaleView:
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("scale factor must be positive")

    def map_box(self, box):
        return tuple(v * self.factor for v in box)

    def unmap_box(self, box):
        return tuple(v / self.factor for v in box)

    @property
    def tag(self) -> str:
        return f"scale:{self.factor:g}"

    def clip_width(self):
        return None


ViewTransform = IdentityView | HFlipView | ScaleView


def parse_view(text: str) -> ViewTransform:
    """``identity``, ``hflip:<width>`` or ``scale:<factor>``."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    try:
        if name in ("", "id", "identity"):
            return IdentityView()
        if name == "hflip":
            return HFlipView(float(arg))
        if name == "scale":
            return ScaleView(float(arg))
    except ValueError as exc:
        raise ValueError(f"bad view {text!r}: {exc}") from None
    raise ValueError(f"unknown view {text!r}; expected identity, hflip:<width> or scale:<factor>")


def _clip(box, W, H):
    l, t, w, h = box
    x0, y0, x1, y1 = l, t, l + w, t + h
    if W is not None:
        x0, x1 = max(x0, 0), min(x1, W)
    if H is not None:
        y0, y1 = max(y0, 0), min(y1, H)
    if x1 <= x0 or y1 <= y0:
        return None
    if (x0, y0, x1, y1) == (l, t, l + w, t + h):
        return tuple(box)
    return (x0, y0, x1 - x0, y1 - y0)


def unmap_detections(records: Iterable[DetectionRecord], view: ViewTransform,
                     frame_size: tuple[float, float] | None = None) -> tuple[list[DetectionRecord], int]:
    """Map boxes from view coordinates back to the original frame.

    Results are clipped to the original frame when its size is known (always
    horizontally for a flip view). Returns the records and how many fell
    entirely outside and were dropped.
    """
    W, H = frame_size if frame_size is not None else (view.clip_width(), None)
    out, dropped = [], 0
    for r in records:
        box = view.unmap_box(r.box)
        box = _clip(box, W, H)
        if box is None:
            dropped += 1
            continue
        out.append(replace(r, bb_left=box[0], bb_top=box[1], bb_width=box[2], bb_height=box[3]))
    return out, dropped


@dataclass(frozen=True)
class FusedDetection:
    record: DetectionRecord
    member_count: int


class _Cluster:
    __slots__ = ("mean", "conf_mean", "conf_max", "n", "views")

    def __init__(self, box, conf, view):
        self.mean = list(box)
        self.conf_mean = conf
        self.conf_max = conf
        self.n = 1
        self.views = {view}

    def add(self, box, conf, view):
        # incremental means stay exact when all members are equal
        self.n += 1
        self.mean = [m + (b - m) / self.n for m, b in zip(self.mean, box)]
        self.conf_mean += (conf - self.conf_mean) / self.n
        self.conf_max = max(self.conf_max, conf)
        self.views.add(view)


def fuse(views: Sequence[Sequence[DetectionRecord]], iou_threshold: float = 0.55,
         confidence_rule: str = "views", universe: Iterable[tuple[int, int]] | None = None
         ) -> list[FusedDetection]:
    """Greedy clustering and averaging of unmapped per-view detections.

    Boxes of one ``(video, frame, class)`` are visited by descending
    confidence (ties by coordinates). A box joins the cluster whose running
    mean box it overlaps most, provided the IoU reaches ``iou_threshold`` and
    the cluster has no member from the same view yet; otherwise it opens a
    new cluster. The fused box is the members' mean. Fused confidence is
    the sum of member confidences divided by the number of views
    (``confidence_rule="views"``), so boxes missing from some views are
    down-weighted, or the plain member mean (``"members"``).
    """
    if confidence_rule not in ("views", "members"):
        raise ValueError(f"unknown confidence rule {confidence_rule!r}")
    n_views = len(views)
    if n_views == 0:
        return []
    if universe is not None:
        allowed = set(universe)
        offenders = sorted({(r.video_id, r.frame_id) for v in views for r in v} - allowed)
        if offenders:
            raise FusionError(f"detections on frames outside the shared frame set: {offenders}")
    groups: dict[tuple[int, int, int], list[tuple[DetectionRecord, int]]] = {}
    for vi, recs in enumerate(views):
        for r in recs:
            if r.confidence is None:
                raise FusionError(f"view {vi} has a record without confidence: {r}")
            groups.setdefault((r.video_id, r.frame_id, r.class_id), []).append((r, vi))
    fused = []
    for (vid, fid, cls), items in sorted(groups.items()):
        items.sort(key=lambda rv: (-rv[0].confidence, rv[0].box, rv[1]))
        clusters: list[_Cluster] = []
        for r, vi in items:
            best, best_iou = None, -1.0
            for c in clusters:
                if vi in c.views:
                    continue
                o = iou(c.mean, r.box)
                if o >= iou_threshold and o > best_iou:
                    best, best_iou = c, o
            if best is None:
                clusters.append(_Cluster(r.box, r.confidence, vi))
            else:
                best.add(r.box, r.confidence, vi)
        for c in clusters:
            if confidence_rule == "members" or c.n == n_views:
                conf = c.conf_mean
            else:
                conf = c.conf_mean * c.n / n_views
            conf = min(conf, c.conf_max)
            rec = DetectionRecord(vid, fid, *c.mean, cls, conf)
            fused.append(FusedDetection(rec, c.n))
    fused.sort(key=lambda f: (f.record.video_id, f.record.frame_id, f.record.class_id, -f.record.confidence,
                              f.record.box))
    return fused

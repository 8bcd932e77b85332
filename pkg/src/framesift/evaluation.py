"""Detection scoring: IoU matching, all-point interpolated AP, and mAP over classes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .media_io import DetectionRecord, read_detections

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
INTERPOLATION = "all-point"


class NoEvaluableClassesError(ValueError):
    pass


def iou(a, b) -> float:
    """Intersection over union of two ``(left, top, width, height)`` boxes.

    Integer coordinates are handled in exact integer arithmetic with a single
    correctly rounded division at the end.
    """
    al, at, aw, ah = a
    bl, bt, bw, bh = b
    ix = min(al + aw, bl + bw) - max(al, bl)
    iy = min(at + ah, bt + bh) - max(at, bt)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


def _rank_key(d: DetectionRecord):
    return (-d.confidence, d.video_id, d.frame_id, d.bb_left, d.bb_top, d.bb_width, d.bb_height)


@dataclass
class MatchResult:
    """Detections in rank order with their TP flag and matched GT index."""

    detections: list[DetectionRecord] = field(default_factory=list)
    is_tp: list[bool] = field(default_factory=list)
    matched_gt: list[int | None] = field(default_factory=list)
    gt_matched: list[bool] = field(default_factory=list)

    @property
    def n_gt(self) -> int:
        return len(self.gt_matched)


def match(gt: Sequence[DetectionRecord], detections: Sequence[DetectionRecord], iou_threshold: float = 0.5,
          class_id: int | None = None) -> MatchResult:
    """Greedy matching within each ``(video, frame)``.

    Detections are visited by descending confidence; each takes the unmatched
    GT box of its frame with the highest IoU if that IoU reaches the
    threshold, otherwise it is a false positive.
    """
    if class_id is not None:
        gt = [g for g in gt if g.class_id == class_id]
        detections = [d for d in detections if d.class_id == class_id]
    gt = list(gt)
    by_frame: dict[tuple, list[int]] = {}
    for i, g in enumerate(gt):
        by_frame.setdefault(g.key, []).append(i)
    res = MatchResult(gt_matched=[False] * len(gt))
    for d in sorted(detections, key=_rank_key):
        best, best_iou = None, -1.0
        for gi in by_frame.get(d.key, ()):
            if res.gt_matched[gi]:
                continue
            o = iou(d.box, gt[gi].box)
            if o > best_iou:
                best, best_iou = gi, o
        hit = best is not None and best_iou >= iou_threshold
        if hit:
            res.gt_matched[best] = True
        res.detections.append(d)
        res.is_tp.append(hit)
        res.matched_gt.append(best if hit else None)
    return res


@dataclass(frozen=True)
class APResult:
    class_id: int | None
    ap: float | None
    recall: tuple[float, ...]
    precision: tuple[float, ...]
    n_gt: int
    n_det: int


def average_precision(matches: MatchResult | Sequence[bool], n_gt: int | None = None,
                      class_id: int | None = None) -> APResult:
    """All-point interpolated AP: ``sum_k (R_k - R_{k-1}) * max_{j>=k} P_j``.

    ``matches`` is a :class:`MatchResult` or a ranked list of TP flags. With
    no ground truth the AP is undefined and returned as ``None``.
    """
    flags = matches.is_tp if isinstance(matches, MatchResult) else list(matches)
    if n_gt is None:
        if not isinstance(matches, MatchResult):
            raise ValueError("n_gt is required with a bare flag list")
        n_gt = matches.n_gt
    tp = fp = 0
    recall, precision = [], []
    for hit in flags:
        if hit:
            tp += 1
        else:
            fp += 1
        recall.append(tp / n_gt if n_gt else 0.0)
        precision.append(tp / (tp + fp))
    if n_gt == 0:
        return APResult(class_id, None, tuple(recall), tuple(precision), 0, len(flags))
    envelope = precision[:]
    for k in range(len(envelope) - 2, -1, -1):
        envelope[k] = max(envelope[k], envelope[k + 1])
    ap, prev = 0.0, 0.0
    for r, p in zip(recall, envelope):
        if r > prev:
            ap += (r - prev) * p
            prev = r
    return APResult(class_id, ap, tuple(recall), tuple(precision), n_gt, len(flags))


def mean_average_precision(aps: Iterable[float | None]) -> float:
    vals = [a for a in aps if a is not None]
    if not vals:
        raise NoEvaluableClassesError("no evaluable classes (every class has zero ground truth)")
    return sum(vals) / len(vals)


@dataclass
class EvalReport:
    thresholds: tuple[float, ...]
    per_threshold: dict[float, dict[int, APResult]]
    map_by_threshold: dict[float, float]
    map_50: float | None
    map_50_95: float | None
    counts: dict

    def to_dict(self) -> dict:
        return {
            "interpolation": INTERPOLATION,
            "thresholds": list(self.thresholds),
            "map_50": self.map_50,
            "map_50_95": self.map_50_95,
            "map_by_threshold": {f"{t:.2f}": m for t, m in self.map_by_threshold.items()},
            "per_class": {
                f"{t:.2f}": {
                    str(c): {"ap": r.ap, "n_gt": r.n_gt, "n_det": r.n_det} for c, r in sorted(res.items())
                }
                for t, res in self.per_threshold.items()
            },
            "counts": self.counts,
        }

    def format_table(self) -> str:
        lines = [f"interpolation: {INTERPOLATION}; IoU thresholds: "
                 + ", ".join(f"{t:.2f}" for t in self.thresholds)]
        classes = sorted({c for res in self.per_threshold.values() for c in res})
        header = "class  n_gt  n_det  " + "  ".join(f"AP@{t:.2f}" for t in self.thresholds)
        lines.append(header)
        for c in classes:
            first = self.per_threshold[self.thresholds[0]][c]
            aps = "  ".join(f"{self.per_threshold[t][c].ap:7.4f}" for t in self.thresholds)
            lines.append(f"{c:5d}  {first.n_gt:4d}  {first.n_det:5d}  {aps}")
        if self.map_50 is not None:
            lines.append(f"mAP@0.50      = {self.map_50:.4f}")
        if self.map_50_95 is not None:
            lines.append(f"mAP@0.50:0.95 = {self.map_50_95:.4f}")
        return "\n".join(lines)


def evaluate(gt: Sequence[DetectionRecord], predictions: Sequence[DetectionRecord],
             thresholds: Sequence[float] = (0.5,)) -> EvalReport:
    """Per-class AP at each IoU threshold; classes without ground truth are left out of the mean."""
    thresholds = tuple(thresholds)
    gt_classes = sorted({g.class_id for g in gt})
    if not gt_classes:
        raise NoEvaluableClassesError("ground truth is empty")
    gt_by_class = {c: [g for g in gt if g.class_id == c] for c in gt_classes}
    det_by_class = {c: [d for d in predictions if d.class_id == c] for c in gt_classes}
    per_threshold: dict[float, dict[int, APResult]] = {}
    map_by_threshold = {}
    for t in thresholds:
        res = {}
        for c in gt_classes:
            m = match(gt_by_class[c], det_by_class[c], t)
            res[c] = average_precision(m, class_id=c)
        per_threshold[t] = res
        map_by_threshold[t] = mean_average_precision(r.ap for r in res.values())
    map_50 = map_by_threshold.get(0.5)
    map_50_95 = None
    if set(COCO_THRESHOLDS) <= set(thresholds):
        map_50_95 = mean_average_precision(
            per_threshold[t][c].ap for t in COCO_THRESHOLDS for c in gt_classes
        )
    counts = {
        "gt": len(gt),
        "predictions": len(predictions),
        "classes": len(gt_classes),
        "predictions_without_gt_class": sum(1 for d in predictions if d.class_id not in gt_by_class),
    }
    return EvalReport(thresholds, per_threshold, map_by_threshold, map_50, map_50_95, counts)


def evaluate_files(gt_path, pred_path, thresholds: Sequence[float] = (0.5,)) -> EvalReport:
    return evaluate(read_detections(gt_path, False), read_detections(pred_path, True), thresholds)

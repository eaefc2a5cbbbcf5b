"""IoU, greedy TP/FP matching, per-class AP and mAP.

Defaults: IoU threshold 0.5 and all-point interpolated AP. The 11-point
variant is available through ``interpolation="11-point"``.
"""

from __future__ import annotations

import json
from fractions import Fraction
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InconsistentInputError,
    InvalidInputError,
    ParseError,
    UndefinedMetricError,
)

ALL_POINT = "all-point"
ELEVEN_POINT = "11-point"


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidInputError(f"degenerate box {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_list(self):
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def scaled(self, s: float) -> "BBox":
        return BBox(self.x_min * s, self.y_min * s, self.x_max * s, self.y_max * s)


@dataclass(frozen=True)
class Detection:
    class_id: int
    bbox: BBox
    confidence: float
    image_id: str

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError(f"confidence must lie in [0, 1], got {self.confidence}")

    def to_dict(self):
        return {
            "image_id": self.image_id,
            "class_id": self.class_id,
            "bbox": self.bbox.as_list(),
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, d) -> "Detection":
        x0, y0, x1, y1 = (float(v) for v in d["bbox"])
        return cls(int(d["class_id"]), BBox(x0, y0, x1, y1), float(d["confidence"]), str(d["image_id"]))


@dataclass(frozen=True)
class GroundTruthBox:
    class_id: int
    bbox: BBox
    image_id: str


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    n_gt: int = 0


@dataclass
class EvalResult:
    per_class_ap: dict
    map: float
    counts: dict = field(default_factory=dict)
    iou_thresh: float = 0.5
    interpolation: str = ALL_POINT

    def to_dict(self):
        return {
            "map": self.map,
            "iou_thresh": self.iou_thresh,
            "interpolation": self.interpolation,
            "per_class": {
                str(c): {"ap": self.per_class_ap[c], **vars(self.counts[c])}
                for c in sorted(self.per_class_ap)
            },
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _confidence_order(dets: Sequence[Detection]):
    # stable sort: ties keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruthBox],
                     iou_thresh: float = 0.5) -> list:
    """Greedy matching for one image and one class.

    Returns ``(detection, is_tp)`` pairs in descending confidence order. Each
    detection takes the still-unmatched ground truth with the highest IoU at
    or above ``iou_thresh``.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise InvalidInputError(f"iou_thresh must lie in (0, 1), got {iou_thresh}")
    keys = {(d.image_id, d.class_id) for d in dets} | {(g.image_id, g.class_id) for g in gts}
    if len(keys) > 1:
        raise InvalidInputError(f"match_detections needs one image and class, got {sorted(keys)}")
    return [(dets[i], tp) for i, tp in _greedy_match(dets, gts, iou_thresh)]


def _greedy_match(dets, gts, iou_thresh):
    taken = [False] * len(gts)
    out = []
    for i in _confidence_order(dets):
        box = dets[i].bbox
        best, best_j = -1.0, -1
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            o = iou(box, g.bbox)
            if o >= iou_thresh and o > best:
                best, best_j = o, j
        if best_j >= 0:
            taken[best_j] = True
        out.append((i, best_j >= 0))
    return out


def precision_recall(flags: Sequence[bool], n_gt: int):
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    ranks = np.arange(1, len(flags) + 1, dtype=np.float64)
    return tp / ranks, tp / n_gt


def average_precision(flags: Sequence[bool], n_gt: int, interpolation: str = ALL_POINT) -> float:
    """AP of a confidence-ordered TP/FP sequence against ``n_gt`` ground truths."""
    flags = [bool(f) for f in flags]
    if n_gt < 0:
        raise InvalidInputError(f"n_gt must be >= 0, got {n_gt}")
    if sum(flags) > n_gt:
        raise InconsistentInputError(f"{sum(flags)} true positives exceed {n_gt} ground truths")
    if n_gt == 0 or not flags:
        return 0.0
    if interpolation == ALL_POINT:
        # Recall only moves at TPs, by 1/n_gt each, so AP is the mean of the
        # precision envelope over TP ranks. Exact rationals keep hand-checkable
        # cases such as 5/6 bit-exact.
        tp = 0
        prec = []
        for rank, f in enumerate(flags, 1):
            tp += f
            prec.append(Fraction(tp, rank))
        best = Fraction(0)
        total = Fraction(0)
        for f, p in zip(reversed(flags), reversed(prec)):
            if p > best:
                best = p
            if f:
                total += best
        return float(total / n_gt)
    if interpolation == ELEVEN_POINT:
        precision, recall = precision_recall(flags, n_gt)
        total = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            above = precision[recall >= t]
            total += above.max() if above.size else 0.0
        return float(total / 11.0)
    raise InvalidInputError(f"unknown interpolation {interpolation!r}")


def mean_average_precision(dets: Iterable[Detection], gts: Iterable[GroundTruthBox],
                           iou_thresh: float = 0.5, interpolation: str = ALL_POINT) -> EvalResult:
    """mAP over every class that has at least one ground-truth box.

    Matching is per (image, class). Flags are then pooled per class across
    images in global descending-confidence order, ties broken by input order.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise InvalidInputError(f"iou_thresh must lie in (0, 1), got {iou_thresh}")
    dets = list(dets)
    gts = list(gts)
    if not gts:
        raise UndefinedMetricError("mAP is undefined without ground truth")
    det_groups = defaultdict(list)
    gt_groups = defaultdict(list)
    for idx, d in enumerate(dets):
        det_groups[(d.image_id, d.class_id)].append((idx, d))
    for g in gts:
        gt_groups[(g.image_id, g.class_id)].append(g)

    n_gt = defaultdict(int)
    for (_, c), group in gt_groups.items():
        n_gt[c] += len(group)

    pooled = defaultdict(list)  # class -> [(confidence, input index, is_tp)]
    for key, group in det_groups.items():
        c = key[1]
        if c not in n_gt:
            continue
        local = [d for _, d in group]
        for i, is_tp in _greedy_match(local, gt_groups.get(key, []), iou_thresh):
            pooled[c].append((local[i].confidence, group[i][0], is_tp))

    per_class, counts = {}, {}
    for c in sorted(n_gt):
        rows = sorted(pooled.get(c, []), key=lambda r: (-r[0], r[1]))
        flags = [r[2] for r in rows]
        per_class[c] = average_precision(flags, n_gt[c], interpolation)
        tp = sum(flags)
        counts[c] = ClassCounts(tp=tp, fp=len(flags) - tp, n_gt=n_gt[c])
    m = float(np.mean(list(per_class.values())))
    return EvalResult(per_class, m, counts, iou_thresh, interpolation)


def read_detections_jsonl(lines: Iterable[str]) -> list:
    """Parse detection JSON Lines; blank lines are skipped."""
    out = []
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            d = json.loads(line)
            if not isinstance(d, dict):
                raise ValueError("expected a JSON object")
            extra = set(d) - {"image_id", "class_id", "bbox", "confidence"}
            if extra:
                raise ValueError(f"unknown keys {sorted(extra)}")
            if len(d["bbox"]) != 4:
                raise ValueError("bbox must have 4 numbers")
            out.append(Detection.from_dict(d))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad detection record: {exc}", n) from None
    return out


def load_detections(path) -> list:
    with open(path) as fh:
        return read_detections_jsonl(fh)


def dump_detections_jsonl(dets: Iterable[Detection]) -> str:
    return "".join(json.dumps(d.to_dict()) + "\n" for d in dets)


def parse_yolo_gt(text: str, image_id: str, width: int, height: int) -> list:
    """YOLO label lines ``class cx cy w h`` (normalized) to pixel ground-truth boxes."""
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", n)
        try:
            c = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise ParseError(str(exc), n) from None
        bbox = BBox((cx - w / 2) * width, (cy - h / 2) * height,
                    (cx + w / 2) * width, (cy + h / 2) * height)
        out.append(GroundTruthBox(c, bbox, image_id))
    return out


def format_yolo_gt(gts: Iterable[GroundTruthBox], width: int, height: int) -> str:
    lines = []
    for g in gts:
        b = g.bbox
        lines.append("%d %.9f %.9f %.9f %.9f" % (
            g.class_id,
            (b.x_min + b.x_max) / 2 / width, (b.y_min + b.y_max) / 2 / height,
            (b.x_max - b.x_min) / width, (b.y_max - b.y_min) / height,
        ))
    return "".join(line + "\n" for line in lines)

"""Independent reference computations used by the tests.

Nothing here calls into wxaug.evaluate; it only reads plain attributes of
the record types.
"""

from collections import defaultdict


def box_iou(a, b):
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    if inter == 0:
        return 0.0
    return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter)


def _coords(b):
    return (b.x_min, b.y_min, b.x_max, b.y_max)


def _true_positives(dets, gts, thresh):
    """Greedy matching, image by image, over an already-thresholded subset."""
    tp = 0
    by_image = defaultdict(list)
    for d in dets:
        by_image[d.image_id].append(d)
    for image_id, ds in by_image.items():
        pool = [_coords(g.bbox) for g in gts if g.image_id == image_id]
        used = set()
        for d in sorted(ds, key=lambda d: d.confidence, reverse=True):
            best, best_j = None, None
            for j, g in enumerate(pool):
                if j in used:
                    continue
                o = box_iou(_coords(d.bbox), g)
                if o >= thresh and (best is None or o > best):
                    best, best_j = o, j
            if best_j is not None:
                used.add(best_j)
                tp += 1
    return tp


def brute_force_ap(dets, gts, thresh=0.5):
    """AP for one class by sweeping every confidence threshold explicitly.

    For each distinct confidence t, keep detections with confidence >= t,
    rematch from scratch and record (recall, precision). AP integrates the
    upper envelope max{precision at recall >= r} over recall.
    """
    n_gt = len(gts)
    if n_gt == 0:
        return 0.0
    points = []
    for t in sorted({d.confidence for d in dets}, reverse=True):
        kept = [d for d in dets if d.confidence >= t]
        tp = _true_positives(kept, gts, thresh)
        points.append((tp / n_gt, tp / len(kept)))
    ap = 0.0
    prev = 0.0
    for r in sorted({r for r, _ in points}):
        if r <= prev:
            continue
        ap += (r - prev) * max(p for rr, p in points if rr >= r)
        prev = r
    return ap


def brute_force_map(dets, gts, thresh=0.5):
    classes = sorted({g.class_id for g in gts})
    aps = {}
    for c in classes:
        aps[c] = brute_force_ap([d for d in dets if d.class_id == c],
                                [g for g in gts if g.class_id == c], thresh)
    return sum(aps.values()) / len(aps), aps


def brute_force_ap_from_flags(flags, n_gt):
    """All-point AP from an ordered TP/FP list via explicit PR points."""
    pts = []
    tp = 0
    for i, f in enumerate(flags, 1):
        tp += bool(f)
        pts.append((tp / n_gt, tp / i))
    ap, prev = 0.0, 0.0
    for r in sorted({r for r, _ in pts}):
        if r <= prev:
            continue
        ap += (r - prev) * max(p for rr, p in pts if rr >= r)
        prev = r
    return ap

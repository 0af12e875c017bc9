"""Detection metrics: average precision at IoU 0.5 and recall.

Matching is greedy over detections sorted by descending score: each
detection claims the unmatched ground-truth box with the highest IoU,
provided the IoU is at least the threshold; every ground truth can be
claimed once. AP integrates the precision envelope over all recall change
points (all-point interpolation, no 11-point sampling). Recall counts
matched ground truths over all ground truths, using every detection.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (N,4) and (M,4) xyxy boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix = np.clip(np.minimum(a[:, None, 2], b[None, :, 2])
                 - np.maximum(a[:, None, 0], b[None, :, 0]), 0.0, None)
    iy = np.clip(np.minimum(a[:, None, 3], b[None, :, 3])
                 - np.maximum(a[:, None, 1], b[None, :, 1]), 0.0, None)
    inter = ix * iy
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def match_detections(detections, ground_truths, iou_thresh: float = 0.5):
    """Flags each detection TP/FP by greedy IoU matching.

    ``detections``: list per image of (boxes (N,4), scores (N,)).
    ``ground_truths``: list per image of boxes (M,4).
    Returns (scores, tp_flags) over all detections, sorted by descending
    score (ties broken by image then detection index), plus n_gt.
    """
    if len(detections) != len(ground_truths):
        raise DataError(f"{len(detections)} detection lists for "
                        f"{len(ground_truths)} ground-truth lists")
    n_gt = sum(len(g) for g in ground_truths)
    if n_gt == 0:
        raise DataError("evaluation needs at least one ground-truth box")
    rows = []  # (-score, image index, det index, tp)
    for img, ((boxes, scores), gts) in enumerate(zip(detections, ground_truths)):
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        gts = np.asarray(gts, dtype=np.float64).reshape(-1, 4)
        order = np.argsort(-scores, kind="stable")
        taken = np.zeros(len(gts), dtype=bool)
        ious = iou_matrix(boxes, gts) if len(gts) and len(boxes) else None
        for di in order:
            tp = False
            if ious is not None:
                cand = np.where(~taken & (ious[di] >= iou_thresh))[0]
                if len(cand):
                    best = cand[np.argmax(ious[di, cand])]
                    taken[best] = True
                    tp = True
            rows.append((-scores[di], img, int(di), tp))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    scores = np.array([-r[0] for r in rows])
    tps = np.array([r[3] for r in rows], dtype=bool)
    return scores, tps, n_gt


def average_precision(tp_flags: np.ndarray, n_gt: int) -> float:
    """All-point interpolated AP from score-sorted TP flags."""
    if n_gt <= 0:
        raise DataError("average precision is undefined without ground truth")
    if len(tp_flags) == 0:
        return 0.0
    tp_cum = np.cumsum(tp_flags)
    fp_cum = np.cumsum(~tp_flags)
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    # precision envelope from the right, integrate over recall steps
    env = np.maximum.accumulate(precision[::-1])[::-1]
    r_prev = 0.0
    ap = 0.0
    for r, p in zip(recall, env):
        if r > r_prev:
            ap += (r - r_prev) * p
            r_prev = r
    return float(ap)


def evaluate_detections(detections, ground_truths, iou_thresh: float = 0.5):
    """AP at the given IoU plus recall over all detections.

    Returns {"ap50": float, "recall": float, "n_gt": int, "n_det": int}.
    """
    scores, tps, n_gt = match_detections(detections, ground_truths, iou_thresh)
    ap = average_precision(tps, n_gt)
    recall = float(tps.sum() / n_gt)
    return {"ap50": ap, "recall": recall, "n_gt": int(n_gt),
            "n_det": int(len(tps))}

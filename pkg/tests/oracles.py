"""Independent reference implementations the tests compare against.

Everything here is written in the most direct style possible (python
loops, no vectorisation, no shared code with the package) so that a bug
in the package and a bug in the oracle are unlikely to coincide.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_naive(x, w, stride=1, padding=0, groups=1, bias=None):
    """Cross-correlation with zero padding, python loops all the way."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    B, Cin, H, W = x.shape
    Cout, cpg, kh, kw = w.shape
    s, p = stride, padding
    Ho = (H + 2 * p - kh) // s + 1
    Wo = (W + 2 * p - kw) // s + 1
    cog = Cout // groups
    out = np.zeros((B, Cout, Ho, Wo))
    for b in range(B):
        for co in range(Cout):
            g = co // cog
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for ci in range(cpg):
                        for u in range(kh):
                            for v in range(kw):
                                hi = i * s - p + u
                                wj = j * s - p + v
                                if 0 <= hi < H and 0 <= wj < W:
                                    acc += x[b, g * cpg + ci, hi, wj] * w[co, ci, u, v]
                    out[b, co, i, j] = acc
            if bias is not None:
                out[b, co] += bias[co]
    return out


def second_difference_1d(x, taps, axis):
    """Apply a 3-tap filter along one spatial axis with zero padding."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    B, C, H, W = x.shape
    for b in range(B):
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    acc = 0.0
                    for t in range(3):
                        if axis == "v":
                            ii, jj = i + t - 1, j
                        else:
                            ii, jj = i, j + t - 1
                        if 0 <= ii < H and 0 <= jj < W:
                            acc += taps[c, t] * x[b, c, ii, jj]
                    out[b, c, i, j] = acc
    return out


def numeric_gradient(f, arr, step=1e-6):
    """Central finite differences of scalar f with respect to arr entries."""
    g = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        fp = f()
        flat[i] = keep - step
        fm = f()
        flat[i] = keep
        gf[i] = (fp - fm) / (2 * step)
    return g


def iou_xyxy(a, b):
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(0.0, ix2 - ix1), max(0.0, iy2 - iy1)
    inter = iw * ih
    if inter <= 0:
        return 0.0
    ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / ua


def nms_brute(boxes, scores, iou_thresh):
    """Greedy NMS by repeated scans: at each step pick the best remaining
    candidate by (-score, y1, x1), keep it, delete strictly-overlapping
    ones above the threshold."""
    remaining = list(range(len(scores)))
    kept = []
    while remaining:
        best = None
        for i in remaining:
            key = (-scores[i], boxes[i][1], boxes[i][0])
            if best is None or key < best[0]:
                best = (key, i)
        i = best[1]
        kept.append(i)
        still = []
        for j in remaining:
            if j == i:
                continue
            if iou_xyxy(boxes[i], boxes[j]) <= iou_thresh:
                still.append(j)
        remaining = still
    return kept


def ap50_brute(detections, ground_truths, iou_thresh=0.5):
    """(ap, recall) by explicit greedy matching and rectangle-sum AP."""
    rows = []
    for img, (boxes, scores) in enumerate(detections):
        for k in range(len(scores)):
            rows.append((float(scores[k]), img, k, list(boxes[k])))
    rows.sort(key=lambda r: (-r[0], r[1], r[2]))
    n_gt = sum(len(g) for g in ground_truths)
    used = [set() for _ in ground_truths]
    flags = []
    for score, img, k, box in rows:
        gts = ground_truths[img]
        best_iou, best_g = 0.0, None
        for gi in range(len(gts)):
            if gi in used[img]:
                continue
            v = iou_xyxy(box, gts[gi])
            if v >= iou_thresh and v > best_iou:
                best_iou, best_g = v, gi
        if best_g is not None:
            used[img].add(best_g)
            flags.append(True)
        else:
            flags.append(False)
    # all-point AP: walk ranks, area under the right-side precision envelope
    ap = 0.0
    tp = 0
    last_recall = 0.0
    for rank, flag in enumerate(flags, 1):
        if not flag:
            continue
        tp += 1
        recall = tp / n_gt
        # precision envelope at this recall: best precision at any rank >= here
        best_prec = 0.0
        t = 0
        for r2, f2 in enumerate(flags, 1):
            if f2:
                t += 1
            if r2 >= rank:
                best_prec = max(best_prec, t / r2)
        ap += (recall - last_recall) * best_prec
        last_recall = recall
    total_tp = sum(flags)
    return ap, (total_tp / n_gt if n_gt else 0.0)


def bilinear_resize_naive(img, out_h, out_w):
    h, w = img.shape
    out = np.zeros((out_h, out_w))
    for oy in range(out_h):
        for ox in range(out_w):
            sy = (oy + 0.5) * h / out_h - 0.5
            sx = (ox + 0.5) * w / out_w - 0.5
            y0, x0 = math.floor(sy), math.floor(sx)
            fy, fx = sy - y0, sx - x0
            total = 0.0
            for dy in (0, 1):
                for dx in (0, 1):
                    yy = min(max(y0 + dy, 0), h - 1)
                    xx = min(max(x0 + dx, 0), w - 1)
                    wgt = (fy if dy else 1 - fy) * (fx if dx else 1 - fx)
                    total += wgt * img[yy, xx]
            out[oy, ox] = total
    return out


def highfreq_energy(img):
    """Mean squared first difference, both axes: a texture roughness score."""
    img = np.asarray(img, dtype=np.float64)
    dv = img[1:, :] - img[:-1, :]
    dh = img[:, 1:] - img[:, :-1]
    return float((dv ** 2).mean() + (dh ** 2).mean())

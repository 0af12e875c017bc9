"""Single-class detector with metadata-conditioned feature refinement.

A small four-stage backbone produces a pyramid at strides 4/8/16/32. After
the full backbone pass, the configured refinement modules run on the
shallowest levels: each refined level gets a guidance vector from the
level-difference encoder (conditioned on the metadata embedding, with the
untouched deepest level as reference), the guided modulator reweights the
level, and the edge enhancer sharpens it. A lightweight top-down pyramid
then merges levels and a dense head predicts one objectness logit and four
box offsets per stride-4 cell.

Offsets are (dx, dy, w, h) in stride units: dx/dy displace the box centre
from the cell centre, w/h are the box extents divided by the stride.
"""

from __future__ import annotations

import numpy as np

from .compensation import LevelCompensation
from .edge import EdgeEnhancer
from .errors import ConfigError, ShapeError
from .metadata import MetadataEncoder
from .modulation import FeatureModulator
from .nn import Conv2d, Module, RngStream, Tensor, ops

STAGE_CHANNELS = (16, 32, 64, 128)
STAGE_STRIDES = (4, 8, 16, 32)
HEAD_STRIDE = 4
N_LEVELS = 4


class ConvRelu(Module):
    def __init__(self, c_in, c_out, k, stride, rng, dtype):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, k, stride=stride, padding=k // 2,
                           rng=rng, dtype=dtype)

    def forward(self, x):
        return ops.relu(self.conv(x))


class Backbone(Module):
    """Four stages, two 3x3 convs each; strides 4/8/16/32."""

    def __init__(self, rng: RngStream, dtype=np.float32,
                 channels=STAGE_CHANNELS):
        super().__init__()
        c_prev = 1
        self.stages = []
        for i, c in enumerate(channels):
            srng = rng.split(i)
            # stage 1 downsamples twice (stride 4); the rest once
            s2 = 2 if i == 0 else 1
            stage = [ConvRelu(c_prev, c, 3, 2, srng.split(0), dtype),
                     ConvRelu(c, c, 3, s2, srng.split(1), dtype)]
            self.stages.append(stage)
            setattr(self, f"stage{i + 1}a", stage[0])
            setattr(self, f"stage{i + 1}b", stage[1])
            c_prev = c

    def forward(self, x) -> list[Tensor]:
        levels = []
        for stage in self.stages:
            for block in stage:
                x = block(x)
            levels.append(x)
        return levels


class Pyramid(Module):
    """1x1 laterals to a common width, nearest x2 top-down merge."""

    def __init__(self, channels, width, rng: RngStream, dtype=np.float32):
        super().__init__()
        self.width = width
        self.laterals = []
        for i, c in enumerate(channels):
            lat = Conv2d(c, width, 1, rng=rng.split(i), dtype=dtype)
            self.laterals.append(lat)
            setattr(self, f"lateral{i + 1}", lat)

    def forward(self, levels) -> Tensor:
        top = None
        for i in range(len(levels) - 1, -1, -1):
            lat = self.laterals[i](levels[i])
            top = lat if top is None else lat + ops.upsample2x(top)
        return top


class Head(Module):
    """Two 3x3 convs then a zero-initialised 1x1 producing 5 channels."""

    def __init__(self, c_in, width, rng: RngStream, dtype=np.float32):
        super().__init__()
        self.block1 = ConvRelu(c_in, width, 3, 1, rng.split(0), dtype)
        self.block2 = ConvRelu(width, width, 3, 1, rng.split(1), dtype)
        self.out = Conv2d(width, 5, 1, rng=rng.split(2), dtype=dtype,
                          zero_init=True)

    def forward(self, x):
        y = self.out(self.block2(self.block1(x)))
        return ops.narrow(y, 1, 0, 1), ops.narrow(y, 1, 1, 4)


class Detector(Module):
    """Backbone + metadata-conditioned refinement + pyramid + dense head.

    ``modulation_depth``/``edge_depth`` count how many of the shallowest
    pyramid levels each refinement touches (0 disables the module and its
    parameters entirely). The deepest level is never refined; it serves as
    the alignment reference for the level-difference encoder.

    RNG substreams are fixed per component, so toggling one module off
    leaves every other module's initialisation bit-identical.
    """

    def __init__(self, rng: RngStream, dtype=np.float32,
                 modulation_depth: int = 2, edge_depth: int = 2,
                 topology: str = "parallel", share_branch_cascade: bool = True,
                 metadata_mask=(), fpn_width: int = 48, head_width: int = 48,
                 d_aux: int = 64, fusion_blocks: int = 2, dropout: float = 0.1,
                 compensation_mode: str = "bottleneck",
                 sigma_w: float = 6000.0, sigma_h: float = 6000.0):
        super().__init__()
        if not (0 <= modulation_depth <= N_LEVELS - 1):
            raise ConfigError(f"modulation_depth must be in [0, {N_LEVELS - 1}], "
                              f"got {modulation_depth}")
        if not (0 <= edge_depth <= N_LEVELS - 1):
            raise ConfigError(f"edge_depth must be in [0, {N_LEVELS - 1}], "
                              f"got {edge_depth}")
        self.dtype = np.dtype(dtype)
        self.modulation_depth = modulation_depth
        self.edge_depth = edge_depth
        self.metadata_mask = tuple(metadata_mask)
        self.backbone = Backbone(rng.split(0), dtype)
        c_ref = STAGE_CHANNELS[-1]
        if modulation_depth > 0:
            self.codec = MetadataEncoder(rng.split(1), n_blocks=fusion_blocks,
                                         p_drop=dropout, sigma_w=sigma_w,
                                         sigma_h=sigma_h, dtype=dtype)
            self.compensators = []
            self.modulators = []
            for i in range(modulation_depth):
                ratio = STAGE_STRIDES[-1] // STAGE_STRIDES[i]
                comp = LevelCompensation(STAGE_CHANNELS[i], ratio, c_ref,
                                         self.codec.d_z, d_aux,
                                         rng.split(2 + i), dtype=dtype,
                                         mode=compensation_mode)
                mod = FeatureModulator(STAGE_CHANNELS[i], d_aux, rng.split(10 + i),
                                       dtype=dtype, topology=topology,
                                       share_cascade=share_branch_cascade)
                self.compensators.append(comp)
                self.modulators.append(mod)
                setattr(self, f"compensate{i + 1}", comp)
                setattr(self, f"modulate{i + 1}", mod)
        if edge_depth > 0:
            self.edges = []
            for i in range(edge_depth):
                edge = EdgeEnhancer(STAGE_CHANNELS[i], dtype=dtype)
                self.edges.append(edge)
                setattr(self, f"edge{i + 1}", edge)
        self.pyramid = Pyramid(STAGE_CHANNELS, fpn_width, rng.split(20), dtype)
        self.head = Head(fpn_width, head_width, rng.split(21), dtype)

    def forward(self, images: Tensor, records=None, rng: RngStream | None = None):
        """Returns (logits (B,1,H/4,W/4), offsets (B,4,H/4,W/4))."""
        levels = self.backbone(images)
        if self.modulation_depth > 0:
            if records is None:
                raise ConfigError("detector was built with metadata conditioning "
                                  "but forward() got no metadata records")
            if len(records) != images.data.shape[0]:
                raise ShapeError(f"{len(records)} metadata records for batch "
                                 f"of {images.data.shape[0]}")
            z = self.codec(records, rng=rng, mask=self.metadata_mask)
            reference = levels[-1]
            for i in range(self.modulation_depth):
                a = self.compensators[i](levels[i], reference, z)
                levels[i] = self.modulators[i](levels[i], a)
        if self.edge_depth > 0:
            for i in range(self.edge_depth):
                levels[i] = self.edges[i](levels[i])
        fused = self.pyramid(levels)
        return self.head(fused)


def detection_loss(logits: Tensor, offsets: Tensor, boxes_list,
                   stride: int = HEAD_STRIDE, pos_weight: float = 24.0,
                   box_weight: float = 1.0):
    """Weighted objectness BCE plus L1 on offsets at positive cells.

    Each ground-truth box marks the cell containing its centre positive;
    positives are up-weighted by ``pos_weight`` in the (mean) BCE. The box
    L1 averages over positive cells and the 4 offset channels.
    Returns (loss, parts dict of floats).
    """
    b, _, gh, gw = logits.data.shape
    dt = logits.data.dtype
    tgt_obj = np.zeros((b, 1, gh, gw), dtype=dt)
    tgt_box = np.zeros((b, 4, gh, gw), dtype=dt)
    pos_mask = np.zeros((b, 1, gh, gw), dtype=dt)
    for bi, boxes in enumerate(boxes_list):
        for x1, y1, x2, y2 in np.asarray(boxes, dtype=np.float64):
            cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
            gj = min(max(int(cx / stride), 0), gw - 1)
            gi = min(max(int(cy / stride), 0), gh - 1)
            tgt_obj[bi, 0, gi, gj] = 1.0
            pos_mask[bi, 0, gi, gj] = 1.0
            tgt_box[bi, 0, gi, gj] = cx / stride - gj - 0.5
            tgt_box[bi, 1, gi, gj] = cy / stride - gi - 0.5
            tgt_box[bi, 2, gi, gj] = (x2 - x1) / stride
            tgt_box[bi, 3, gi, gj] = (y2 - y1) / stride
    bce = ops.bce_with_logits(logits, tgt_obj)
    weights = 1.0 + (pos_weight - 1.0) * pos_mask
    loss_obj = ops.sum_all(bce * Tensor(weights)) / float(weights.sum())
    n_pos = float(pos_mask.sum())
    if n_pos > 0:
        diff = ops.abs_((offsets - Tensor(tgt_box)) * Tensor(np.broadcast_to(
            pos_mask, tgt_box.shape).copy()))
        loss_box = ops.sum_all(diff) / (4.0 * n_pos)
    else:
        loss_box = ops.sum_all(offsets * Tensor(np.zeros_like(tgt_box)))
    loss = loss_obj + box_weight * loss_box
    parts = {"objectness": float(loss_obj.data), "box": float(loss_box.data),
             "n_pos": n_pos}
    return loss, parts


def decode_predictions(logits: np.ndarray, offsets: np.ndarray,
                       stride: int = HEAD_STRIDE, score_thresh: float = 0.05,
                       nms_iou: float = 0.5, max_dets: int = 64,
                       image_size: int | None = None, pre_topk: int = 256):
    """Grid outputs -> per-image (boxes (N,4), scores (N,)) after NMS.

    At most ``pre_topk`` candidate cells enter NMS, chosen by descending
    score with (row, column) tie-breaks, so decoding stays cheap even on
    an untrained head where every cell clears the threshold.
    """
    b, _, gh, gw = logits.shape
    scores_all = 1.0 / (1.0 + np.exp(-logits[:, 0].astype(np.float64)))
    results = []
    for bi in range(b):
        sc = scores_all[bi]
        gi, gj = np.nonzero(sc >= score_thresh)
        s = sc[gi, gj]
        if len(s) > pre_topk:
            pick = np.lexsort((gj, gi, -s))[:pre_topk]
            gi, gj, s = gi[pick], gj[pick], s[pick]
        off = offsets[bi, :, gi, gj].astype(np.float64)
        cx = (gj + 0.5 + off[:, 0]) * stride
        cy = (gi + 0.5 + off[:, 1]) * stride
        bw = np.maximum(off[:, 2], 0.0) * stride
        bh = np.maximum(off[:, 3], 0.0) * stride
        boxes = np.stack([cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2],
                         axis=1)
        if image_size is not None:
            boxes = np.clip(boxes, 0.0, float(image_size))
        kept = nms(boxes, s, nms_iou, max_keep=max_dets)
        results.append((boxes[kept], s[kept]))
    return results


def nms(boxes: np.ndarray, scores: np.ndarray, iou_thresh: float = 0.5,
        max_keep: int | None = None):
    """Greedy NMS. Candidates are visited in (-score, y1, x1) order and a
    box is dropped when its IoU with an already kept box exceeds the
    threshold (strictly). Returns kept indices in visit order."""
    n = len(scores)
    if n == 0:
        return np.zeros(0, dtype=int)
    order = sorted(range(n), key=lambda i: (-scores[i], boxes[i, 1], boxes[i, 0]))
    kept: list[int] = []
    for i in order:
        ok = True
        for j in kept:
            if box_iou(boxes[i], boxes[j]) > iou_thresh:
                ok = False
                break
        if ok:
            kept.append(i)
            if max_keep is not None and len(kept) >= max_keep:
                break
    return np.asarray(kept, dtype=int)


def box_iou(a, b) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)

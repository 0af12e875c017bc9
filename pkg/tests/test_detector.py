"""Detector assembly: shapes, loss targets, decoding, NMS, init isolation."""

import math

import numpy as np
import pytest

from metadet.detector import (HEAD_STRIDE, N_LEVELS, STAGE_CHANNELS,
                              STAGE_STRIDES, Backbone, Detector, box_iou,
                              decode_predictions, detection_loss, nms)
from metadet.errors import ConfigError, ShapeError
from metadet.metadata import MetadataRecord
from metadet.nn import RngStream, Tensor

from oracles import iou_xyxy, nms_brute


def recs(n, size=64):
    table = [("air", "LWIR"), ("space", "NIR"), ("land", "LWIR"), ("space", "SWIR")]
    return [MetadataRecord(*table[i % 4], size, size) for i in range(n)]


def make_det(seed=0, **kw):
    return Detector(RngStream(seed), **kw)


# -- shapes and wiring -----------------------------------------------------------

def test_backbone_level_shapes():
    bb = Backbone(RngStream(0))
    x = Tensor(RngStream(1).normal((2, 1, 64, 64), dtype=np.float32))
    levels = bb(x)
    assert len(levels) == N_LEVELS
    for lvl, c, s in zip(levels, STAGE_CHANNELS, STAGE_STRIDES):
        assert lvl.shape == (2, c, 64 // s, 64 // s)


def test_detector_output_grids():
    det = make_det().eval()
    x = Tensor(RngStream(2).normal((2, 1, 64, 64), dtype=np.float32))
    logits, offsets = det(x, recs(2))
    assert logits.shape == (2, 1, 16, 16)
    assert offsets.shape == (2, 4, 16, 16)
    assert 64 // HEAD_STRIDE == 16


def test_depth_bounds_checked():
    with pytest.raises(ConfigError):
        make_det(modulation_depth=N_LEVELS)
    with pytest.raises(ConfigError):
        make_det(edge_depth=-1)


def test_conditioned_forward_requires_records():
    det = make_det().eval()
    x = Tensor(RngStream(3).normal((1, 1, 64, 64), dtype=np.float32))
    with pytest.raises(ConfigError, match="metadata"):
        det(x)
    with pytest.raises(ShapeError, match="records"):
        det(x, recs(3))


def test_unconditioned_detector_ignores_records():
    det = make_det(modulation_depth=0, edge_depth=0).eval()
    x = Tensor(RngStream(4).normal((1, 1, 64, 64), dtype=np.float32))
    logits, _ = det(x)
    assert logits.shape == (1, 1, 16, 16)
    assert not hasattr(det, "codec")


def test_zero_init_head_gives_half_scores():
    det = make_det(seed=5).eval()
    x = Tensor(RngStream(6).normal((1, 1, 64, 64), dtype=np.float32))
    logits, offsets = det(x, recs(1))
    assert np.all(logits.data == 0.0)
    assert np.all(offsets.data == 0.0)


def test_toggling_modules_keeps_sibling_inits():
    """Removing one refinement must leave every shared component's
    initialization bit-identical (fixed RNG substream per component)."""
    full = make_det(seed=7)
    no_edge = make_det(seed=7, edge_depth=0)
    no_mod = make_det(seed=7, modulation_depth=0)
    base = {n: p for n, p in full.named_parameters()}
    for variant in (no_edge, no_mod):
        for name, p in variant.named_parameters():
            if name in base:
                assert np.array_equal(p.data, base[name].data), name


def test_metadata_changes_output_but_not_untouched_reference():
    det = make_det(seed=8).eval()
    x = Tensor(RngStream(9).normal((1, 1, 64, 64), dtype=np.float32))
    r1 = [MetadataRecord("air", "LWIR", 64, 64)]
    r2 = [MetadataRecord("space", "NIR", 64, 64)]
    l1, _ = det(x, r1)
    l2, _ = det(x, r2)
    # zero-init head hides the difference; compare refined features instead
    lv1 = det.backbone(x)
    z1 = det.codec(r1, mask=())
    z2 = det.codec(r2, mask=())
    a1 = det.compensators[0](lv1[0], lv1[-1], z1)
    a2 = det.compensators[0](lv1[0], lv1[-1], z2)
    assert not np.array_equal(a1.data, a2.data)


def test_per_sample_locality_whole_model_features():
    det = make_det(seed=10).eval()
    rng = RngStream(11)
    x = rng.normal((3, 1, 64, 64), dtype=np.float32)
    rs = recs(3)
    lv = det.backbone(Tensor(x))
    z = det.codec(rs, mask=())
    base = det.modulators[0](lv[0], det.compensators[0](lv[0], lv[-1], z)).data
    rs2 = list(rs)
    rs2[1] = MetadataRecord("land", "SWIR", 64, 64)
    z2 = det.codec(rs2, mask=())
    out = det.modulators[0](lv[0], det.compensators[0](lv[0], lv[-1], z2)).data
    assert np.array_equal(out[0], base[0])
    assert np.array_equal(out[2], base[2])
    assert not np.array_equal(out[1], base[1])


def test_param_count_budget_split():
    full = make_det(seed=12)
    plain = make_det(seed=12, modulation_depth=0, edge_depth=0)
    edges_only = make_det(seed=12, modulation_depth=0, edge_depth=2)
    edge_overhead = edges_only.num_parameters() - plain.num_parameters()
    assert edge_overhead == sum(7 * STAGE_CHANNELS[i] + 1 for i in range(2))
    assert edge_overhead / plain.num_parameters() < 0.01
    assert full.num_parameters() > plain.num_parameters()


# -- loss -------------------------------------------------------------------------

def test_loss_at_zero_init_is_log_two():
    logits = Tensor(np.zeros((2, 1, 8, 8), dtype=np.float32))
    offsets = Tensor(np.zeros((2, 4, 8, 8), dtype=np.float32))
    loss, parts = detection_loss(logits, offsets, [np.zeros((0, 4)), np.zeros((0, 4))])
    assert parts["n_pos"] == 0.0
    assert abs(float(loss.data) - math.log(2.0)) < 1e-6


def test_loss_targets_center_cell():
    gh = gw = 8
    logits = Tensor(np.zeros((1, 1, gh, gw)))
    offsets = Tensor(np.zeros((1, 4, gh, gw)))
    box = np.array([[10.0, 18.0, 16.0, 26.0]])    # centre (13, 22) -> cell (5, 3)
    loss, parts = detection_loss(logits, offsets, [box], stride=4, box_weight=1.0)
    assert parts["n_pos"] == 1.0
    # offsets are zero so the box term is the mean |target|
    tx = 13.0 / 4 - 3 - 0.5
    ty = 22.0 / 4 - 5 - 0.5
    tw, th = 6.0 / 4, 8.0 / 4
    want_box = (abs(tx) + abs(ty) + abs(tw) + abs(th)) / 4.0
    assert abs(parts["box"] - want_box) < 1e-12


def test_loss_positive_weighting():
    gh = gw = 4
    logits = Tensor(np.zeros((1, 1, gh, gw)))
    offsets = Tensor(np.zeros((1, 4, gh, gw)))
    box = np.array([[0.0, 0.0, 8.0, 8.0]])        # centre (4,4) -> cell (1,1)
    _, parts_hi = detection_loss(logits, offsets, [box], pos_weight=24.0)
    _, parts_lo = detection_loss(logits, offsets, [box], pos_weight=1.0)
    # at zero logits BCE is log 2 everywhere, so weighting cannot change the
    # objectness mean; it redistributes as soon as logits move
    assert abs(parts_hi["objectness"] - math.log(2.0)) < 1e-12
    logits2 = Tensor(np.full((1, 1, gh, gw), -2.0))
    _, parts2 = detection_loss(logits2, offsets, [box], pos_weight=24.0)
    _, parts2_lo = detection_loss(logits2, offsets, [box], pos_weight=1.0)
    assert parts2["objectness"] > parts2_lo["objectness"]


def test_loss_gradient_direction():
    rng = RngStream(13)
    logits = Tensor(rng.normal((1, 1, 4, 4)) * 0.1, requires_grad=True)
    offsets = Tensor(np.zeros((1, 4, 4, 4)), requires_grad=True)
    box = np.array([[4.0, 4.0, 12.0, 12.0]])      # centre (8,8) -> cell (2,2)
    loss, _ = detection_loss(logits, offsets, [box])
    loss.backward()
    # pushing the positive cell's logit up lowers the loss
    assert logits.grad[0, 0, 2, 2] < 0
    # background cells push down
    assert logits.grad[0, 0, 0, 0] > 0


def test_loss_clamps_out_of_grid_centers():
    logits = Tensor(np.zeros((1, 1, 4, 4)))
    offsets = Tensor(np.zeros((1, 4, 4, 4)))
    box = np.array([[15.0, 15.0, 17.0, 17.0]])    # centre (16,16) -> clamped cell (3,3)
    _, parts = detection_loss(logits, offsets, [box], stride=4)
    assert parts["n_pos"] == 1.0


# -- decoding and NMS ---------------------------------------------------------------

def test_decode_roundtrips_exact_targets():
    """Writing a box's training targets into the grid and decoding must
    recover the box."""
    gh = gw = 16
    stride = 4
    box = np.array([14.0, 9.0, 27.0, 30.0])
    cx, cy = (box[0] + box[2]) / 2, (box[1] + box[3]) / 2
    gj, gi = int(cx / stride), int(cy / stride)
    logits = np.full((1, 1, gh, gw), -12.0, dtype=np.float32)
    offsets = np.zeros((1, 4, gh, gw), dtype=np.float32)
    logits[0, 0, gi, gj] = 8.0
    offsets[0, 0, gi, gj] = cx / stride - gj - 0.5
    offsets[0, 1, gi, gj] = cy / stride - gi - 0.5
    offsets[0, 2, gi, gj] = (box[2] - box[0]) / stride
    offsets[0, 3, gi, gj] = (box[3] - box[1]) / stride
    (boxes, scores), = decode_predictions(logits, offsets, stride=stride,
                                          score_thresh=0.5, image_size=64)
    assert len(scores) == 1
    np.testing.assert_allclose(boxes[0], box, atol=1e-5)


def test_decode_clips_and_clamps():
    logits = np.full((1, 1, 4, 4), -12.0, dtype=np.float32)
    offsets = np.zeros((1, 4, 4, 4), dtype=np.float32)
    logits[0, 0, 0, 0] = 5.0
    offsets[0, 2, 0, 0] = -3.0        # negative width clamps to zero
    offsets[0, 3, 0, 0] = 100.0       # enormous height clips to the image
    (boxes, scores), = decode_predictions(logits, offsets, stride=4,
                                          score_thresh=0.1, image_size=16)
    assert boxes[0, 0] == boxes[0, 2]             # zero width
    assert boxes[0, 1] == 0.0 and boxes[0, 3] == 16.0


def test_decode_pre_topk_prefers_score_then_position():
    logits = np.zeros((1, 1, 8, 8), dtype=np.float32)   # every score 0.5
    offsets = np.zeros((1, 4, 8, 8), dtype=np.float32)
    offsets[0, 2:] = 0.1
    (boxes, scores), = decode_predictions(logits, offsets, stride=4,
                                          score_thresh=0.1, nms_iou=1.1,
                                          max_dets=1000, pre_topk=5)
    assert len(scores) == 5
    # ties broken by row then column: cells (0,0)..(0,4)
    cx = boxes[:, 0] + (boxes[:, 2] - boxes[:, 0]) / 2
    np.testing.assert_allclose(cx, (np.arange(5) + 0.5) * 4, atol=1e-5)


def test_decode_empty_below_threshold():
    logits = np.full((1, 1, 4, 4), -9.0, dtype=np.float32)
    offsets = np.zeros((1, 4, 4, 4), dtype=np.float32)
    (boxes, scores), = decode_predictions(logits, offsets, score_thresh=0.05)
    assert boxes.shape == (0, 4) and scores.shape == (0,)


def test_nms_matches_brute_force():
    rng = RngStream(14)
    for trial in range(200):
        n = int(rng.integers(0, 6))
        if n == 0:
            assert len(nms(np.zeros((0, 4)), np.zeros(0), 0.5)) == 0
            continue
        xy = rng.uniform((n, 2), 0, 20)
        wh = rng.uniform((n, 2), 1, 12)
        boxes = np.concatenate([xy, xy + wh], axis=1)
        scores = np.round(rng.uniform((n,)), 2)   # force score ties
        got = nms(boxes, scores, 0.5)
        want = nms_brute(boxes, scores, 0.5)
        assert list(got) == list(want), trial


def test_nms_strictly_greater_than_threshold():
    # IoU exactly at the threshold keeps both boxes
    boxes = np.array([[0.0, 0.0, 10.0, 10.0], [0.0, 5.0, 10.0, 15.0]])
    scores = np.array([0.9, 0.8])
    iou = box_iou(boxes[0], boxes[1])
    kept = nms(boxes, scores, iou_thresh=iou)
    assert len(kept) == 2
    kept = nms(boxes, scores, iou_thresh=iou - 1e-9)
    assert len(kept) == 1


def test_nms_max_keep_stops_early():
    boxes = np.array([[i * 20.0, 0.0, i * 20.0 + 10.0, 10.0] for i in range(6)])
    scores = np.linspace(0.9, 0.4, 6)
    kept = nms(boxes, scores, 0.5, max_keep=3)
    assert list(kept) == [0, 1, 2]


def test_box_iou_matches_oracle():
    rng = RngStream(15)
    for _ in range(200):
        a = np.sort(rng.uniform((4,), 0, 30).reshape(2, 2), axis=0).T.reshape(-1)[[0, 2, 1, 3]]
        b = np.sort(rng.uniform((4,), 0, 30).reshape(2, 2), axis=0).T.reshape(-1)[[0, 2, 1, 3]]
        a = np.array([min(a[0], a[2]), min(a[1], a[3]), max(a[0], a[2]), max(a[1], a[3])])
        b = np.array([min(b[0], b[2]), min(b[1], b[3]), max(b[0], b[2]), max(b[1], b[3])])
        assert abs(box_iou(a, b) - iou_xyxy(a, b)) < 1e-12

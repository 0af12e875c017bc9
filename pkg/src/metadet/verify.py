"""Self-contained property battery: no dataset, no training, seconds.

``run_battery`` walks an enumerated list of checks over a set of live
components (autodiff engine, conv backends, metadata codec, modulator,
edge enhancer, serializer, optimizer) and prints one verdict line per
check. Components are injectable: callers hand in replacements, and a
corrupted component must turn the matching check red. That keeps the
battery falsifiable; a battery that cannot fail verifies nothing.
"""

from __future__ import annotations

import io
import math

import numpy as np

from .detector import box_iou, detection_loss, nms
from .edge import EdgeEnhancer, compose_kernel
from .errors import VerificationFailure, VocabularyError
from .evaluation import average_precision
from .metadata import MetadataEncoder, MetadataRecord, embed_resolution
from .modulation import FeatureModulator, build_spatial_kernels, kernel_tree_sum
from .nn import (RngStream, SGD, Tensor, grad_check, no_grad, ops,
                 available_backends, set_backend, read_tensor, tensor_bytes,
                 warmup_lr)
from .nn.tensor import Parameter


def default_components(seed: int = 0) -> dict:
    root = RngStream(seed)
    return {
        "edge": EdgeEnhancer(8, dtype=np.float64),
        "modulator": FeatureModulator(8, 16, root.split(1), dtype=np.float64),
        "codec": MetadataEncoder(root.split(2), dtype=np.float64),
        "rng": root,
    }


def _fail(msg: str):
    raise VerificationFailure(msg)


def _check_rng_streams(c):
    a = RngStream(5).split(2).normal((4,))
    b = RngStream(5).split(2).normal((4,))
    if not np.array_equal(a, b):
        _fail("identical (seed, path) streams diverged")
    sib = RngStream(5).split(3).normal((4,))
    if np.array_equal(a, sib):
        _fail("sibling streams produced identical draws")


def _check_conv_gradients(c):
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((2, 3, 6, 7)), requires_grad=True)
    w = Parameter(rng.standard_normal((4, 3, 3, 3)) * 0.3, "w")
    bias = Parameter(rng.standard_normal(4) * 0.1, "b")

    def f():
        y = ops.conv2d(x, w, bias, stride=2, padding=1)
        return ops.mean(ops.relu(y))

    res = grad_check(f, [x, w, bias], max_entries=40,
                     rng=np.random.default_rng(1))
    if not res["ok"]:
        _fail(f"conv gradient mismatch, max rel err {res['max_rel_err']:.2e}")


def _check_backend_agreement(c):
    if "cython" not in available_backends():
        return  # fallback-only build: nothing to compare
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 5, 9, 8))
    w = rng.standard_normal((6, 5, 3, 3))
    from .nn import backend as bk
    try:
        set_backend("numpy")
        a = bk.conv2d_forward(x, w, 2, 2, 1, 1, 1)
        set_backend("cython")
        b = bk.conv2d_forward(x, w, 2, 2, 1, 1, 1)
    finally:
        set_backend("auto")
    err = float(np.abs(a - b).max())
    if err > 1e-12:
        _fail(f"conv backends disagree by {err:.2e}")


def _check_grouped_equals_loop(c):
    rng = RngStream(11)
    x = Tensor(rng.normal((1, 6, 10, 10)))
    k = Tensor(rng.normal((12, 1, 3, 3)))
    with no_grad():
        grouped = ops.conv2d(x, k, stride=1, padding=1, groups=6).data
        parts = [ops.conv2d(Tensor(x.data[:, i:i + 1]),
                            Tensor(k.data[2 * i:2 * i + 2]),
                            stride=1, padding=1).data for i in range(6)]
    if not np.array_equal(grouped, np.concatenate(parts, axis=1)):
        _fail("grouped convolution differs bitwise from per-group loop")


def _check_codec_batch_invariance(c):
    codec = c["codec"]
    codec.eval()
    records = [MetadataRecord("land", "LWIR", 96, 128),
               MetadataRecord("space", "NIR", 256, 192),
               MetadataRecord("air", "LWIR", 160, 160)]
    with no_grad():
        batch = codec(records).data
        singles = np.concatenate([codec([r]).data for r in records])
    if not np.array_equal(batch, singles):
        _fail("metadata encoding depends on batch composition")


def _check_codec_masking(c):
    codec = c["codec"]
    codec.eval()
    rec = [MetadataRecord("space", "SWIR", 128, 128)]
    with no_grad():
        parts = codec.component_tensors(rec, mask=("band",))
    if float(np.abs(parts[2].data).max()) != 0.0:
        _fail("masked band component is not exactly zero")
    try:
        codec.component_tensors(rec, mask=("wavelength",))
    except VocabularyError:
        pass
    else:
        _fail("unknown mask name was accepted")


def _check_resolution_embedding(c):
    e = embed_resolution(6000, 6000)
    want = [math.sin(1.0)] * 3 + [math.cos(1.0)] * 3
    if not np.allclose(e, want, rtol=0, atol=1e-15):
        _fail(f"resolution embedding at (sigma, sigma) is {e}, want {want}")


def _check_spatial_kernels_zero_sum(c):
    mod = c["modulator"]
    rng = RngStream(21)
    x = Tensor(rng.normal((3, 8, 12, 12)))
    a = Tensor(rng.normal((3, 16)))
    with no_grad():
        _, sm = mod.modulation_params(x, a)
        if sm is None:
            _fail("modulator produced no spatial parameters")
        k1, k2 = build_spatial_kernels(sm)
        for k in (k1, k2):
            s = kernel_tree_sum(k.data)
            if float(np.abs(s).max()) != 0.0:
                _fail("generated spatial kernel sum is not exactly zero")
            corners = k.data[:, :, [0, 0, 2, 2], [0, 2, 0, 2]]
            if float(np.abs(corners).max()) != 0.0:
                _fail("generated spatial kernel corners are not zero")


def _check_edge_taps_zero_sum(c):
    edge = c["edge"]
    for name, p in (("vertical", edge.w_v), ("horizontal", edge.w_h)):
        taps = p.data
        total = (taps[:, 0] + taps[:, 2]) + taps[:, 1]
        if float(np.abs(total).max()) != 0.0:
            _fail(f"{name} edge taps do not sum exactly to zero: "
                  f"{taps[np.abs(total).argmax()].tolist()}")


def _check_edge_composed_kernel(c):
    edge = c["edge"]
    k = compose_kernel(edge.w_v.data, edge.w_h.data)
    ref = np.array([[1, -2, 1], [-2, 4, -2], [1, -2, 1]], dtype=float) / 16.0
    if not np.array_equal(k[0], ref):
        _fail("composed second-difference kernel differs from closed form")
    frob = float(np.sqrt((k[0] ** 2).sum()))
    if abs(frob - 0.375) > 1e-15:
        _fail(f"composed kernel Frobenius norm {frob}, want 0.375")


def _check_edge_constant_passthrough(c):
    edge = c["edge"]
    x = Tensor(np.full((2, 8, 9, 9), 0.37))
    with no_grad():
        y = edge(x).data
    if not np.array_equal(y, x.data):
        _fail("edge enhancer altered a constant image")


def _check_modulator_neutral_fuse(c):
    mod = c["modulator"]
    rng = RngStream(33)
    x = Tensor(rng.normal((2, 8, 10, 10)))
    a = Tensor(rng.normal((2, 16)))
    with no_grad():
        y = mod(x, a).data
    if not np.all(np.isfinite(y)):
        _fail("modulator produced non-finite values")
    if y.shape != x.data.shape:
        _fail(f"modulator changed the feature shape to {y.shape}")


def _check_serialization_roundtrip(c):
    arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4) * 0.5
    buf = tensor_bytes(arr)
    back, _ = read_tensor(buf, 0)
    if not np.array_equal(arr, back):
        _fail("tensor record roundtrip is not bitwise")
    try:
        read_tensor(b"BAD!" + buf[4:], 0)
    except Exception as e:
        if "offset" not in str(e):
            _fail("corrupt record error does not name the byte offset")
    else:
        _fail("corrupt magic was accepted")


def _check_sgd_recurrence(c):
    p = Parameter(np.array([1.0, -2.0]), "p")
    opt = SGD([p], lr=0.1, momentum=0.9)
    v = np.zeros(2)
    ref = p.data.copy()
    for step in range(4):
        g = np.array([0.5, -1.0]) * (step + 1)
        p.grad = g.copy()
        opt.step()
        v = 0.9 * v + g
        ref = ref - 0.1 * v
    if not np.array_equal(p.data, ref):
        _fail("momentum update differs from the hand recurrence")


def _check_warmup_schedule(c):
    lrs = [warmup_lr(i, 100, 0.4, warmup_frac=0.05) for i in range(8)]
    if abs(lrs[0] - 0.08) > 1e-15 or abs(lrs[4] - 0.4) > 1e-15:
        _fail(f"warmup ramp wrong: {lrs[:6]}")
    if any(b < a for a, b in zip(lrs, lrs[1:])):
        _fail("warmup learning rate is not monotone")


def _check_zero_init_loss(c):
    logits = Tensor(np.zeros((2, 1, 4, 4)))
    offsets = Tensor(np.zeros((2, 4, 4, 4)))
    loss, parts = detection_loss(logits, offsets,
                                 [np.array([[2.0, 2.0, 6.0, 6.0]]),
                                  np.zeros((0, 4))])
    if abs(parts["objectness"] - math.log(2.0)) > 1e-12:
        _fail(f"zero-logit objectness loss is {parts['objectness']}, "
              f"want ln 2")


def _check_nms_rules(c):
    boxes = np.array([[0, 0, 10, 10], [1, 1, 11, 11], [40, 40, 50, 50],
                      [0, 20, 10, 30]], dtype=float)
    scores = np.array([0.9, 0.8, 0.9, 0.9])
    kept = nms(boxes, scores, iou_thresh=0.5)
    if list(kept) != [0, 3, 2]:  # ties broken by (y, x); 1 suppressed by 0
        _fail(f"NMS order/suppression wrong: kept {list(kept)}")
    just_at = box_iou(boxes[0], boxes[1])
    kept2 = nms(boxes[:2], scores[:2], iou_thresh=just_at)
    if len(kept2) != 2:
        _fail("NMS suppressed at IoU equal to the threshold (must be strict)")


def _check_average_precision(c):
    # one GT matched by the 2nd-ranked of three detections
    tp = np.array([False, True, False])
    ap = average_precision(tp, n_gt=1)
    if abs(ap - 0.5) > 1e-15:
        _fail(f"AP of the toy ranking is {ap}, want 0.5")


CHECKS = [
    ("rng streams are reproducible and independent", _check_rng_streams),
    ("conv gradients match finite differences", _check_conv_gradients),
    ("conv backends agree numerically", _check_backend_agreement),
    ("grouped conv equals per-group loop bitwise", _check_grouped_equals_loop),
    ("metadata encoding is batch invariant", _check_codec_batch_invariance),
    ("metadata masking zeroes exactly and validates names", _check_codec_masking),
    ("resolution embedding matches closed form", _check_resolution_embedding),
    ("generated spatial kernels: zero sum, zero corners", _check_spatial_kernels_zero_sum),
    ("edge taps sum exactly to zero", _check_edge_taps_zero_sum),
    ("composed edge kernel matches closed form", _check_edge_composed_kernel),
    ("edge enhancer passes constants through untouched", _check_edge_constant_passthrough),
    ("modulator preserves shape and finiteness", _check_modulator_neutral_fuse),
    ("tensor records roundtrip bitwise, errors name offsets", _check_serialization_roundtrip),
    ("momentum update matches the hand recurrence", _check_sgd_recurrence),
    ("warmup schedule ramps linearly to the base rate", _check_warmup_schedule),
    ("zero-logit objectness loss equals ln 2", _check_zero_init_loss),
    ("NMS ordering, tie-breaks and strict threshold", _check_nms_rules),
    ("average precision on a known ranking", _check_average_precision),
]


def run_battery(components: dict | None = None, out=None) -> tuple[int, int, list]:
    """Run every check; returns (n_passed, n_failed, results).

    ``components`` replaces any of the default subjects (see
    ``default_components``), letting a caller verify that a corrupted
    component actually fails its check. ``out`` is a print-like callable.
    """
    subjects = default_components()
    if components:
        subjects.update(components)
    results = []
    width = len(str(len(CHECKS)))
    for i, (name, fn) in enumerate(CHECKS, 1):
        try:
            fn(subjects)
            ok, detail = True, ""
        except VerificationFailure as e:
            ok, detail = False, str(e)
        except Exception as e:  # a crash is a failure with its own story
            ok, detail = False, f"{type(e).__name__}: {e}"
        results.append((i, name, ok, detail))
        if out:
            mark = "ok" if ok else f"FAIL  {detail}"
            out(f"[{i:>{width}}/{len(CHECKS)}] {name} ... {mark}")
    n_fail = sum(1 for r in results if not r[2])
    if out:
        out(f"{len(CHECKS) - n_fail}/{len(CHECKS)} properties hold")
    return len(CHECKS) - n_fail, n_fail, results


def battery_report(components: dict | None = None) -> tuple[int, int, str]:
    """run_battery with the printout captured as a string."""
    buf = io.StringIO()
    n_ok, n_fail, _ = run_battery(components, out=lambda s: buf.write(s + "\n"))
    return n_ok, n_fail, buf.getvalue()

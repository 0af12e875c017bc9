"""Differentiable operations on Tensors.

Only the operations the modulation stack actually needs. Every op returns a
fresh Tensor; inputs are never written. Binary ops follow numpy broadcasting
and reduce gradients back to the operand shapes.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import backend
from .tensor import Tensor

__all__ = [
    "add", "sub", "mul", "div", "neg", "matmul", "bmm", "linear",
    "conv2d", "dwconv_v", "dwconv_h", "relu", "sigmoid", "sqrt", "abs_",
    "take_rows", "concat", "narrow", "reshape", "mean", "sum_all", "upsample2x",
    "global_avg_pool", "global_max_pool", "channel_avg", "channel_max",
    "pool", "bce_with_logits", "dropout", "constant",
]


def constant(value, dtype) -> Tensor:
    return Tensor(np.asarray(value, dtype=dtype))


def _as_tensor(v, dtype) -> Tensor:
    if isinstance(v, Tensor):
        return v
    return Tensor(np.asarray(v, dtype=dtype))


def _check_dtypes(a: Tensor, b: Tensor, op: str):
    if a.data.dtype != b.data.dtype:
        raise ShapeError(f"{op}: dtype mismatch {a.data.dtype} vs {b.data.dtype}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic --------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", np.float64))
    b = _as_tensor(b, a.dtype)
    _check_dtypes(a, b, "add")
    out_data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor._make(out_data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", np.float64))
    b = _as_tensor(b, a.dtype)
    _check_dtypes(a, b, "sub")
    out_data = a.data - b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return Tensor._make(out_data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", np.float64))
    b = _as_tensor(b, a.dtype)
    _check_dtypes(a, b, "mul")
    ad, bd = a.data, b.data
    out_data = ad * bd

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * bd, ad.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * ad, bd.shape))

    return Tensor._make(out_data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", np.float64))
    b = _as_tensor(b, a.dtype)
    _check_dtypes(a, b, "div")
    ad, bd = a.data, b.data
    out_data = ad / bd

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / bd, ad.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * ad / (bd * bd), bd.shape))

    return Tensor._make(out_data, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    def bw(g):
        if a.requires_grad:
            a._accumulate(-g)

    return Tensor._make(-a.data, (a,), bw, "neg")


# -- linear algebra -----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes(a, b, "matmul")
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out_data = ad @ bd

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ bd.T)
        if b.requires_grad:
            b._accumulate(ad.T @ g)

    return Tensor._make(out_data, (a, b), bw, "matmul")


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: (B,M,K) @ (B,K,N) -> (B,M,N)."""
    _check_dtypes(a, b, "bmm")
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out_data = ad @ bd

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ bd.transpose(0, 2, 1))
        if b.requires_grad:
            b._accumulate(ad.transpose(0, 2, 1) @ g)

    return Tensor._make(out_data, (a, b), bw, "bmm")


def take_rows(w: Tensor, idx) -> Tensor:
    """Select rows of a (V, D) table by integer index: one-hot @ w without
    the arithmetic, so results are exact and batch-size independent."""
    idx = np.asarray(idx, dtype=np.int64)
    if w.ndim != 2 or idx.ndim != 1:
        raise ShapeError(f"take_rows: expected (V,D) table and 1D index, got {w.shape}, {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= w.shape[0]):
        raise ShapeError(f"take_rows: index out of range for table with {w.shape[0]} rows")
    out_data = w.data[idx].copy()

    def bw(g):
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            np.add.at(gw, idx, g)
            w._accumulate(gw)

    return Tensor._make(out_data, (w,), bw, "take_rows")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None, exact_rows: bool = False) -> Tensor:
    """x (B,K) @ w (K,N) + b (N,).

    exact_rows computes each output row with a batch-size-independent
    reduction, so encoding a batch is bitwise identical to stacking
    per-sample encodings. Used by the metadata paths; heavier compute
    stays on the BLAS route.
    """
    _check_dtypes(x, w, "linear")
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} @ {w.shape}")
    xd, wd = x.data, w.data
    if exact_rows:
        out_data = (xd[:, :, None] * wd[None, :, :]).sum(axis=1)
    else:
        out_data = xd @ wd

    def bw(g):
        if x.requires_grad:
            x._accumulate(g @ wd.T)
        if w.requires_grad:
            w._accumulate(xd.T @ g)

    out = Tensor._make(out_data, (x, w), bw, "linear")
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeError(f"linear bias shape {b.shape} != ({w.shape[1]},)")
        out = add(out, b)
    return out


# -- convolution --------------------------------------------------------------

def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None,
           stride=1, padding=0, groups: int = 1) -> Tensor:
    """Cross-correlation (no kernel flip) with zero padding.

    x: (B, Cin, H, W); w: (Cout, Cin/groups, kh, kw); padding may be "same"
    (odd kernels, stride 1 only).
    """
    _check_dtypes(x, w, "conv2d")
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects 4D input and kernel")
    B, Cin, H, W = x.shape
    Cout, cpg, kh, kw = w.shape
    sh, sw = _pair(stride)
    if sh < 1 or sw < 1:
        raise ShapeError(f"conv2d: stride must be positive, got {(sh, sw)}")
    if padding == "same":
        if sh != 1 or sw != 1:
            raise ShapeError("conv2d: padding='same' requires stride 1")
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("conv2d: padding='same' requires odd kernel extents")
        ph, pw = kh // 2, kw // 2
    else:
        ph, pw = _pair(padding)
    if groups < 1 or Cin % groups or Cout % groups:
        raise ShapeError(f"conv2d: groups={groups} must divide Cin={Cin} and Cout={Cout}")
    if cpg != Cin // groups:
        raise ShapeError(f"conv2d: kernel expects {cpg} channels/group, input has {Cin // groups}")
    if H + 2 * ph < kh or W + 2 * pw < kw:
        raise ShapeError("conv2d: kernel larger than padded input")

    xd, wd = x.data, w.data
    out_data = backend.conv2d_forward(xd, wd, sh, sw, ph, pw, groups)

    def bw(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            x._accumulate(backend.conv2d_backward_input(g, wd, H, W, sh, sw, ph, pw, groups))
        if w.requires_grad:
            w._accumulate(backend.conv2d_backward_kernel(g, xd, kh, kw, sh, sw, ph, pw, groups))

    out = Tensor._make(out_data, (x, w), bw, "conv2d")
    if bias is not None:
        if bias.shape != (Cout,):
            raise ShapeError(f"conv2d bias shape {bias.shape} != ({Cout},)")
        out = add(out, reshape(bias, (Cout, 1, 1)))
    return out


def dwconv_v(x: Tensor, taps: Tensor) -> Tensor:
    """Depthwise 3-tap convolution along H with zero 'same' padding.

    taps: (C, 3), one filter per channel, no cross-channel mixing.
    """
    _check_dtypes(x, taps, "dwconv_v")
    B, C, H, W = x.shape
    if taps.shape != (C, 3):
        raise ShapeError(f"dwconv_v: taps shape {taps.shape} != ({C}, 3)")
    xd, td = x.data, taps.data
    xp = np.pad(xd, ((0, 0), (0, 0), (1, 1), (0, 0)))
    t = td[None, :, :, None, None]
    out_data = (t[:, :, 0] * xp[:, :, 0:H] + t[:, :, 1] * xp[:, :, 1:H + 1]
                + t[:, :, 2] * xp[:, :, 2:H + 2])

    def bw(g):
        if x.requires_grad:
            gp = np.pad(g, ((0, 0), (0, 0), (1, 1), (0, 0)))
            gx = (t[:, :, 0] * gp[:, :, 2:H + 2] + t[:, :, 1] * gp[:, :, 1:H + 1]
                  + t[:, :, 2] * gp[:, :, 0:H])
            x._accumulate(gx)
        if taps.requires_grad:
            gt = np.stack([(g * xp[:, :, k:k + H]).sum(axis=(0, 2, 3)) for k in range(3)], axis=1)
            taps._accumulate(gt)

    return Tensor._make(out_data, (x, taps), bw, "dwconv_v")


def dwconv_h(x: Tensor, taps: Tensor) -> Tensor:
    """Depthwise 3-tap convolution along W with zero 'same' padding."""
    _check_dtypes(x, taps, "dwconv_h")
    B, C, H, W = x.shape
    if taps.shape != (C, 3):
        raise ShapeError(f"dwconv_h: taps shape {taps.shape} != ({C}, 3)")
    xd, td = x.data, taps.data
    xp = np.pad(xd, ((0, 0), (0, 0), (0, 0), (1, 1)))
    t = td[None, :, :, None, None]
    out_data = (t[:, :, 0] * xp[:, :, :, 0:W] + t[:, :, 1] * xp[:, :, :, 1:W + 1]
                + t[:, :, 2] * xp[:, :, :, 2:W + 2])

    def bw(g):
        if x.requires_grad:
            gp = np.pad(g, ((0, 0), (0, 0), (0, 0), (1, 1)))
            gx = (t[:, :, 0] * gp[:, :, :, 2:W + 2] + t[:, :, 1] * gp[:, :, :, 1:W + 1]
                  + t[:, :, 2] * gp[:, :, :, 0:W])
            x._accumulate(gx)
        if taps.requires_grad:
            gt = np.stack([(g * xp[:, :, :, k:k + W]).sum(axis=(0, 2, 3)) for k in range(3)], axis=1)
            taps._accumulate(gt)

    return Tensor._make(out_data, (x, taps), bw, "dwconv_h")


# -- nonlinearities ------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out_data = np.where(mask, x.data, x.data.dtype.type(0))

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor._make(out_data, (x,), bw, "relu")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form is stable for large |z|
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * y * (1.0 - y))

    return Tensor._make(y, (x,), bw, "sigmoid")


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * (0.5 / y))

    return Tensor._make(y, (x,), bw, "sqrt")


def abs_(x: Tensor) -> Tensor:
    s = np.sign(x.data)
    out_data = np.abs(x.data)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * s)

    return Tensor._make(out_data, (x,), bw, "abs")


# -- shape manipulation ---------------------------------------------------------

def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise ShapeError("concat of empty list")
    for t in tensors[1:]:
        _check_dtypes(tensors[0], t, "concat")
    datas = [t.data for t in tensors]
    out_data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]

    def bw(g):
        start = 0
        for t, n in zip(tensors, sizes):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(start, start + n)
                t._accumulate(g[tuple(idx)])
            start += n

    return Tensor._make(out_data, tuple(tensors), bw, "concat")


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out_data = x.data[idx].copy()

    def bw(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[idx] = g
            x._accumulate(gx)

    return Tensor._make(out_data, (x,), bw, "narrow")


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    return Tensor._make(out_data, (x,), bw, "reshape")


# -- reductions -----------------------------------------------------------------

def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = x.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for a in axes:
            count *= x.data.shape[a]

    def bw(g):
        if x.requires_grad:
            if axis is not None and not keepdims:
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                g = np.expand_dims(g, axes)
            x._accumulate(np.broadcast_to(g / count, x.data.shape).astype(x.data.dtype, copy=False))

    return Tensor._make(out_data, (x,), bw, "mean")


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum())

    def bw(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False))

    return Tensor._make(out_data, (x,), bw, "sum")


# -- resampling and pooling -------------------------------------------------------

def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour doubling of H and W."""
    B, C, H, W = x.shape
    out_data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)))

    return Tensor._make(out_data, (x,), bw, "upsample2x")


def global_avg_pool(x: Tensor) -> Tensor:
    """(B,C,H,W) -> (B,C), average over all spatial positions."""
    B, C, H, W = x.shape
    out_data = x.data.mean(axis=(2, 3))

    def bw(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to((g / (H * W))[:, :, None, None], x.data.shape)
                          .astype(x.data.dtype, copy=False))

    return Tensor._make(out_data, (x,), bw, "global_avg_pool")


def global_max_pool(x: Tensor) -> Tensor:
    """(B,C,H,W) -> (B,C); ties resolve to the first flat index."""
    B, C, H, W = x.shape
    flat = x.data.reshape(B, C, H * W)
    idx = flat.argmax(axis=2)
    out_data = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]

    def bw(g):
        if x.requires_grad:
            gx = np.zeros_like(flat)
            np.put_along_axis(gx, idx[:, :, None], g[:, :, None], axis=2)
            x._accumulate(gx.reshape(x.data.shape))

    return Tensor._make(out_data, (x,), bw, "global_max_pool")


def channel_avg(x: Tensor) -> Tensor:
    """(B,C,H,W) -> (B,1,H,W), mean over channels."""
    C = x.shape[1]
    out_data = x.data.mean(axis=1, keepdims=True)

    def bw(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g / C, x.data.shape).astype(x.data.dtype, copy=False))

    return Tensor._make(out_data, (x,), bw, "channel_avg")


def channel_max(x: Tensor) -> Tensor:
    """(B,C,H,W) -> (B,1,H,W); ties resolve to the lowest channel."""
    idx = x.data.argmax(axis=1, keepdims=True)
    out_data = np.take_along_axis(x.data, idx, axis=1)

    def bw(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, idx, g, axis=1)
            x._accumulate(gx)

    return Tensor._make(out_data, (x,), bw, "channel_max")


def pool(x: Tensor, mode: str, axis: str) -> Tensor:
    """Dispatch: mode in {avg, max}, axis in {spatial-global, channel}."""
    table = {
        ("avg", "spatial-global"): global_avg_pool,
        ("max", "spatial-global"): global_max_pool,
        ("avg", "channel"): channel_avg,
        ("max", "channel"): channel_max,
    }
    try:
        return table[(mode, axis)](x)
    except KeyError:
        raise ShapeError(f"pool: unknown mode/axis {(mode, axis)!r}") from None


# -- losses and regularization ------------------------------------------------------

def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Elementwise binary cross entropy on logits. Targets carry no grad."""
    z = logits.data
    t = np.asarray(targets, dtype=z.dtype)
    if t.shape != z.shape:
        raise ShapeError(f"bce_with_logits: target shape {t.shape} != {z.shape}")
    out_data = np.logaddexp(0.0, z) - z * t

    def bw(g):
        if logits.requires_grad:
            logits._accumulate(g * (_sigmoid(z) - t))

    return Tensor._make(out_data, (logits,), bw, "bce_with_logits")


def dropout(x: Tensor, p: float, rng, training: bool) -> Tensor:
    """Inverted dropout; the mask comes from the caller's RngStream."""
    if not training or p <= 0.0:
        return x
    keep = (rng.uniform(x.shape) >= p).astype(x.data.dtype)
    scale = x.data.dtype.type(1.0 / (1.0 - p))
    return mul(x, Tensor(keep * scale))


# Operator sugar on Tensor.
Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = lambda self, other: div(self, other)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)

"""Pure numpy convolution kernels (fallback backend).

Grouped convolutions are computed by slicing each group through one shared
single-group routine, so a grouped call and a loop of per-sample ungrouped
calls perform identical float operations in identical order. The batch is
kept as the leading matmul dimension (one GEMM per sample), which keeps
results bitwise independent of batch size and ordering.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _fwd_group(xg: np.ndarray, wg: np.ndarray, sh, sw, ph, pw) -> np.ndarray:
    B, ci, H, W = xg.shape
    co, _, kh, kw = wg.shape
    xp = np.pad(xg, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    Ho, Wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B, Ho * Wo, ci * kh * kw)
    out = cols @ wg.reshape(co, -1).T
    return out.transpose(0, 2, 1).reshape(B, co, Ho, Wo)


def conv2d_forward(x, w, sh, sw, ph, pw, groups):
    if groups == 1:
        return _fwd_group(x, w, sh, sw, ph, pw)
    B, Cin, H, W = x.shape
    Cout = w.shape[0]
    cpg, cog = Cin // groups, Cout // groups
    Ho = (H + 2 * ph - w.shape[2]) // sh + 1
    Wo = (W + 2 * pw - w.shape[3]) // sw + 1
    out = np.empty((B, Cout, Ho, Wo), dtype=x.dtype)
    for g in range(groups):
        out[:, g * cog:(g + 1) * cog] = _fwd_group(
            x[:, g * cpg:(g + 1) * cpg], w[g * cog:(g + 1) * cog], sh, sw, ph, pw)
    return out


def _bwd_input_group(g, wg, H, W, sh, sw, ph, pw):
    B, co, Ho, Wo = g.shape
    _, ci, kh, kw = wg.shape
    gxp = np.zeros((B, ci, H + 2 * ph, W + 2 * pw), dtype=g.dtype)
    for u in range(kh):
        for v in range(kw):
            # tap (u, v) of every filter scatters g back onto a strided grid
            tmp = np.tensordot(g, wg[:, :, u, v], axes=([1], [0]))
            gxp[:, :, u:u + sh * Ho:sh, v:v + sw * Wo:sw] += tmp.transpose(0, 3, 1, 2)
    return gxp[:, :, ph:ph + H, pw:pw + W]


def conv2d_backward_input(g, w, H, W, sh, sw, ph, pw, groups):
    if groups == 1:
        return _bwd_input_group(g, w, H, W, sh, sw, ph, pw)
    B = g.shape[0]
    Cout, cpg = w.shape[0], w.shape[1]
    cog = Cout // groups
    gx = np.empty((B, cpg * groups, H, W), dtype=g.dtype)
    for gr in range(groups):
        gx[:, gr * cpg:(gr + 1) * cpg] = _bwd_input_group(
            g[:, gr * cog:(gr + 1) * cog], w[gr * cog:(gr + 1) * cog], H, W, sh, sw, ph, pw)
    return gx


def _bwd_kernel_group(g, xg, kh, kw, sh, sw, ph, pw):
    xp = np.pad(xg, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    return np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))


def conv2d_backward_kernel(g, x, kh, kw, sh, sw, ph, pw, groups):
    if groups == 1:
        return _bwd_kernel_group(g, x, kh, kw, sh, sw, ph, pw)
    Cin = x.shape[1]
    Cout = g.shape[1]
    cpg, cog = Cin // groups, Cout // groups
    gw = np.empty((Cout, cpg, kh, kw), dtype=g.dtype)
    for gr in range(groups):
        gw[gr * cog:(gr + 1) * cog] = _bwd_kernel_group(
            g[:, gr * cog:(gr + 1) * cog], x[:, gr * cpg:(gr + 1) * cpg],
            kh, kw, sh, sw, ph, pw)
    return gw

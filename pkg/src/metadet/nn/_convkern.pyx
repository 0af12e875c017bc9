# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled direct convolution kernels.

Same contract as kernels_numpy: cross-correlation, zero padding, grouped
channels. Loops are arranged tap-outermost so the innermost loop runs
along contiguous output columns (a saxpy per kernel tap), which compilers
vectorise well. Each routine accumulates every output element in one fixed
order, independent of batch size and identical for grouped and ungrouped
calls, so grouped results match a per-sample loop bitwise:

  forward          per out[b,co,i,j]: (ci, u, v) ascending
  backward_input   per gx[b,ci,hi,wj]: (co, u, v, i, j) ascending
  backward_kernel  per gw[co,ci,u,v]:  (b, i, j) ascending
"""

import numpy as np

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _ceil_div(Py_ssize_t a, Py_ssize_t s) nogil:
    # ceil(a / s) for s > 0 and any sign of a
    if a > 0:
        return (a + s - 1) // s
    return -((-a) // s)


cdef inline void _tap_range(Py_ssize_t pad, Py_ssize_t tap, Py_ssize_t stride,
                            Py_ssize_t in_extent, Py_ssize_t out_extent,
                            Py_ssize_t *lo, Py_ssize_t *hi) nogil:
    """Output index range [lo, hi) for which stride*idx - pad + tap is in
    [0, in_extent)."""
    cdef Py_ssize_t l = _ceil_div(pad - tap, stride)
    cdef Py_ssize_t h = _ceil_div(in_extent + pad - tap, stride)
    if l < 0:
        l = 0
    if h > out_extent:
        h = out_extent
    lo[0] = l
    hi[0] = h if h > l else l


def conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                   int sh, int sw, int ph, int pw, int groups):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Cout = w.shape[0], cpg = w.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t Wo = (W + 2 * pw - kw) // sw + 1
    cdef Py_ssize_t cog = Cout // groups
    out_np = np.zeros((B, Cout, Ho, Wo), dtype=np.asarray(x).dtype)
    cdef real[:, :, :, ::1] out = out_np
    cdef Py_ssize_t b, co, ci, i, j, u, v, hi, cbase
    cdef Py_ssize_t ilo, ihi, jlo, jhi, joff
    cdef real wv
    with nogil:
        for b in range(B):
            for co in range(Cout):
                cbase = (co // cog) * cpg
                for ci in range(cpg):
                    for u in range(kh):
                        _tap_range(ph, u, sh, H, Ho, &ilo, &ihi)
                        for v in range(kw):
                            _tap_range(pw, v, sw, W, Wo, &jlo, &jhi)
                            wv = w[co, ci, u, v]
                            joff = v - pw
                            for i in range(ilo, ihi):
                                hi = i * sh - ph + u
                                if sw == 1:
                                    for j in range(jlo, jhi):
                                        out[b, co, i, j] = out[b, co, i, j] + wv * x[b, cbase + ci, hi, j + joff]
                                else:
                                    for j in range(jlo, jhi):
                                        out[b, co, i, j] = out[b, co, i, j] + wv * x[b, cbase + ci, hi, j * sw + joff]
    return out_np


def conv2d_backward_input(real[:, :, :, ::1] g, real[:, :, :, ::1] w,
                          int H, int W, int sh, int sw, int ph, int pw, int groups):
    cdef Py_ssize_t B = g.shape[0], Cout = g.shape[1]
    cdef Py_ssize_t Ho = g.shape[2], Wo = g.shape[3]
    cdef Py_ssize_t cpg = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t cog = Cout // groups
    gx_np = np.zeros((B, cpg * groups, H, W), dtype=np.asarray(g).dtype)
    cdef real[:, :, :, ::1] gx = gx_np
    cdef Py_ssize_t b, co, ci, i, j, u, v, hi, cbase
    cdef Py_ssize_t ilo, ihi, jlo, jhi, joff
    cdef real wv
    with nogil:
        for b in range(B):
            for co in range(Cout):
                cbase = (co // cog) * cpg
                for ci in range(cpg):
                    for u in range(kh):
                        _tap_range(ph, u, sh, H, Ho, &ilo, &ihi)
                        for v in range(kw):
                            _tap_range(pw, v, sw, W, Wo, &jlo, &jhi)
                            wv = w[co, ci, u, v]
                            joff = v - pw
                            for i in range(ilo, ihi):
                                hi = i * sh - ph + u
                                if sw == 1:
                                    for j in range(jlo, jhi):
                                        gx[b, cbase + ci, hi, j + joff] = gx[b, cbase + ci, hi, j + joff] + wv * g[b, co, i, j]
                                else:
                                    for j in range(jlo, jhi):
                                        gx[b, cbase + ci, hi, j * sw + joff] = gx[b, cbase + ci, hi, j * sw + joff] + wv * g[b, co, i, j]
    return gx_np


def conv2d_backward_kernel(real[:, :, :, ::1] g, real[:, :, :, ::1] x,
                           int kh, int kw, int sh, int sw, int ph, int pw, int groups):
    cdef Py_ssize_t B = g.shape[0], Cout = g.shape[1]
    cdef Py_ssize_t Ho = g.shape[2], Wo = g.shape[3]
    cdef Py_ssize_t H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Cin = x.shape[1]
    cdef Py_ssize_t cpg = Cin // groups
    cdef Py_ssize_t cog = Cout // groups
    gw_np = np.zeros((Cout, cpg, kh, kw), dtype=np.asarray(g).dtype)
    cdef real[:, :, :, ::1] gw = gw_np
    cdef Py_ssize_t b, co, ci, i, j, u, v, hi, cbase
    cdef Py_ssize_t ilo, ihi, jlo, jhi, joff
    cdef real acc
    with nogil:
        for co in range(Cout):
            cbase = (co // cog) * cpg
            for ci in range(cpg):
                for u in range(kh):
                    _tap_range(ph, u, sh, H, Ho, &ilo, &ihi)
                    for v in range(kw):
                        _tap_range(pw, v, sw, W, Wo, &jlo, &jhi)
                        joff = v - pw
                        acc = 0
                        for b in range(B):
                            for i in range(ilo, ihi):
                                hi = i * sh - ph + u
                                if sw == 1:
                                    for j in range(jlo, jhi):
                                        acc = acc + g[b, co, i, j] * x[b, cbase + ci, hi, j + joff]
                                else:
                                    for j in range(jlo, jhi):
                                        acc = acc + g[b, co, i, j] * x[b, cbase + ci, hi, j * sw + joff]
                        gw[co, ci, u, v] = acc
    return gw_np

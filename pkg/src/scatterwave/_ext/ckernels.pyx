# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im for NCHW tensors.

Output-column ranges that read from inside the image are computed up front,
so the inner loops carry no bounds checks and stride-1 rows are plain
contiguous copies.
"""

import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy, memset

ctypedef fused real:
    float
    double

cnp.import_array()


cdef inline Py_ssize_t _out_size(Py_ssize_t n, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    return (n + 2 * pad - k) // stride + 1


cdef inline void _valid_range(Py_ssize_t off, Py_ssize_t n_in, Py_ssize_t n_out, Py_ssize_t stride,
                              Py_ssize_t* lo, Py_ssize_t* hi) noexcept nogil:
    # output indices o with 0 <= o*stride + off < n_in
    cdef Py_ssize_t a = 0, b
    if off < 0:
        a = (-off + stride - 1) // stride
    b = (n_in - 1 - off) // stride + 1 if n_in - 1 - off >= 0 else 0
    if b > n_out:
        b = n_out
    if a > b:
        a = b
    lo[0] = a
    hi[0] = b


cdef void _im2col(real* x, real* cols, Py_ssize_t N, Py_ssize_t C, Py_ssize_t H, Py_ssize_t W,
                  Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    cdef Py_ssize_t Ho = _out_size(H, k, stride, pad), Wo = _out_size(W, k, stride, pad)
    cdef Py_ssize_t P = Ho * Wo
    cdef Py_ssize_t n, c, kh, kw, oh, ow, ih, off_w, w_lo, w_hi, h_lo, h_hi
    cdef real* src
    cdef real* dst
    cdef real* row_ptr
    for n in range(N):
        for c in range(C):
            src = x + (n * C + c) * H * W
            for kh in range(k):
                _valid_range(kh - pad, H, Ho, stride, &h_lo, &h_hi)
                for kw in range(k):
                    off_w = kw - pad
                    _valid_range(off_w, W, Wo, stride, &w_lo, &w_hi)
                    row_ptr = cols + ((n * C + c) * k * k + kh * k + kw) * P
                    if h_lo > 0:
                        memset(row_ptr, 0, h_lo * Wo * sizeof(real))
                    if h_hi < Ho:
                        memset(row_ptr + h_hi * Wo, 0, (Ho - h_hi) * Wo * sizeof(real))
                    for oh in range(h_lo, h_hi):
                        ih = oh * stride - pad + kh
                        dst = row_ptr + oh * Wo
                        if w_lo > 0:
                            memset(dst, 0, w_lo * sizeof(real))
                        if w_hi < Wo:
                            memset(dst + w_hi, 0, (Wo - w_hi) * sizeof(real))
                        if stride == 1:
                            if w_hi > w_lo:
                                memcpy(dst + w_lo, src + ih * W + w_lo + off_w, (w_hi - w_lo) * sizeof(real))
                        else:
                            for ow in range(w_lo, w_hi):
                                dst[ow] = src[ih * W + ow * stride + off_w]


cdef void _col2im(real* cols, real* dx, Py_ssize_t N, Py_ssize_t C, Py_ssize_t H, Py_ssize_t W,
                  Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad) noexcept nogil:
    cdef Py_ssize_t Ho = _out_size(H, k, stride, pad), Wo = _out_size(W, k, stride, pad)
    cdef Py_ssize_t P = Ho * Wo
    cdef Py_ssize_t n, c, kh, kw, oh, ow, ih, off_w, w_lo, w_hi, h_lo, h_hi
    cdef real* dst
    cdef real* src
    cdef real* out_row
    for n in range(N):
        for c in range(C):
            dst = dx + (n * C + c) * H * W
            for kh in range(k):
                _valid_range(kh - pad, H, Ho, stride, &h_lo, &h_hi)
                for kw in range(k):
                    off_w = kw - pad
                    _valid_range(off_w, W, Wo, stride, &w_lo, &w_hi)
                    src = cols + ((n * C + c) * k * k + kh * k + kw) * P
                    for oh in range(h_lo, h_hi):
                        ih = oh * stride - pad + kh
                        out_row = dst + ih * W + off_w
                        if stride == 1:
                            for ow in range(w_lo, w_hi):
                                out_row[ow] += src[oh * Wo + ow]
                        else:
                            for ow in range(w_lo, w_hi):
                                out_row[ow * stride] += src[oh * Wo + ow]


def _as_real(a):
    if a.dtype != np.float32 and a.dtype != np.float64:
        a = a.astype(np.float64)
    return np.ascontiguousarray(a)


def im2col(x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    """``[N, C, H, W]`` -> ``[N, C*k*k, Ho*Wo]`` patches."""
    x = _as_real(x)
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = _out_size(H, k, stride, pad)
    cdef Py_ssize_t Wo = _out_size(W, k, stride, pad)
    cols = np.empty((N, C * k * k, Ho * Wo), dtype=x.dtype)
    cdef cnp.ndarray xa = x
    cdef cnp.ndarray ca = cols
    if x.dtype == np.float32:
        with nogil:
            _im2col(<float*> xa.data, <float*> ca.data, N, C, H, W, k, stride, pad)
    else:
        with nogil:
            _im2col(<double*> xa.data, <double*> ca.data, N, C, H, W, k, stride, pad)
    return cols


def col2im(cols, shape, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    """Scatter-add patches back onto a zero ``shape`` tensor (adjoint of im2col)."""
    cols = _as_real(cols)
    cdef Py_ssize_t N = shape[0], C = shape[1], H = shape[2], W = shape[3]
    dx = np.zeros((N, C, H, W), dtype=cols.dtype)
    cdef cnp.ndarray ca = cols
    cdef cnp.ndarray da = dx
    if cols.dtype == np.float32:
        with nogil:
            _col2im(<float*> ca.data, <float*> da.data, N, C, H, W, k, stride, pad)
    else:
        with nogil:
            _col2im(<double*> ca.data, <double*> da.data, N, C, H, W, k, stride, pad)
    return dx

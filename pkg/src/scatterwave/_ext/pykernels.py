"""Pure-numpy im2col / col2im; same contract as the compiled module."""

import numpy as np


def _out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def _as_real(a):
    a = np.asarray(a)
    if a.dtype != np.float32 and a.dtype != np.float64:
        a = a.astype(np.float64)
    return np.ascontiguousarray(a)


def im2col(x, k, stride, pad):
    x = _as_real(x)
    N, C, H, W = x.shape
    Ho, Wo = _out_size(H, k, stride, pad), _out_size(W, k, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    sN, sC, sH, sW = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (N, C, k, k, Ho, Wo), (sN, sC, sH, sW, sH * stride, sW * stride), writeable=False
    )
    return win.reshape(N, C * k * k, Ho * Wo)


def col2im(cols, shape, k, stride, pad):
    cols = _as_real(cols)
    N, C, H, W = shape
    Ho, Wo = _out_size(H, k, stride, pad), _out_size(W, k, stride, pad)
    c6 = cols.reshape(N, C, k, k, Ho, Wo)
    dxp = np.zeros((N, C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    for kh in range(k):
        for kw in range(k):
            dxp[:, :, kh : kh + stride * Ho : stride, kw : kw + stride * Wo : stride] += c6[:, :, kh, kw]
    if pad:
        dxp = dxp[:, :, pad : pad + H, pad : pad + W]
    return np.ascontiguousarray(dxp)

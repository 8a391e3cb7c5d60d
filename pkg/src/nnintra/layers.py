"""Numpy layer primitives with explicit backward passes.

Activations are NHWC. Convolution weights are (k, k, in_ch, out_ch); a
transposed convolution is the adjoint of a same-padded strided convolution
and stores its weight as (k, k, out_ch, in_ch), i.e. the weight of the
convolution it is the adjoint of.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def same_pads(size: int, k: int, stride: int) -> tuple[int, int]:
    """TF-style "same" padding: output = ceil(size / stride)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def affine_forward(x, w, b):
    return x @ w + b, (x, w)


def affine_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def prelu_forward(x, a):
    """Slope ``a`` broadcasts over the last axis: shape (1,) or (channels,)."""
    return np.where(x >= 0, x, a * x), (x, a)


def prelu_backward(dout, cache):
    x, a = cache
    neg = x < 0
    dx = np.where(neg, a * dout, dout)
    da = (dout * x * neg).reshape(-1, x.shape[-1]).sum(axis=0)
    if a.shape[0] == 1:
        da = da.sum(keepdims=True)
    return dx, da


def _im2col(xp, k: int, stride: int, out_h: int, out_w: int):
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # N, H', W', C, k, k
    win = win[:, : (out_h - 1) * stride + 1 : stride, : (out_w - 1) * stride + 1 : stride]
    cols = win.transpose(0, 1, 2, 4, 5, 3)  # N, oh, ow, k, k, C
    return cols.reshape(-1, k * k * xp.shape[-1])


def _col2im(dcols, padded_shape, k: int, stride: int, out_h: int, out_w: int):
    n, c = padded_shape[0], padded_shape[-1]
    dcols = dcols.reshape(n, out_h, out_w, k, k, c)
    dxp = np.zeros(padded_shape, dtype=dcols.dtype)
    span_h = (out_h - 1) * stride + 1
    span_w = (out_w - 1) * stride + 1
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + span_h : stride, j : j + span_w : stride] += dcols[:, :, :, i, j]
    return dxp


def conv_forward(x, w, b, stride: int):
    n, h, wd, c = x.shape
    k = w.shape[0]
    (pt, pb), (pl, pr) = same_pads(h, k, stride), same_pads(wd, k, stride)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    oh, ow = -(-h // stride), -(-wd // stride)
    cols = _im2col(xp, k, stride, oh, ow)
    out = cols @ w.reshape(-1, w.shape[-1]) + b
    return out.reshape(n, oh, ow, -1), (x.shape, xp.shape, cols, w, stride, (pt, pl))


def conv_backward(dout, cache):
    x_shape, xp_shape, cols, w, stride, (pt, pl) = cache
    k = w.shape[0]
    _, oh, ow, o = dout.shape
    d2 = dout.reshape(-1, o)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    dxp = _col2im(d2 @ w.reshape(-1, o).T, xp_shape, k, stride, oh, ow)
    dx = dxp[:, pt : pt + x_shape[1], pl : pl + x_shape[2]]
    return dx, dw, db


def deconv_forward(x, w, b, stride: int):
    """Transposed convolution: (N, H, W, Cin) -> (N, H*s, W*s, Cout)."""
    n, h, wd, cin = x.shape
    k, cout = w.shape[0], w.shape[2]
    oh, ow = h * stride, wd * stride
    (pt, pb), (pl, pr) = same_pads(oh, k, stride), same_pads(ow, k, stride)
    padded = (n, oh + pt + pb, ow + pl + pr, cout)
    w2 = w.reshape(-1, cin)  # (k*k*Cout, Cin)
    cols = x.reshape(-1, cin) @ w2.T
    outp = _col2im(cols, padded, k, stride, h, wd)
    out = outp[:, pt : pt + oh, pl : pl + ow] + b
    return out, (x, w, stride, (pt, pb, pl, pr))


def deconv_backward(dout, cache):
    x, w, stride, (pt, pb, pl, pr) = cache
    n, h, wd, cin = x.shape
    k = w.shape[0]
    dp = np.pad(dout, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = _im2col(dp, k, stride, h, wd)  # (N*H*W, k*k*Cout)
    w2 = w.reshape(-1, cin)
    dx = (cols @ w2).reshape(x.shape)
    dw = (cols.T @ x.reshape(-1, cin)).reshape(w.shape)
    db = dout.reshape(-1, dout.shape[-1]).sum(axis=0)
    return dx, dw, db

"""Pure-numpy kernel implementations (per-tap tensordot convolutions,
reshape pooling).

Layouts match the numba backend: activations NCHW, conv weights
(CO, CI, KH, KW). Convolutions are stride-1 cross-correlations with
explicit zero padding.
"""

import numpy as np


def conv2d_forward(x, w, b, ph, pw):
    n = x.shape[0]
    co, ci, kh, kw = w.shape
    oh = x.shape[2] + 2 * ph - kh + 1
    ow = x.shape[3] + 2 * pw - kw + 1
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    out = np.empty((n, co, oh, ow), dtype=x.dtype)
    out[:] = b.reshape(1, co, 1, 1)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + oh, j:j + ow]
            out += np.tensordot(patch, w[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
    return out


def conv2d_backward_input(dy, w, h, wdt, ph, pw):
    """Gradient w.r.t. the conv input, shape (N, CI, h, wdt)."""
    n, co = dy.shape[0], dy.shape[1]
    _, ci, kh, kw = w.shape
    oh, ow = dy.shape[2], dy.shape[3]
    dxp = np.zeros((n, ci, h + 2 * ph, wdt + 2 * pw), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            grad = np.tensordot(dy, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
            dxp[:, :, i:i + oh, j:j + ow] += grad
    if ph or pw:
        return np.ascontiguousarray(dxp[:, :, ph:ph + h, pw:pw + wdt])
    return dxp


def conv2d_backward_weights(x, dy, kh, kw, ph, pw):
    co = dy.shape[1]
    ci = x.shape[1]
    oh, ow = dy.shape[2], dy.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    dw = np.empty((co, ci, kh, kw), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + oh, j:j + ow]
            dw[:, :, i, j] = np.tensordot(dy, patch, axes=([0, 2, 3], [0, 2, 3]))
    return dw


def maxpool2d_forward(x, ph, pw):
    """Non-overlapping max pool; trailing rows/cols that do not fill a
    window are dropped. Returns (out, idx) where idx holds, per output
    cell, the flat (iy * W + ix) input coordinate of the first maximum."""
    n, c, h, w = x.shape
    oh, ow = h // ph, w // pw
    xc = x[:, :, :oh * ph, :ow * pw]
    blocks = xc.reshape(n, c, oh, ph, ow, pw).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, oh, ow, ph * pw)
    k = flat.argmax(axis=4)
    out = np.take_along_axis(flat, k[..., None], axis=4)[..., 0]
    iy = (np.arange(oh)[None, None, :, None] * ph) + k // pw
    ix = (np.arange(ow)[None, None, None, :] * pw) + k % pw
    idx = (iy * w + ix).astype(np.int64)
    return np.ascontiguousarray(out), idx


def maxpool2d_backward(dy, idx, x_shape):
    n, c, h, w = x_shape
    dx = np.zeros((n, c, h * w), dtype=dy.dtype)
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    # pool windows are disjoint, so plain fancy-index assignment is safe
    dx[ni, ci, idx] = dy
    return dx.reshape(n, c, h, w)


def vote_accumulate(starts, ends, confs, n_bins, bins_per_s):
    """Per-bin sum of confidences of intervals covering the bin center.

    Accumulates in detection order so the result is bit-identical to a
    sequential per-bin sum regardless of backend."""
    acc = np.zeros(n_bins, dtype=np.float64)
    centers = (np.arange(n_bins, dtype=np.float64) + 0.5) / bins_per_s
    for i in range(len(confs)):
        acc[(starts[i] <= centers) & (centers < ends[i])] += confs[i]
    return acc

"""Numba-compiled kernels, same contracts as numpy_backend.

Activations are NCHW and conv weights (CO, CI, KH, KW), so the innermost
loops run unit-stride over the spatial axis and vectorize. All parallel
loops write disjoint output slices: results are deterministic for a fixed
input regardless of thread scheduling.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def _conv2d_forward(xp, w, b, oh, ow):
    n, ci = xp.shape[0], xp.shape[1]
    co, _, kh, kw = w.shape
    out = np.empty((n, co, oh, ow), xp.dtype)
    for ni in prange(n):
        for c in range(co):
            for oy in range(oh):
                for ox in range(ow):
                    out[ni, c, oy, ox] = b[c]
                for c0 in range(ci):
                    for i in range(kh):
                        for j in range(kw):
                            wv = w[c, c0, i, j]
                            for ox in range(ow):
                                out[ni, c, oy, ox] += wv * xp[ni, c0, oy + i, ox + j]
    return out


def conv2d_forward(x, w, b, ph, pw):
    kh, kw = w.shape[2], w.shape[3]
    oh = x.shape[2] + 2 * ph - kh + 1
    ow = x.shape[3] + 2 * pw - kw + 1
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    return _conv2d_forward(xp, np.ascontiguousarray(w), np.ascontiguousarray(b), oh, ow)


@njit(cache=True, parallel=True)
def _conv2d_backward_input(dyp, w, h, wd):
    n, co = dyp.shape[0], dyp.shape[1]
    _, ci, kh, kw = w.shape
    dx = np.empty((n, ci, h, wd), dyp.dtype)
    for ni in prange(n):
        for c0 in range(ci):
            for iy in range(h):
                for ix in range(wd):
                    dx[ni, c0, iy, ix] = 0.0
                for c in range(co):
                    for i in range(kh):
                        for j in range(kw):
                            wv = w[c, c0, kh - 1 - i, kw - 1 - j]
                            for ix in range(wd):
                                dx[ni, c0, iy, ix] += wv * dyp[ni, c, iy + i, ix + j]
    return dx


def conv2d_backward_input(dy, w, h, wdt, ph, pw):
    kh, kw = w.shape[2], w.shape[3]
    py, px = kh - 1 - ph, kw - 1 - pw
    dyp = np.pad(dy, ((0, 0), (0, 0), (py, py), (px, px))) if (py or px) else dy
    return _conv2d_backward_input(dyp, np.ascontiguousarray(w), h, wdt)


@njit(cache=True, parallel=True)
def _conv2d_backward_weights(xp, dy, kh, kw):
    n, ci = xp.shape[0], xp.shape[1]
    co, oh, ow = dy.shape[1], dy.shape[2], dy.shape[3]
    dwn = np.zeros((n, co, ci, kh, kw), dy.dtype)
    for ni in prange(n):
        for oy in range(oh):
            for i in range(kh):
                for c0 in range(ci):
                    for c in range(co):
                        for j in range(kw):
                            acc = dy.dtype.type(0.0)
                            for ox in range(ow):
                                acc += xp[ni, c0, oy + i, ox + j] * dy[ni, c, oy, ox]
                            dwn[ni, c, c0, i, j] += acc
    return dwn


@njit(cache=True, parallel=True)
def _conv2d_backward_weights_3x3(xp, dy):
    # common case: one pass per row accumulates all three column offsets
    n, ci = xp.shape[0], xp.shape[1]
    co, oh, ow = dy.shape[1], dy.shape[2], dy.shape[3]
    dwn = np.zeros((n, co, ci, 3, 3), dy.dtype)
    for ni in prange(n):
        for oy in range(oh):
            for i in range(3):
                for c0 in range(ci):
                    for c in range(co):
                        a0 = dy.dtype.type(0.0)
                        a1 = dy.dtype.type(0.0)
                        a2 = dy.dtype.type(0.0)
                        for ox in range(ow):
                            d = dy[ni, c, oy, ox]
                            a0 += xp[ni, c0, oy + i, ox] * d
                            a1 += xp[ni, c0, oy + i, ox + 1] * d
                            a2 += xp[ni, c0, oy + i, ox + 2] * d
                        dwn[ni, c, c0, i, 0] += a0
                        dwn[ni, c, c0, i, 1] += a1
                        dwn[ni, c, c0, i, 2] += a2
    return dwn


def conv2d_backward_weights(x, dy, kh, kw, ph, pw):
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    dy = np.ascontiguousarray(dy)
    if kh == 3 and kw == 3:
        dwn = _conv2d_backward_weights_3x3(xp, dy)
    else:
        dwn = _conv2d_backward_weights(xp, dy, kh, kw)
    return dwn.sum(axis=0)


@njit(cache=True, parallel=True)
def _maxpool2d_forward(x, ph, pw):
    n, c, h, w = x.shape
    oh = h // ph
    ow = w // pw
    out = np.empty((n, c, oh, ow), x.dtype)
    idx = np.empty((n, c, oh, ow), np.int64)
    for ni in prange(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    best = x[ni, ch, oy * ph, ox * pw]
                    bi = (oy * ph) * w + ox * pw
                    for dy_ in range(ph):
                        for dx_ in range(pw):
                            v = x[ni, ch, oy * ph + dy_, ox * pw + dx_]
                            if v > best:
                                best = v
                                bi = (oy * ph + dy_) * w + (ox * pw + dx_)
                    out[ni, ch, oy, ox] = best
                    idx[ni, ch, oy, ox] = bi
    return out, idx


def maxpool2d_forward(x, ph, pw):
    return _maxpool2d_forward(x, ph, pw)


@njit(cache=True, parallel=True)
def _maxpool2d_backward(dy, idx, n, c, h, w):
    dx = np.zeros((n, c, h * w), dy.dtype)
    oh, ow = dy.shape[2], dy.shape[3]
    for ni in prange(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    dx[ni, ch, idx[ni, ch, oy, ox]] += dy[ni, ch, oy, ox]
    return dx


def maxpool2d_backward(dy, idx, x_shape):
    n, c, h, w = x_shape
    return _maxpool2d_backward(np.ascontiguousarray(dy), idx, n, c, h, w).reshape(n, c, h, w)


@njit(cache=True)
def _vote_accumulate(starts, ends, confs, n_bins, bins_per_s):
    acc = np.zeros(n_bins, np.float64)
    for i in range(len(confs)):
        for t in range(n_bins):
            center = (t + 0.5) / bins_per_s
            if starts[i] <= center and center < ends[i]:
                acc[t] += confs[i]
    return acc


def vote_accumulate(starts, ends, confs, n_bins, bins_per_s):
    return _vote_accumulate(
        np.ascontiguousarray(starts, dtype=np.float64),
        np.ascontiguousarray(ends, dtype=np.float64),
        np.ascontiguousarray(confs, dtype=np.float64),
        n_bins,
        float(bins_per_s),
    )

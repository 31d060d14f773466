"""Numba-compiled 3D convolution and pooling kernels.

All tensors are (batch, channels, D, H, W) float64; 1D and 2D layers reach
these kernels with singleton leading spatial axes.  Convolution inputs arrive
already zero-padded.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _conv3d_forward(x, w, b, sd, sh, sw):
    nb, nc, d, h, wd = x.shape
    no, _, kd, kh, kw = w.shape
    od = (d - kd) // sd + 1
    oh = (h - kh) // sh + 1
    ow = (wd - kw) // sw + 1
    out = np.empty((nb, no, od, oh, ow))
    for n in range(nb):
        for o in range(no):
            for i in range(od):
                for j in range(oh):
                    for k in range(ow):
                        acc = b[o]
                        for c in range(nc):
                            for p in range(kd):
                                for q in range(kh):
                                    for r in range(kw):
                                        acc += x[n, c, i * sd + p, j * sh + q, k * sw + r] * w[o, c, p, q, r]
                        out[n, o, i, j, k] = acc
    return out


@numba.njit(cache=True)
def _conv3d_backward(x, w, dy, sd, sh, sw):
    nb, nc, d, h, wd = x.shape
    no, _, kd, kh, kw = w.shape
    _, _, od, oh, ow = dy.shape
    dx = np.zeros(x.shape)
    dw = np.zeros(w.shape)
    for n in range(nb):
        for o in range(no):
            for i in range(od):
                for j in range(oh):
                    for k in range(ow):
                        g = dy[n, o, i, j, k]
                        if g == 0.0:
                            continue
                        for c in range(nc):
                            for p in range(kd):
                                for q in range(kh):
                                    for r in range(kw):
                                        xi = (n, c, i * sd + p, j * sh + q, k * sw + r)
                                        dw[o, c, p, q, r] += g * x[xi]
                                        dx[xi] += g * w[o, c, p, q, r]
    return dx, dw


@numba.njit(cache=True)
def _maxpool3d_forward(x, pd, ph, pw, sd, sh, sw):
    nb, nc, d, h, wd = x.shape
    od = (d - pd) // sd + 1
    oh = (h - ph) // sh + 1
    ow = (wd - pw) // sw + 1
    out = np.empty((nb, nc, od, oh, ow))
    arg = np.empty((nb, nc, od, oh, ow), dtype=np.int64)
    for n in range(nb):
        for c in range(nc):
            for i in range(od):
                for j in range(oh):
                    for k in range(ow):
                        best = -np.inf
                        besti = -1
                        # scan in row-major order; strict '>' keeps the lowest flat index on ties
                        for p in range(pd):
                            for q in range(ph):
                                for r in range(pw):
                                    z = i * sd + p
                                    y = j * sh + q
                                    xx = k * sw + r
                                    v = x[n, c, z, y, xx]
                                    if v > best or besti < 0:
                                        best = v
                                        besti = (z * h + y) * wd + xx
                        out[n, c, i, j, k] = best
                        arg[n, c, i, j, k] = besti
    return out, arg


@numba.njit(cache=True)
def _maxpool3d_backward(dy, arg, nb, nc, size):
    dx = np.zeros((nb, nc, size))
    _, _, od, oh, ow = dy.shape
    for n in range(nb):
        for c in range(nc):
            for i in range(od):
                for j in range(oh):
                    for k in range(ow):
                        dx[n, c, arg[n, c, i, j, k]] += dy[n, c, i, j, k]
    return dx


def conv3d_forward(x, w, b, stride):
    return _conv3d_forward(x, w, b, *stride)


def conv3d_backward(x, w, dy, stride):
    """Return (dx, dw) for padded input ``x``; the bias gradient is ``dy`` summed."""
    return _conv3d_backward(x, w, np.ascontiguousarray(dy), *stride)


def maxpool3d_forward(x, window, stride):
    return _maxpool3d_forward(x, *window, *stride)


def maxpool3d_backward(dy, arg, in_shape):
    nb, nc = in_shape[:2]
    size = int(np.prod(in_shape[2:]))
    dx = _maxpool3d_backward(np.ascontiguousarray(dy), arg, nb, nc, size)
    return dx.reshape(in_shape)

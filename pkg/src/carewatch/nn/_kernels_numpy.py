"""Pure-numpy versions of the kernels in ``_kernels_numba``.

Same signatures and conventions; used when numba is unavailable or disabled
through ``CAREWATCH_DISABLE_JIT=1``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, window, stride):
    sd, sh, sw = stride
    v = sliding_window_view(x, window, axis=(2, 3, 4))
    return v[:, :, ::sd, ::sh, ::sw]


def conv3d_forward(x, w, b, stride):
    win = _windows(x, w.shape[2:], stride)
    out = np.tensordot(win, w, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    out = np.moveaxis(out, 4, 1)
    return np.ascontiguousarray(out + b[None, :, None, None, None])


def conv3d_backward(x, w, dy, stride):
    sd, sh, sw = stride
    win = _windows(x, w.shape[2:], stride)
    dw = np.tensordot(dy, win, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    dx = np.zeros(x.shape)
    _, _, od, oh, ow = dy.shape
    kd, kh, kw = w.shape[2:]
    for p in range(kd):
        for q in range(kh):
            for r in range(kw):
                contrib = np.tensordot(dy, w[:, :, p, q, r], axes=([1], [0]))
                dx[:, :, p:p + sd * (od - 1) + 1:sd,
                   q:q + sh * (oh - 1) + 1:sh,
                   r:r + sw * (ow - 1) + 1:sw] += np.moveaxis(contrib, 4, 1)
    return dx, dw


def maxpool3d_forward(x, window, stride):
    nb, nc, d, h, wd = x.shape
    win = _windows(x, window, stride)
    od, oh, ow = win.shape[2:5]
    flat = win.reshape(nb, nc, od, oh, ow, -1)
    # argmax returns the first maximum: lowest flat index inside the window
    local = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    p, q, r = np.unravel_index(local, window)
    z = np.arange(od)[:, None, None] * stride[0] + p
    y = np.arange(oh)[None, :, None] * stride[1] + q
    xx = np.arange(ow)[None, None, :] * stride[2] + r
    arg = (z * h + y) * wd + xx
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool3d_backward(dy, arg, in_shape):
    nb, nc = in_shape[:2]
    size = int(np.prod(in_shape[2:]))
    base = (np.arange(nb * nc) * size).reshape(nb, nc, 1, 1, 1)
    dx = np.bincount((arg + base).ravel(), weights=dy.ravel(), minlength=nb * nc * size)
    return dx.reshape(in_shape)

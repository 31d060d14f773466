"""Functional forward ops over channels-first float64 tensors.

Convolution and pooling accept either a single instance ``(C, *spatial)`` or a
batch ``(B, C, *spatial)``; the number of spatial axes comes from the kernel
(convolution) or the window tuple (pooling).
"""

import numpy as np

from ..errors import ShapeError
from . import kernels

_AXIS_NAMES = {1: ("W",), 2: ("H", "W"), 3: ("D", "H", "W")}


def as_tuple(value, n, name="value"):
    if np.isscalar(value):
        return (int(value),) * n
    value = tuple(int(v) for v in value)
    if len(value) != n:
        raise ShapeError(f"{name} needs {n} entries, got {len(value)}")
    return value


def pooled_size(size, window, stride, padding=0):
    return (size + 2 * padding - window) // stride + 1


def spatial_output(in_spatial, window, stride, padding, what="conv"):
    n = len(in_spatial)
    names = _AXIS_NAMES[n]
    out = []
    for axis in range(n):
        o = pooled_size(in_spatial[axis], window[axis], stride[axis], padding[axis])
        if o < 1 or in_spatial[axis] + 2 * padding[axis] < window[axis]:
            raise ShapeError(
                f"{what}: axis {names[axis]} has size {in_spatial[axis]} (padding {padding[axis]}), "
                f"too small for window {window[axis]}; output size would be {max(o, 0)}")
        out.append(o)
    return tuple(out)


def _lift(x, n):
    """View (B, C, *spatial[n]) as (B, C, D, H, W)."""
    return x.reshape(x.shape[:2] + (1,) * (3 - n) + x.shape[2:])


def _lift_param(t, n):
    return (1,) * (3 - n) + tuple(t)


def _batched(x, n):
    if x.ndim == n + 1:
        return x[None], True
    if x.ndim == n + 2:
        return x, False
    raise ShapeError(f"expected rank {n + 1} (C, spatial) or {n + 2} (B, C, spatial), got rank {x.ndim}")


def conv_forward(input, kernel, bias, stride=1, padding=0):
    """Cross-correlation (no kernel flip) plus a per-output-channel bias.

    ``kernel`` is ``(out_channels, in_channels, *k)``; its rank fixes the
    dimensionality (1D, 2D or 3D).
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    n = kernel.ndim - 2
    if n not in (1, 2, 3):
        raise ShapeError(f"kernel rank {kernel.ndim} does not describe a 1D/2D/3D convolution")
    x, single = _batched(np.asarray(input, dtype=np.float64), n)
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"channel axis: input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}")
    if bias.shape != (kernel.shape[0],):
        raise ShapeError(f"bias axis: expected length {kernel.shape[0]}, got shape {bias.shape}")
    stride = as_tuple(stride, n, "stride")
    padding = as_tuple(padding, n, "padding")
    if min(stride) < 1 or min(padding) < 0:
        raise ShapeError("stride must be >= 1 and padding >= 0")
    spatial_output(x.shape[2:], kernel.shape[2:], stride, padding)
    out = _conv_lifted(x, kernel, bias, stride, padding, n)
    return out[0] if single else out


def _pad(x, padding, n):
    if not any(padding):
        return np.ascontiguousarray(x)
    width = [(0, 0), (0, 0)] + [(p, p) for p in padding]
    return np.pad(x, width)


def _conv_lifted(x, kernel, bias, stride, padding, n):
    xp = _lift(_pad(x, padding, n), n)
    w = kernel.reshape(kernel.shape[:2] + _lift_param(kernel.shape[2:], n))
    out = kernels.conv3d_forward(xp, np.ascontiguousarray(w), bias, _lift_param(stride, n))
    return out.reshape(out.shape[:2] + out.shape[5 - n:])


def conv_backward(x, kernel, dy, stride, padding):
    """Gradients of a batched convolution: (d_input, d_kernel, d_bias)."""
    n = kernel.ndim - 2
    xp = _lift(_pad(x, padding, n), n)
    w = np.ascontiguousarray(kernel.reshape(kernel.shape[:2] + _lift_param(kernel.shape[2:], n)))
    dyl = _lift(dy, n)
    dxp, dw = kernels.conv3d_backward(xp, w, dyl, _lift_param(stride, n))
    dxp = dxp.reshape(dxp.shape[:2] + dxp.shape[5 - n:])
    crop = (slice(None), slice(None)) + tuple(slice(p, p + s) for p, s in zip(padding, x.shape[2:]))
    return dxp[crop], dw.reshape(kernel.shape), dy.sum(axis=(0,) + tuple(range(2, dy.ndim)))


def maxpool_forward(input, window, stride=None):
    """Max pooling over the trailing ``len(window)`` axes.

    Returns ``(output, argmax)`` where ``argmax`` holds, for every output
    element, the flat index of the winning element inside its own spatial
    volume.  Ties resolve to the lowest flat index.
    """
    window = tuple(int(w) for w in np.atleast_1d(window))
    n = len(window)
    if n not in (1, 2, 3):
        raise ShapeError("pooling window must have 1-3 axes")
    stride = window if stride is None else as_tuple(stride, n, "stride")
    if min(window) < 1 or min(stride) < 1:
        raise ShapeError("pooling window and stride must be >= 1")
    x = np.asarray(input, dtype=np.float64)
    if x.ndim < n:
        raise ShapeError(f"input rank {x.ndim} is smaller than pooling rank {n}")
    lead = x.shape[:x.ndim - n]
    spatial = x.shape[x.ndim - n:]
    spatial_output(spatial, window, stride, (0,) * n, what="maxpool")
    xb = np.ascontiguousarray(x).reshape((1, int(np.prod(lead, dtype=np.int64))) + spatial)
    out, arg = kernels.maxpool3d_forward(_lift(xb, n), _lift_param(window, n), _lift_param(stride, n))
    oshape = lead + out.shape[5 - n:]
    return out.reshape(oshape), arg.reshape(oshape)


def maxpool_backward(dy, arg, in_shape, n):
    """Route each output gradient to its recorded argmax input position."""
    nb, nc = in_shape[:2]
    lifted = (nb, nc) + _lift_param(in_shape[2:], n)
    dx = kernels.maxpool3d_backward(_lift(dy, n), _lift(arg, n), lifted)
    return dx.reshape(in_shape)


def batchnorm_forward(input, gamma, beta, epsilon=1e-5, mode="train",
                      running_mean=None, running_var=None, momentum=0.9):
    """Per-channel batch normalization for ``(B, C, ...)`` input.

    Returns ``(output, running_mean, running_var)``.  In train mode the batch
    statistics (biased variance) normalize the input and the running stats are
    updated as ``momentum * running + (1 - momentum) * batch``; in infer mode
    the running stats are used and returned unchanged.
    """
    x = np.asarray(input, dtype=np.float64)
    if x.ndim < 2:
        raise ShapeError("batchnorm expects (B, C, ...) input")
    c = x.shape[1]
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"channel axis: gamma/beta must have length {c}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    bshape = (1, c) + (1,) * (x.ndim - 2)
    if mode == "train":
        if x.shape[0] < 2:
            raise ShapeError("batchnorm in train mode needs a batch of at least 2")
        axes = (0,) + tuple(range(2, x.ndim))
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        rm = np.zeros(c) if running_mean is None else np.asarray(running_mean, dtype=np.float64)
        rv = np.ones(c) if running_var is None else np.asarray(running_var, dtype=np.float64)
        rm = momentum * rm + (1.0 - momentum) * mean
        rv = momentum * rv + (1.0 - momentum) * var
    elif mode == "infer":
        if running_mean is None or running_var is None:
            raise ValueError("batchnorm infer mode requires running statistics")
        mean = rm = np.asarray(running_mean, dtype=np.float64)
        var = rv = np.asarray(running_var, dtype=np.float64)
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    xhat = (x - mean.reshape(bshape)) / np.sqrt(var.reshape(bshape) + epsilon)
    return gamma.reshape(bshape) * xhat + beta.reshape(bshape), rm, rv


def dense_forward(input, weights, bias):
    x = np.asarray(input, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: input {x.shape} incompatible with weights {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"dense: bias must have length {w.shape[1]}, got {b.shape}")
    return x @ w + b


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels, sample_weight=None):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits).

    With ``sample_weight`` the mean is weighted: ``sum(w * nll) / sum(w)``.
    Returns ``(loss, probs)``.
    """
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise ShapeError("logits must be (batch, classes) with batch >= 1")
    if labels.shape != (z.shape[0],):
        raise ShapeError(f"labels must have shape ({z.shape[0]},)")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        bad = labels[(labels < 0) | (labels >= z.shape[1])][0]
        raise ValueError(f"label {bad} out of range for {z.shape[1]} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    nll = logsum - shifted[np.arange(len(labels)), labels]
    probs = np.exp(shifted - logsum[:, None])
    if sample_weight is None:
        loss = float(nll.mean())
    else:
        sw = np.asarray(sample_weight, dtype=np.float64)
        loss = float((sw * nll).sum() / sw.sum())
    return loss, probs


def sgd_step(params, grads, learning_rate):
    """Plain gradient descent ``p - lr * g``; returns a new dict."""
    if set(params) != set(grads):
        missing = sorted(set(params) ^ set(grads))
        raise KeyError(f"params/grads structure mismatch: {missing}")
    out = {}
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p):
            raise ShapeError(f"gradient for {name} has shape {np.shape(g)}, parameter {np.shape(p)}")
        out[name] = p - learning_rate * g
    return out

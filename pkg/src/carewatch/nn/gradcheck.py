"""Central finite-difference gradient checking."""

import numpy as np

from .model import backward, forward_logits
from .ops import softmax_cross_entropy


def loss_at(model, batch, labels, train=True):
    logits, _, _ = forward_logits(model, batch, train=train)
    return softmax_cross_entropy(logits, labels)[0]


def numeric_grads(model, batch, labels, h=1e-5, train=True):
    """Central differences ``(L(p + h) - L(p - h)) / 2h`` for every parameter entry."""
    out = {}
    for key, p in model.params.items():
        g = np.zeros_like(p)
        flat = p.ravel()
        for j in range(flat.size):
            bumped = dict(model.params)
            for sign in (1, -1):
                q = flat.copy()
                q[j] += sign * h
                bumped[key] = q.reshape(p.shape)
                val = loss_at(model.with_params(bumped), batch, labels, train)
                g.flat[j] += sign * val
        out[key] = g / (2 * h)
    return out


def relative_error(a, b, floor=1e-6):
    """``|a - b| / max(|a|, |b|, floor)``.

    The floor keeps gradients that are exactly zero in theory (a bias feeding
    batchnorm, say) from turning rounding noise into a large ratio.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def check_gradients(model, batch, labels, h=1e-5, train=True):
    """Return the maximum elementwise relative error per parameter key."""
    _, analytic = backward(model, batch, labels, train=train)
    numeric = numeric_grads(model, batch, labels, h, train)
    return {k: float(relative_error(analytic[k], numeric[k]).max()) for k in analytic}

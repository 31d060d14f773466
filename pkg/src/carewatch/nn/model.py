"""Layer-stack models: construction, forward/backward passes and prediction."""

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ShapeError
from ..rng import Rng
from . import ops
from .layers import Softmax, check_stack

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Model:
    """Immutable trained (or freshly initialized) network.

    ``params`` are trainable tensors keyed ``"<layer index>.<name>"``;
    ``buffers`` hold non-trainable state (batchnorm running statistics).
    ``meta`` carries pipeline-specific preprocessing settings.
    """

    input_shape: tuple
    layers: tuple
    params: dict
    label_names: tuple
    buffers: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    rng_seed: int = 0
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        validate(self)

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params.values()))

    def with_params(self, params, buffers=None):
        return replace(self, params=params, buffers=self.buffers if buffers is None else buffers)


def validate(model):
    shapes, out = check_stack(model.input_shape, model.layers)
    if not model.layers or not isinstance(model.layers[-1], Softmax):
        raise ShapeError("the last layer must be softmax")
    if out != (len(model.label_names),):
        raise ShapeError(f"output width {out} does not match {len(model.label_names)} label names")
    for i, (layer, shape) in enumerate(zip(model.layers, shapes)):
        for name, pshape in layer.param_shapes(shape).items():
            key = f"{i}.{name}"
            if key not in model.params:
                raise ShapeError(f"missing parameter {key}")
            if model.params[key].shape != tuple(pshape):
                raise ShapeError(f"parameter {key} has shape {model.params[key].shape}, expected {tuple(pshape)}")


def build_model(input_shape, layers, label_names, seed=0, meta=None):
    """Type-check ``layers`` against ``input_shape`` and initialize parameters."""
    input_shape = tuple(int(s) for s in input_shape)
    layers = tuple(layers)
    shapes, _ = check_stack(input_shape, layers)
    rng = Rng(seed)
    params, buffers = {}, {}
    for i, (layer, shape) in enumerate(zip(layers, shapes)):
        p, b = layer.init(rng, shape)
        params.update({f"{i}.{k}": v for k, v in p.items()})
        buffers.update({f"{i}.{k}": v for k, v in b.items()})
    return Model(input_shape, layers, params, tuple(label_names), buffers, dict(meta or {}), int(seed))


def _layer_slice(d, i):
    prefix = f"{i}."
    return {k[len(prefix):]: v for k, v in d.items() if k.startswith(prefix)}


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape == model.input_shape:
        return x[None], True
    if x.shape[1:] == model.input_shape:
        return x, False
    raise ShapeError(f"input shape {x.shape} does not match model input {model.input_shape} (or a batch of it)")


def forward_logits(model, batch, train=False):
    """Run every layer except the final softmax.

    Returns ``(logits, caches, new_buffers)``; caches are only useful with
    ``train=True``.
    """
    x = batch
    caches = []
    new_buffers = dict(model.buffers)
    for i, layer in enumerate(model.layers[:-1]):
        x, cache, upd = layer.forward(x, _layer_slice(model.params, i), _layer_slice(model.buffers, i), train)
        caches.append(cache)
        if upd:
            new_buffers.update({f"{i}.{k}": v for k, v in upd.items()})
    return x, caches, new_buffers


def backward(model, batch, labels, sample_weight=None, input_grad=False, train=True):
    """Exact gradients of the mean cross-entropy loss.

    Returns ``(loss, grads)`` or ``(loss, grads, d_input)`` when
    ``input_grad`` is set; ``grads`` mirrors ``model.params``.
    """
    x, _ = _as_batch(model, batch)
    loss, grads, dx, _, _ = _backprop(model, x, labels, sample_weight, train)
    if input_grad:
        return loss, grads, dx
    return loss, grads


def _backprop(model, x, labels, sample_weight, train):
    labels = np.asarray(labels, dtype=np.int64)
    logits, caches, new_buffers = forward_logits(model, x, train=train)
    loss, probs = ops.softmax_cross_entropy(logits, labels, sample_weight)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    if sample_weight is None:
        dy = (probs - onehot) / len(labels)
    else:
        sw = np.asarray(sample_weight, dtype=np.float64)
        dy = (probs - onehot) * (sw / sw.sum())[:, None]
    grads = {}
    for i in range(len(model.layers) - 2, -1, -1):
        dy, g = model.layers[i].backward(dy, caches[i], _layer_slice(model.params, i))
        grads.update({f"{i}.{k}": v for k, v in g.items()})
    grads = {k: grads[k] for k in model.params}
    return loss, grads, dy, logits, new_buffers


def predict_proba(model, x):
    xb, single = _as_batch(model, x)
    logits, _, _ = forward_logits(model, xb, train=False)
    probs = ops.softmax(logits)
    return probs[0] if single else probs


def predict(model, x):
    """Return ``(label_name, posterior)`` (or lists of them for a batch).

    np.argmax returns the first maximum, so ties go to the lowest class index.
    """
    probs = predict_proba(model, x)
    if probs.ndim == 1:
        return model.label_names[int(np.argmax(probs))], probs
    return [model.label_names[i] for i in np.argmax(probs, axis=1)], probs

"""Mini-batch SGD training."""

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, TrainingError
from ..rng import Rng, derive_seed
from . import ops
from .model import _as_batch, _backprop, predict_proba

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    shuffle: bool = True
    validation_split: float = 0.0
    class_weighting: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.validation_split < 1.0:
            raise ValueError("validation_split must lie in [0, 1)")


def _class_weights(y, n_classes):
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    w = np.where(counts > 0, len(y) / (n_classes * np.maximum(counts, 1)), 0.0)
    return w[y]


def train(model, inputs, labels, config, callback=None):
    """Train ``model`` on ``(inputs, labels)``; returns ``(model, history)``.

    ``history`` has one dict per epoch with ``loss`` and ``accuracy`` measured
    on the training batches (plus ``val_loss``/``val_accuracy`` when a
    validation split is configured).  ``callback(epoch_record)`` is invoked
    after every epoch.
    """
    x, _ = _as_batch(model, inputs) if len(inputs) else (None, None)
    y = np.asarray(labels, dtype=np.int64)
    if x is None or len(x) == 0:
        raise DataError("training set is empty")
    if len(x) != len(y):
        raise DataError(f"{len(x)} inputs but {len(y)} labels")
    n_classes = len(model.label_names)

    n = len(x)
    order = Rng(derive_seed(config.seed, 0)).permutation(n) if config.validation_split else np.arange(n)
    n_val = int(np.floor(n * config.validation_split))
    val_idx, train_idx = order[n - n_val:], order[:n - n_val]
    if len(train_idx) == 0:
        raise DataError("validation split leaves no training data")
    weights = _class_weights(y, n_classes) if config.class_weighting else None

    params, buffers = dict(model.params), dict(model.buffers)
    history = []
    for epoch in range(config.epochs):
        if config.shuffle:
            perm = train_idx[Rng(derive_seed(config.seed, 1, epoch)).permutation(len(train_idx))]
        else:
            perm = train_idx
        total_loss, correct, seen = 0.0, 0, 0
        for b, start in enumerate(range(0, len(perm), config.batch_size)):
            idx = perm[start:start + config.batch_size]
            current = model.with_params(params, buffers)
            sw = None if weights is None else weights[idx]
            loss, grads, logits, new_buffers = _step(current, x[idx], y[idx], sw)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            params = ops.sgd_step(params, grads, config.learning_rate)
            buffers = new_buffers
            total_loss += loss * len(idx)
            correct += int((np.argmax(logits, axis=1) == y[idx]).sum())
            seen += len(idx)
        record = {"epoch": epoch + 1, "loss": total_loss / seen, "accuracy": correct / seen}
        if n_val:
            vm = model.with_params(params, buffers)
            probs = predict_proba(vm, x[val_idx])
            vloss = -np.log(probs[np.arange(n_val), y[val_idx]] + 1e-300).mean()
            record["val_loss"] = float(vloss)
            record["val_accuracy"] = float((np.argmax(probs, axis=1) == y[val_idx]).mean())
        history.append(record)
        log.debug("epoch %d loss %.6f acc %.4f", record["epoch"], record["loss"], record["accuracy"])
        if callback is not None:
            callback(record)
    return model.with_params(params, buffers), history


def _step(model, xb, yb, sample_weight):
    # a trailing batch of one cannot be batch-normalized; fall back to running stats
    has_bn = any(layer.kind == "batchnorm" for layer in model.layers)
    loss, grads, _, logits, new_buffers = _backprop(model, xb, yb, sample_weight, train=not (has_bn and len(xb) < 2))
    return loss, grads, logits, new_buffers

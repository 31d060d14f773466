"""Helpers shared by the three pipelines."""

import hashlib

import numpy as np

from ..errors import DataError
from ..nn.model import predict_proba
from ..rng import Rng, derive_seed


def fit_channel_stats(x):
    """Per-channel mean/std over all non-channel axes of a (N, C, ...) batch."""
    axes = (0,) + tuple(range(2, x.ndim))
    mean = x.mean(axis=axes)
    std = x.std(axis=axes)
    return mean.tolist(), np.where(std > 0, std, 1.0).tolist()


def apply_channel_stats(x, mean, std):
    """Normalize a (N, C, ...) batch with stored per-channel statistics."""
    x = np.asarray(x, dtype=np.float64)
    shape = (1, len(mean)) + (1,) * (x.ndim - 2)
    return (x - np.reshape(mean, shape)) / np.reshape(std, shape)


def model_digest(model):
    h = hashlib.sha256()
    for key in sorted(model.params):
        h.update(key.encode())
        h.update(np.ascontiguousarray(model.params[key]).tobytes())
    return h.hexdigest()[:16]


def require_classes(labels, minimum, what="class"):
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    if len(values) < 2:
        raise DataError(f"need at least 2 classes, found {len(values)}")
    small = [(v, c) for v, c in zip(values, counts) if c < minimum]
    if small:
        v, c = small[0]
        raise DataError(f"{what} {v!r} has {c} examples; at least {minimum} are required")


def stratified_split(labels, test_fraction, seed):
    """Deterministic per-class split; returns (train_idx, test_idx)."""
    labels = np.asarray(labels)
    train, test = [], []
    for i, lab in enumerate(sorted(set(labels.tolist()))):
        idx = np.flatnonzero(labels == lab)
        idx = idx[Rng(derive_seed(seed, 7, i)).permutation(len(idx))]
        k = int(round(len(idx) * test_fraction))
        test.extend(idx[:k].tolist())
        train.extend(idx[k:].tolist())
    return np.array(sorted(train), dtype=np.int64), np.array(sorted(test), dtype=np.int64)


def batched_proba(model, x, batch=64):
    if len(x) == 0:
        return np.zeros((0, len(model.label_names)))
    return np.concatenate([predict_proba(model, x[i:i + batch]) for i in range(0, len(x), batch)])

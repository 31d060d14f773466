"""Information fusion at the raw-signal, feature and decision levels."""

import math
from dataclasses import dataclass

import numpy as np

from . import dsp
from .errors import DataError

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class Decision:
    source_id: str
    posterior: np.ndarray
    weight: float = 1.0
    timestamp: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.posterior, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise DataError("posterior must be a non-empty vector")
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-6:
            raise DataError(f"posterior must be non-negative and sum to 1, got sum {p.sum():.9f}")
        if not self.weight >= 0:
            raise DataError("decision weight must be >= 0")
        object.__setattr__(self, "posterior", p)

    @property
    def label(self):
        return int(np.argmax(self.posterior))

    @property
    def confidence(self):
        return float(self.posterior.max())


@dataclass(frozen=True)
class AlignedFrame:
    timestamps: np.ndarray  # seconds, uniform grid
    blocks: tuple  # one (rows, channels) array per source


def align_raw(streams, target_rate):
    """Resample ``(timestamps_s, values, rate)`` streams onto one shared uniform grid.

    The grid runs at ``target_rate`` over the intersection of the stream spans;
    each stream is linearly interpolated at the grid times using its own
    timestamps.  ``rate`` is the stream's nominal rate, used for validation.
    """
    if not streams:
        raise DataError("align_raw needs at least one stream")
    if not target_rate > 0:
        raise DataError("target_rate must be positive")
    prepared = []
    for i, (ts, values, rate) in enumerate(streams):
        ts = np.asarray(ts, dtype=np.float64)
        v = np.asarray(values, dtype=np.float64)
        v = v.reshape(len(v), -1)
        if len(ts) == 0 or len(ts) != len(v):
            raise DataError(f"stream {i}: needs equal, non-zero numbers of timestamps and values")
        if not rate > 0:
            raise DataError(f"stream {i}: rate must be positive")
        prepared.append((ts, v))
    start = max(ts[0] for ts, _ in prepared)
    end = min(ts[-1] for ts, _ in prepared)
    if end < start:
        raise DataError(f"streams do not overlap (latest start {start:g} s > earliest end {end:g} s)")
    m = int(np.floor((end - start) * target_rate + 1e-9)) + 1
    grid = start + np.arange(m) / target_rate
    blocks = tuple(dsp.interp_columns(grid, ts, v) for ts, v in prepared)
    return AlignedFrame(grid, blocks)


def fuse_features(vectors):
    """Z-score each feature vector independently and concatenate in source order."""
    if not vectors:
        raise DataError("fuse_features needs at least one vector")
    parts = []
    for i, v in enumerate(vectors):
        v = np.asarray(v, dtype=np.float64).ravel()
        if v.size < 2:
            raise DataError(f"feature vector {i} has fewer than 2 elements")
        parts.append(dsp.zscore(v))
    return np.concatenate(parts)


def fuse_decisions(decisions):
    """Weighted log-linear pooling: ``p ∝ exp(Σ w_i log(p_i + 1e-12) / Σ w_i)``."""
    if not decisions:
        raise DataError("fuse_decisions needs at least one decision")
    sizes = {d.posterior.size for d in decisions}
    if len(sizes) != 1:
        raise DataError(f"label-set sizes differ: {sorted(sizes)}")
    w = np.array([d.weight for d in decisions], dtype=np.float64)
    if w.sum() <= 0:
        raise DataError("decision weights are all zero")
    logp = np.log(np.stack([d.posterior for d in decisions]) + LOG_FLOOR)
    # sort the weighted terms per class so the sum does not depend on input order
    terms = np.sort(w[:, None] * logp, axis=0)
    pooled = terms.sum(axis=0) / np.sort(w).sum()
    pooled = np.exp(pooled - pooled.max())
    return Decision("fused", pooled / pooled.sum(), 1.0, max(d.timestamp for d in decisions))


def temporal_smooth(history, threshold=0.8, trigger=(), k=3):
    """Debounce a stream of decisions.

    Looks at the last ``k`` decisions.  ``fired`` is true when at least
    ``ceil(k / 2)`` of them have their argmax in ``trigger`` (a collection of
    class indices) with a max posterior of at least ``threshold``.  The
    smoothed label is the majority argmax, ties going to the label seen most
    recently.  Returns ``(smoothed_label, fired)``.
    """
    if not history:
        raise DataError("temporal_smooth needs a non-empty history")
    if k < 1:
        raise DataError("k must be >= 1")
    if not 0.0 < threshold <= 1.0:
        raise DataError("threshold must lie in (0, 1]")
    window = list(history)[-k:]
    trigger = set(int(t) for t in trigger)
    labels = [d.label for d in window]
    hits = sum(1 for d in window if d.label in trigger and d.confidence >= threshold)
    counts = {}
    last_seen = {}
    for pos, lab in enumerate(labels):
        counts[lab] = counts.get(lab, 0) + 1
        last_seen[lab] = pos
    smoothed = max(counts, key=lambda lab: (counts[lab], last_seen[lab]))
    return smoothed, hits >= math.ceil(k / 2)

"""Activity / fall recognition from tri-axial accelerometer windows."""

import json
from dataclasses import dataclass, replace

import numpy as np

from .. import dsp
from ..errors import DataError
from ..fusion import Decision
from ..nn import Conv, Dense, Flatten, MaxPool, ReLU, Softmax, build_model, check_stack, predict_proba, train
from .common import apply_channel_stats, fit_channel_stats, model_digest, require_classes
from .labels import Manifest, load_manifest

DEFAULT_RATE = 50.0
DEFAULT_WINDOW_SECONDS = 1.0
MIN_WINDOWS_PER_CLASS = 4


@dataclass
class LabeledWindowSet:
    windows: list
    labels: list
    manifest: Manifest

    def __post_init__(self):
        if len(self.windows) != len(self.labels):
            raise DataError(f"{len(self.windows)} windows but {len(self.labels)} labels")
        for name in set(self.labels):
            self.manifest.group(name)

    def __len__(self):
        return len(self.windows)

    def counts(self):
        out = {name: 0 for name in self.manifest.names}
        for name in self.labels:
            out[name] += 1
        return out


def window_tensor(samples, from_rate, rate=DEFAULT_RATE, window_seconds=DEFAULT_WINDOW_SECONDS):
    """Resample (n, 3) samples to ``rate`` and center-crop/pad to one window; returns (3, W)."""
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != 3 or len(s) == 0:
        raise DataError(f"accelerometer samples must be a non-empty (n, 3) array, got {s.shape}")
    s = dsp.resample_linear(s, from_rate, rate)
    return dsp.fit_length(s, int(round(rate * window_seconds))).T.copy()


def load_activity_jsonl(path, manifest, rate=DEFAULT_RATE, window_seconds=DEFAULT_WINDOW_SECONDS):
    """Read ``{label, rate_hz, samples}`` lines into a :class:`LabeledWindowSet`.

    ``manifest`` is a :class:`Manifest` or a path to the sidecar manifest file.
    Every record is resampled to ``rate`` and cropped/padded to one window.
    """
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    windows, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                label = rec["label"]
                rate_hz = float(rec["rate_hz"])
                samples = np.asarray(rec["samples"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc})") from None
            if label not in manifest.names:
                raise DataError(f"{path}:{lineno}: label {label!r} is not in the manifest")
            if not rate_hz > 0:
                raise DataError(f"{path}:{lineno}: rate_hz must be positive")
            try:
                w = window_tensor(samples, rate_hz, rate, window_seconds)
                windows.append(dsp.AccelWindow(rate, w.T, float(rec.get("t0", 0.0))))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            labels.append(label)
    if not windows:
        raise DataError(f"{path}: no records")
    return LabeledWindowSet(windows, labels, manifest.restrict(labels))


def activity_layers(arch, width, n_classes):
    """Layer stack and input shape for the ``1d`` or ``3d`` architecture."""
    if arch == "1d":
        input_shape = (3, width)
        body = [Conv(1, 3, 16, 5, padding=2), ReLU(), MaxPool(1, 2),
                Conv(1, 16, 32, 5, padding=2), ReLU(), MaxPool(1, 2), Flatten()]
    elif arch == "3d":
        # each window as a 1 x 3 x 1 x W volume: channel, axis, (singleton), time
        input_shape = (1, 3, 1, width)
        body = [Conv(3, 1, 16, (3, 1, 5), padding=(1, 0, 2)), ReLU(), MaxPool(3, (1, 1, 2)),
                Conv(3, 16, 32, (3, 1, 5), padding=(1, 0, 2)), ReLU(), MaxPool(3, (1, 1, 2)), Flatten()]
    else:
        raise DataError(f"unknown activity architecture {arch!r}; expected '1d' or '3d'")
    _, (flat,) = check_stack(input_shape, body)
    return input_shape, body + [Dense(flat, 64), ReLU(), Dense(64, n_classes), Softmax()]


def _arch_input(x, arch):
    return x[:, None, :, None, :] if arch == "3d" else x


def dataset_tensors(dataset, rate, window_seconds):
    return np.stack([window_tensor(w.samples, w.sample_rate, rate, window_seconds) for w in dataset.windows])


def train_activity(dataset, config, arch="1d", rate=DEFAULT_RATE, window_seconds=DEFAULT_WINDOW_SECONDS,
                   callback=None):
    """Train the activity CNN; the per-epoch history is kept in ``model.meta['history']``."""
    require_classes(dataset.labels, MIN_WINDOWS_PER_CLASS, "activity class")
    label_names = tuple(n for n in dataset.manifest.names if n in set(dataset.labels))
    index = {n: i for i, n in enumerate(label_names)}
    x = dataset_tensors(dataset, rate, window_seconds)
    y = np.array([index[n] for n in dataset.labels])
    mean, std = fit_channel_stats(x)
    input_shape, layers = activity_layers(arch, x.shape[2], len(label_names))
    meta = {
        "task": "activity", "arch": arch, "rate": rate, "window_seconds": window_seconds,
        "channel_mean": mean, "channel_std": std,
        "groups": {n: dataset.manifest.group(n) for n in label_names},
    }
    model = build_model(input_shape, layers, label_names, seed=config.seed, meta=meta)
    xin = _arch_input(apply_channel_stats(x, mean, std), arch)
    model, history = train(model, xin, y, config, callback=callback)
    return replace(model, meta={**model.meta, "history": history, "model_id": model_digest(model)})


def preprocess_windows(model, tensors):
    """(N, 3, W) raw window tensors -> normalized model input."""
    m = model.meta
    return _arch_input(apply_channel_stats(tensors, m["channel_mean"], m["channel_std"]), m["arch"])


def classify_window(model, window):
    """Posterior over the model's activity labels as a :class:`Decision`."""
    m = model.meta
    x = window_tensor(window.samples, window.sample_rate, m["rate"], m["window_seconds"])
    probs = predict_proba(model, preprocess_windows(model, x[None]))[0]
    return Decision("activity", probs, 1.0, float(window.start_time))


def trigger_indices(model, group="FALL"):
    groups = model.meta.get("groups", {})
    return [i for i, n in enumerate(model.label_names) if groups.get(n) == group]

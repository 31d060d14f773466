"""Cognitive impairment screening from pen trajectories voxelized into 4D tensors."""

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .. import dsp
from ..errors import DataError
from ..nn import Conv, Dense, Flatten, MaxPool, ReLU, Softmax, build_model, check_stack, predict_proba, train
from .common import apply_channel_stats, fit_channel_stats, model_digest, require_classes

LABELS = ("not_at_risk", "at_risk")
GRID = (16, 16, 16)
MIN_CASES_PER_CLASS = 2


@dataclass(frozen=True)
class ScreeningResult:
    risk_posterior: float
    label: str
    grid_dims: tuple
    model_id: str


def cognitive_layers(dims, n_classes=2):
    body = [Conv(3, 2, 8, 3), ReLU(), MaxPool(3, 2), Flatten()]
    _, (flat,) = check_stack((2,) + tuple(dims), body)
    return body + [Dense(flat, 32), ReLU(), Dense(32, n_classes), Softmax()]


def train_cognitive(cases, config, dims=GRID, callback=None):
    """``cases`` is a list of ``(strokes, label)`` with labels from :data:`LABELS`."""
    labels = [lab for _, lab in cases]
    bad = [lab for lab in labels if lab not in LABELS]
    if bad:
        raise DataError(f"cognitive label must be one of {LABELS}, got {bad[0]!r}")
    require_classes(labels, MIN_CASES_PER_CLASS, "cognitive class")
    x = np.stack([dsp.voxelize(strokes, dims) for strokes, _ in cases])
    y = np.array([LABELS.index(lab) for lab in labels])
    mean, std = fit_channel_stats(x)
    meta = {"task": "cognitive", "grid": list(dims), "channel_mean": mean, "channel_std": std}
    model = build_model((2,) + tuple(dims), cognitive_layers(dims), LABELS, seed=config.seed, meta=meta)
    model, history = train(model, apply_channel_stats(x, mean, std), y, config, callback=callback)
    return replace(model, meta={**model.meta, "history": history, "model_id": model_digest(model)})


def screen_cognitive(model, strokes):
    dims = tuple(model.meta["grid"])
    x = apply_channel_stats(dsp.voxelize(strokes, dims)[None], model.meta["channel_mean"], model.meta["channel_std"])
    probs = predict_proba(model, x)[0]
    risk = float(probs[LABELS.index("at_risk")])
    return ScreeningResult(risk, model.label_names[int(np.argmax(probs))], dims, model.meta.get("model_id", ""))


def export_point_cloud(strokes, path):
    """Write one ``x,y,t_scaled,channel`` row per pen point (channel 0 contact, 1 hover)."""
    rows = dsp.scaled_points(strokes)
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, t, c in rows:
            fh.write(f"{x:.17g},{y:.17g},{t:.17g},{int(c)}\n")
    return len(rows)


def read_point_cloud(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def load_stroke_corpus(directory):
    """Read ``cases.jsonl`` (``case_id, label, strokes``) and the stroke files it names."""
    index = os.path.join(directory, "cases.jsonl")
    cases = []
    with open(index, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                strokes = dsp.read_strokes(os.path.join(directory, rec["strokes"]))
                cases.append((strokes, rec["label"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, OSError) as exc:
                raise DataError(f"{index}:{lineno}: {exc}") from None
    if not cases:
        raise DataError(f"{index}: no cases")
    return cases

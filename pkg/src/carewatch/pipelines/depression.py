"""Depression screening from voice: spectrogram clips through a 2D CNN."""

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .. import dsp
from ..errors import DataError
from ..fusion import Decision, fuse_decisions
from ..nn import Conv, Dense, Flatten, MaxPool, ReLU, Softmax, build_model, check_stack, train
from .common import apply_channel_stats, batched_proba, fit_channel_stats, model_digest, require_classes

LABELS = ("not_depressed", "depressed")
CLIP_SECONDS = 3.0
GRID = (64, 64)
MIN_CASES_PER_CLASS = 4


@dataclass(frozen=True)
class AudioCase:
    audio: dsp.PcmAudio
    label: str
    subject_id: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise DataError(f"audio label must be one of {LABELS}, got {self.label!r}")


def split_clips(audio, clip_seconds=CLIP_SECONDS):
    """Non-overlapping fixed-length clips; the trailing remainder is dropped."""
    n = int(round(clip_seconds * audio.sample_rate))
    count = len(audio.samples) // n
    if count == 0:
        raise DataError(f"audio of {audio.duration:.2f} s is shorter than one {clip_seconds:g} s clip")
    return [dsp.PcmAudio(audio.sample_rate, audio.samples[i * n:(i + 1) * n]) for i in range(count)]


def clip_image(clip, fft_size=1024, hop=512, grid=GRID):
    """Spectrogram of one clip average-pooled to ``grid`` (frames x bins), shape (1, *grid)."""
    spec = dsp.spectrogram(clip, fft_size, hop)
    return dsp.block_average(spec.values, grid)[None]


def depression_layers(grid, n_classes=2):
    body = [Conv(2, 1, 8, 3), ReLU(), MaxPool(2, 2), Conv(2, 8, 16, 3), ReLU(), MaxPool(2, 2), Flatten()]
    _, (flat,) = check_stack((1,) + tuple(grid), body)
    return body + [Dense(flat, 32), ReLU(), Dense(32, n_classes), Softmax()]


def _clip_tensors(cases, clip_seconds, fft_size, hop, grid):
    images, labels, owners = [], [], []
    for i, case in enumerate(cases):
        for clip in split_clips(case.audio, clip_seconds):
            images.append(clip_image(clip, fft_size, hop, grid))
            labels.append(case.label)
            owners.append(i)
    return np.stack(images), labels, owners


def train_depression(cases, config, clip_seconds=CLIP_SECONDS, fft_size=1024, hop=512, grid=GRID,
                     callback=None):
    require_classes([c.label for c in cases], MIN_CASES_PER_CLASS, "audio class")
    x, labels, _ = _clip_tensors(cases, clip_seconds, fft_size, hop, grid)
    y = np.array([LABELS.index(lab) for lab in labels])
    mean, std = fit_channel_stats(x)
    meta = {"task": "depression", "clip_seconds": clip_seconds, "fft_size": fft_size, "hop": hop,
            "grid": list(grid), "channel_mean": mean, "channel_std": std}
    model = build_model((1,) + tuple(grid), depression_layers(grid), LABELS, seed=config.seed, meta=meta)
    model, history = train(model, apply_channel_stats(x, mean, std), y, config, callback=callback)
    return replace(model, meta={**model.meta, "history": history, "model_id": model_digest(model)})


def clip_inputs(model, audio):
    m = model.meta
    imgs = [clip_image(c, m["fft_size"], m["hop"], tuple(m["grid"]))
            for c in split_clips(audio, m["clip_seconds"])]
    return apply_channel_stats(np.stack(imgs), m["channel_mean"], m["channel_std"])


def classify_clips(model, audio):
    probs = batched_proba(model, clip_inputs(model, audio))
    return [Decision(f"clip{i}", p, 1.0, i * 1000.0 * model.meta["clip_seconds"]) for i, p in enumerate(probs)]


def classify_audio(model, audio):
    """Case-level decision: per-clip posteriors pooled with equal weights."""
    return fuse_decisions(classify_clips(model, audio))


def load_audio_corpus(directory):
    """Read ``cases.jsonl`` (``subject_id, label, pcm, sample_rate``) plus the PCM files it names."""
    index = os.path.join(directory, "cases.jsonl")
    cases = []
    with open(index, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                with open(os.path.join(directory, rec["pcm"]), "rb") as pf:
                    audio = dsp.decode_pcm(pf.read(), int(rec["sample_rate"]))
                cases.append(AudioCase(audio, rec["label"], str(rec["subject_id"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, OSError) as exc:
                raise DataError(f"{index}:{lineno}: {exc}") from None
    if not cases:
        raise DataError(f"{index}: no cases")
    return cases

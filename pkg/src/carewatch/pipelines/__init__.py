"""Trainable pipelines for the activity, voice and handwriting use cases."""

from .activity import (LabeledWindowSet, classify_window, load_activity_jsonl, train_activity,
                       trigger_indices)
from .cognitive import ScreeningResult, export_point_cloud, screen_cognitive, train_cognitive
from .depression import AudioCase, classify_audio, train_depression
from .labels import UNIMIB_SHAR, ActivityLabel, Manifest, is_fall, load_manifest
from .metrics import classification_report, format_report

__all__ = [
    "ActivityLabel", "AudioCase", "LabeledWindowSet", "Manifest", "ScreeningResult", "UNIMIB_SHAR",
    "classification_report", "classify_audio", "classify_window", "export_point_cloud", "format_report",
    "is_fall", "load_activity_jsonl", "load_manifest", "screen_cognitive", "train_activity",
    "train_cognitive", "train_depression", "trigger_indices",
]

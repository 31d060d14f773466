"""Activity label manifests (label name -> ADL | FALL group)."""

import json
from dataclasses import dataclass

from ..errors import DataError

GROUPS = ("ADL", "FALL")


@dataclass(frozen=True)
class ActivityLabel:
    name: str
    group: str

    def __post_init__(self):
        if self.group not in GROUPS:
            raise DataError(f"label {self.name!r}: group must be ADL or FALL, got {self.group!r}")


@dataclass(frozen=True)
class Manifest:
    labels: tuple  # ActivityLabel, in class order
    source: str = ""

    def __post_init__(self):
        names = [lab.name for lab in self.labels]
        if len(set(names)) != len(names):
            raise DataError("manifest lists a label more than once")

    @property
    def names(self):
        return tuple(lab.name for lab in self.labels)

    def group(self, name):
        for lab in self.labels:
            if lab.name == name:
                return lab.group
        raise DataError(f"label {name!r} is not in the manifest")

    def restrict(self, names):
        """Sub-manifest keeping manifest order for the given names."""
        keep = set(names)
        return Manifest(tuple(lab for lab in self.labels if lab.name in keep), self.source)

    def to_dict(self):
        return {"labels": [{"name": lab.name, "group": lab.group} for lab in self.labels],
                "source": self.source}

    @classmethod
    def from_dict(cls, d):
        raw = d.get("labels") if isinstance(d, dict) else None
        if isinstance(raw, dict):
            raw = [{"name": k, "group": v} for k, v in raw.items()]
        if not isinstance(raw, list) or not raw:
            raise DataError("manifest needs a non-empty 'labels' list")
        try:
            labels = tuple(ActivityLabel(str(e["name"]), str(e["group"])) for e in raw)
        except (KeyError, TypeError):
            raise DataError("manifest label entries need 'name' and 'group'") from None
        return cls(labels, str(d.get("source", "")))


def load_manifest(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid manifest JSON ({exc.msg}, line {exc.lineno})") from None
    return Manifest.from_dict(data)


def save_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")


def is_fall(label, manifest):
    name = label.name if isinstance(label, ActivityLabel) else label
    return manifest.group(name) == "FALL"


# 9 activities of daily living + 8 fall types, the UniMiB-SHAR taxonomy
UNIMIB_SHAR = Manifest(
    tuple(ActivityLabel(n, "ADL") for n in (
        "StandingUpFromSitting", "StandingUpFromLaying", "Walking", "Running", "GoingUpstairs",
        "Jumping", "GoingDownstairs", "LyingDownFromStanding", "SittingDown"))
    + tuple(ActivityLabel(n, "FALL") for n in (
        "FallForward", "FallRight", "FallBackward", "HittingObstacle", "FallWithProtectionStrategies",
        "FallBackwardSittingChair", "Syncope", "FallLeft")),
    "UniMiB-SHAR 17-class taxonomy (9 ADL, 8 falls)",
)

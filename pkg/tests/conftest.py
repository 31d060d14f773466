import numpy as np
import pytest

from carewatch import simulator as sim
from carewatch.nn import TrainConfig, _kernels_numpy, kernels
from carewatch.pipelines import activity
from carewatch.pipelines.labels import Manifest

try:
    from carewatch.nn import _kernels_numba
except ImportError:  # pragma: no cover
    _kernels_numba = None

BACKENDS = ["numpy"] + (["numba"] if _kernels_numba is not None else [])
_NAMES = ("conv3d_forward", "conv3d_backward", "maxpool3d_forward", "maxpool3d_backward")


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route the nn ops through one kernel implementation for the duration of a test."""
    impl = _kernels_numba if request.param == "numba" else _kernels_numpy
    for name in _NAMES:
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


def activity_set(counts, seed, rate=50.0):
    recs = sim.activity_records(counts, seed, rate)
    manifest = Manifest.from_dict(sim.activity_manifest(list(counts)))
    from carewatch.dsp import AccelWindow

    windows = [AccelWindow(r["rate_hz"], np.asarray(r["samples"])) for r in recs]
    return activity.LabeledWindowSet(windows, [r["label"] for r in recs], manifest)


@pytest.fixture(scope="session")
def activity_model():
    """Small 3-class model, good enough for service and pipeline tests."""
    data = activity_set({"walking": 40, "idle": 40, "fall": 40}, seed=11)
    return activity.train_activity(data, TrainConfig(epochs=10, seed=0))


# acceptance results, filled in by test_acceptance.py and echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{status}] criterion {n:>2}: {title} -- {detail}")

"""Patient monitoring state machine behind the HTTP layer.

Packets for one patient are processed under that patient's lock, so their
decision history (and therefore alerting) follows arrival order; different
patients proceed in parallel.  All log writes go through the store's single
writer lock.
"""

import bisect
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .. import dsp
from ..errors import CareWatchError, DataError
from ..fusion import Decision, temporal_smooth
from ..pipelines.activity import classify_window, trigger_indices

MIN_RATE_HZ = 10.0
MAX_RATE_HZ = 500.0
SAMPLE_TOLERANCE = 0.10


class NotFound(CareWatchError):
    pass


class Conflict(CareWatchError):
    pass


def now_ms():
    return int(time.time() * 1000)


@dataclass
class PatientRecord:
    patient_id: str
    name: str
    fall_risk: bool
    registered_at: int


class _PatientState:
    def __init__(self, record, k):
        self.record = record
        self.lock = threading.Lock()
        self.events = []
        self.starts = []
        self.history = deque(maxlen=k)
        self.fired = False


def validate_packet(body, window_seconds=1.0):
    """Check an accelerometer packet body; returns ``(t0, rate, samples, location)``."""
    if not isinstance(body, dict):
        raise DataError("packet body must be a JSON object")
    for key in ("t0", "rate_hz", "samples"):
        if key not in body:
            raise DataError(f"packet is missing {key!r}")
    try:
        t0 = float(body["t0"])
        rate = float(body["rate_hz"])
    except (TypeError, ValueError):
        raise DataError("t0 and rate_hz must be numbers") from None
    if not np.isfinite(t0):
        raise DataError("t0 must be finite")
    if not MIN_RATE_HZ <= rate <= MAX_RATE_HZ:
        raise DataError(f"rate_hz {rate:g} outside [{MIN_RATE_HZ:g}, {MAX_RATE_HZ:g}]")
    try:
        samples = np.asarray(body["samples"], dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError("samples must be a list of [x, y, z] numbers") from None
    if samples.ndim != 2 or samples.shape[1] != 3:
        raise DataError(f"samples must be [[x, y, z], ...], got shape {samples.shape}")
    expected = rate * window_seconds
    if abs(len(samples) - expected) > SAMPLE_TOLERANCE * expected:
        raise DataError(f"sample count {len(samples)} is not within 10% of rate_hz x {window_seconds:g} s "
                        f"= {expected:g}")
    if not np.all(np.isfinite(samples)):
        raise DataError("samples must be finite")
    if np.abs(samples).max() > dsp.ACCEL_RANGE_G:
        raise DataError(f"sample magnitude exceeds the {dsp.ACCEL_RANGE_G:g} g sensor range")
    location = body.get("location")
    if location is not None and not isinstance(location, str):
        raise DataError("location must be a string tag")
    return t0, rate, samples, location


class MonitorEngine:
    def __init__(self, model, store, config):
        if model.meta.get("task") != "activity":
            raise CareWatchError("the service needs an activity model")
        self.model = model
        self.store = store
        self.config = config
        self.trigger = trigger_indices(model)
        self._patients = {}
        self._registry_lock = threading.Lock()
        self._alerts = []
        self._alert_lock = threading.Condition()
        self._next_alert = 1
        self.closed = False
        self._recover(store.recover())

    # --- recovery ------------------------------------------------------------

    def _recover(self, logs):
        for rec in logs["patients"]:
            p = PatientRecord(rec["patient_id"], rec["name"], bool(rec["fall_risk"]), int(rec["registered_at"]))
            self._patients[p.patient_id] = _PatientState(p, self.config.alert_k)
        for ev in logs["events"]:
            st = self._patients.get(ev["patient_id"])
            if st is None:
                continue
            st.events.append(ev)
            st.starts.append(ev["start"])
            self._push_decision(st, Decision("activity", ev["posterior"], 1.0, ev["start"]))
        for al in logs["alerts"]:
            self._alerts.append(al)
            self._next_alert = max(self._next_alert, int(al["alert_id"]) + 1)

    # --- patients --------------------------------------------------------------

    def register(self, body):
        if not isinstance(body, dict):
            raise DataError("body must be a JSON object")
        name = body.get("name")
        if not isinstance(name, str) or not name.strip():
            raise DataError("name must be a non-empty string")
        fall_risk = body.get("fall_risk", False)
        if not isinstance(fall_risk, bool):
            raise DataError("fall_risk must be a boolean")
        explicit = body.get("patient_id")
        if explicit is not None and (not isinstance(explicit, str) or not explicit):
            raise DataError("patient_id must be a non-empty string")
        with self._registry_lock:
            if explicit is not None:
                if explicit in self._patients:
                    raise Conflict(f"patient {explicit!r} already exists")
                pid = explicit
            else:
                n = len(self._patients) + 1
                while f"p{n:06d}" in self._patients:
                    n += 1
                pid = f"p{n:06d}"
            record = PatientRecord(pid, name, fall_risk, now_ms())
            self.store.append("patients", asdict(record))
            self._patients[pid] = _PatientState(record, self.config.alert_k)
        return asdict(record)

    def patient(self, pid):
        st = self._patients.get(pid)
        if st is None:
            raise NotFound(f"unknown patient {pid!r}")
        return st

    def patients(self):
        return [asdict(st.record) for st in list(self._patients.values())]

    # --- ingestion -------------------------------------------------------------

    def _push_decision(self, st, decision):
        st.history.append(decision)
        label, fired = temporal_smooth(st.history, self.config.alert_threshold, self.trigger, self.config.alert_k)
        rising = fired and not st.fired
        st.fired = fired
        return label, rising

    def ingest(self, pid, body):
        """Classify one packet; returns ``(event, alert_or_None)``."""
        st = self.patient(pid)
        t0, rate, samples, location = validate_packet(body, self.config.window_seconds)
        window = dsp.AccelWindow(rate, samples, t0)
        with st.lock:
            if st.starts and t0 <= st.starts[-1]:
                raise DataError(f"t0 {t0:g} is not later than the previous packet's t0 {st.starts[-1]:g}")
            decision = classify_window(self.model, window)
            label = self.model.label_names[decision.label]
            event = {
                "patient_id": pid,
                "name": st.record.name,
                "label": label,
                "group": self.model.meta["groups"].get(label, "ADL"),
                "posterior_max": decision.confidence,
                "posterior": decision.posterior.tolist(),
                "start": t0,
                "end": window.end_time,
                "context": {"server_time": now_ms(), "location": location},
            }
            self.store.append("events", event)
            st.events.append(event)
            st.starts.append(t0)
            smoothed, rising = self._push_decision(st, decision)
            alert = None
            if rising and st.record.fall_risk:
                alert = self._emit_alert(st, smoothed)
        return event, alert

    def _emit_alert(self, st, smoothed):
        k = self.config.alert_k
        names = self.model.label_names
        label = names[smoothed]
        if smoothed not in self.trigger:
            hits = [d for d in st.history if d.label in self.trigger]
            label = names[hits[-1].label]
        window = [{"label": e["label"], "posterior_max": e["posterior_max"], "start": e["start"], "end": e["end"]}
                  for e in st.events[-k:]]
        with self._alert_lock:
            alert = {"alert_id": self._next_alert, "patient_id": st.record.patient_id,
                     "fired_at": now_ms(), "label": label, "window": window}
            self.store.append("alerts", alert)
            self._next_alert += 1
            self._alerts.append(alert)
            self._alert_lock.notify_all()
        return alert

    # --- queries ---------------------------------------------------------------

    def events(self, pid, since=0.0, limit=100):
        st = self.patient(pid)
        with st.lock:
            i = bisect.bisect_left(st.starts, since)
            return list(st.events[i:i + limit])

    def alerts(self, since_id=0):
        with self._alert_lock:
            return [a for a in self._alerts if a["alert_id"] > since_id]

    @property
    def last_alert_id(self):
        with self._alert_lock:
            return self._alerts[-1]["alert_id"] if self._alerts else 0

    def wait_alerts(self, since_id, timeout):
        """Block until an alert newer than ``since_id`` exists, the timeout passes, or shutdown."""
        with self._alert_lock:
            self._alert_lock.wait_for(
                lambda: self.closed or (self._alerts and self._alerts[-1]["alert_id"] > since_id), timeout)
            return [a for a in self._alerts if a["alert_id"] > since_id]

    def close(self):
        with self._alert_lock:
            self.closed = True
            self._alert_lock.notify_all()

"""Deterministic synthetic sensor traces and timed replay against the service.

Every generator draws from :class:`carewatch.rng.Rng` so a ``(spec, seed)``
pair yields bit-identical output everywhere.
"""

import json
import logging
import os
import socket
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from urllib.parse import urlsplit

import numpy as np

from . import dsp
from .errors import DataError
from .rng import Rng, derive_seed

log = logging.getLogger(__name__)

ACCEL_KINDS = ("walking", "idle", "fall")
AUDIO_KINDS = ("tone_low", "tone_high")
STROKE_KINDS = ("spiral_smooth", "spiral_tremor")
KINDS = ACCEL_KINDS + AUDIO_KINDS + STROKE_KINDS

DEFAULT_RATES = {"accel": 50.0, "audio": 44100, "strokes": 100.0}
RATE_BOUNDS = {"accel": (10.0, 500.0), "audio": (8000, 192000), "strokes": (20.0, 1000.0)}

# labels the synthetic kinds stand for in each pipeline
AUDIO_LABELS = {"tone_low": "depressed", "tone_high": "not_depressed"}
STROKE_LABELS = {"spiral_tremor": "at_risk", "spiral_smooth": "not_at_risk"}
ACTIVITY_GROUPS = {"walking": "ADL", "idle": "ADL", "fall": "FALL"}

GRAVITY_G = 1.0
NOISE_G = 0.05


def modality(kind):
    if kind in ACCEL_KINDS:
        return "accel"
    if kind in AUDIO_KINDS:
        return "audio"
    if kind in STROKE_KINDS:
        return "strokes"
    raise DataError(f"unknown trace kind {kind!r}; expected one of {', '.join(KINDS)}")


@dataclass(frozen=True)
class TraceSpec:
    kind: str
    duration: float
    rate: float = None
    seed: int = 0
    amplitude: dict = field(default_factory=dict)

    def __post_init__(self):
        mod = modality(self.kind)
        if self.rate is None:
            object.__setattr__(self, "rate", DEFAULT_RATES[mod])
        if not self.duration > 0:
            raise DataError("duration must be > 0")
        lo, hi = RATE_BOUNDS[mod]
        if not lo <= self.rate <= hi:
            raise DataError(f"{mod} rate {self.rate} outside [{lo}, {hi}]")

    @property
    def n_samples(self):
        return int(round(self.duration * self.rate))

    def param(self, name, default):
        return self.amplitude.get(name, default)


# --- accelerometer -----------------------------------------------------------

def synth_accel(spec):
    """Return ``(timestamps_ms, samples)`` with samples shaped (n, 3) in g.

    * walking: gravity on z plus a 2 Hz sinusoid (0.5 g) with seeded phase
    * idle:    gravity plus noise
    * fall:    idle, with a 0.2 s near-0 g free fall immediately followed by a
               0.3 s half-sine impact peaking at ``peak`` (3.5 g) at a seeded
               offset
    All kinds add white noise with sigma 0.05 g on every axis.
    """
    if modality(spec.kind) != "accel":
        raise DataError(f"{spec.kind!r} is not an accelerometer kind")
    n = spec.n_samples
    if n < 1:
        raise DataError("trace shorter than one sample")
    rng = Rng(derive_seed(spec.seed, ACCEL_KINDS.index(spec.kind) + 1))
    t = np.arange(n) / spec.rate
    noise = rng.normal(3 * n, 0.0, spec.param("noise", NOISE_G)).reshape(n, 3)
    base = np.zeros((n, 3))
    base[:, 2] = GRAVITY_G
    if spec.kind == "walking":
        phase = rng.uniform(1, 0.0, 2 * np.pi)[0]
        freq = spec.param("freq", 2.0)
        base[:, 2] += spec.param("amp", 0.5) * np.sin(2 * np.pi * freq * t + phase)
    elif spec.kind == "fall":
        ff = int(round(0.2 * spec.rate))
        imp = int(round(0.3 * spec.rate))
        sig = ff + imp
        if sig > n:
            raise DataError("fall trace must be at least 0.5 s long")
        margin = min(int(round(0.1 * spec.rate)), (n - sig) // 2)
        lo, hi = margin, n - sig - margin
        start = int(rng.integers(1, lo, hi + 1)[0]) if hi > lo else lo
        base[start:start + ff] = 0.0
        noise[start:start + ff] *= 0.5
        shape = np.sin(np.pi * np.arange(imp) / max(imp - 1, 1))
        peak = spec.param("peak", 3.5)
        base[start + ff:start + sig, 2] = GRAVITY_G + (peak - GRAVITY_G) * shape
        base[start + ff:start + sig, 0] = 0.6 * (peak - GRAVITY_G) * shape
        noise[start + ff:start + sig] = np.abs(noise[start + ff:start + sig])
    samples = np.clip(base + noise, -dsp.ACCEL_RANGE_G, dsp.ACCEL_RANGE_G)
    return t * 1000.0, samples


# --- audio -----------------------------------------------------------------

def synth_audio(spec):
    """Band-limited harmonic tones with a slow amplitude envelope plus noise.

    ``tone_low`` draws fundamentals in 100-250 Hz, ``tone_high`` in
    1200-2500 Hz; each has three harmonics with amplitudes 1, 1/2, 1/3.
    """
    if modality(spec.kind) != "audio":
        raise DataError(f"{spec.kind!r} is not an audio kind")
    rate = int(spec.rate)
    n = spec.n_samples
    rng = Rng(derive_seed(spec.seed, 10 + AUDIO_KINDS.index(spec.kind)))
    lo, hi = (100.0, 250.0) if spec.kind == "tone_low" else (1200.0, 2500.0)
    f0 = rng.uniform(1, lo, hi)[0]
    phases = rng.uniform(3, 0.0, 2 * np.pi)
    env_f = rng.uniform(1, 2.0, 5.0)[0]
    t = np.arange(n) / rate
    sig = sum((1.0 / (h + 1)) * np.sin(2 * np.pi * f0 * (h + 1) * t + phases[h]) for h in range(3))
    env = 0.6 + 0.4 * np.sin(2 * np.pi * env_f * t)
    sig = spec.param("amp", 0.3) * sig * env / 1.8333333333333333
    sig = sig + rng.normal(n, 0.0, spec.param("noise", 0.02))
    return dsp.PcmAudio(rate, np.clip(sig, -1.0, 1.0))


# --- pen strokes -------------------------------------------------------------

def synth_strokes(spec):
    """Archimedean spiral drawn at ``spec.rate`` Hz.

    The base geometry (center, radius, turns, rotation, pen-lift positions)
    depends only on the seed, so smooth and tremor spirals with equal specs
    share a path; the tremor kind adds an 8 Hz radial jitter, positional noise
    and frequent pen lifts spread along the path (hover points).
    """
    if modality(spec.kind) != "strokes":
        raise DataError(f"{spec.kind!r} is not a pen-stroke kind")
    n = spec.n_samples
    if n < 2:
        raise DataError("spiral needs at least 2 points")
    rng = Rng(derive_seed(spec.seed, 20))
    cx, cy = rng.uniform(2, 0.45, 0.55)
    r_max = rng.uniform(1, 0.3, 0.4)[0]
    turns = rng.uniform(1, 2.5, 4.0)[0]
    rot = rng.uniform(1, 0.0, 2 * np.pi)[0]
    lift_pos = rng.uniform(12, 0.05, 0.95)
    jitter_phase = rng.uniform(1, 0.0, 2 * np.pi)[0]
    jitter_noise = rng.normal(2 * n, 0.0, 1.0).reshape(n, 2)

    u = np.arange(n) / (n - 1)
    theta = 2 * np.pi * turns * u
    r = r_max * u
    t = np.arange(n) / spec.rate
    tremor = spec.kind == "spiral_tremor"
    if tremor:
        r = r + spec.param("tremor_amp", 0.012) * np.sin(2 * np.pi * 8.0 * t + jitter_phase)
    x = cx + r * np.cos(theta + rot)
    y = cy + r * np.sin(theta + rot)
    if tremor:
        x = x + 0.003 * jitter_noise[:, 0]
        y = y + 0.003 * jitter_noise[:, 1]
    hover = np.zeros(n, dtype=bool)
    if tremor:
        # frequent short lifts spread along the whole path: one per 0.4 s slot
        width = max(1, int(round(0.15 * spec.rate)))
        slot = max(width + 1, int(round(0.4 * spec.rate)))
        starts = [int(k * slot + lift_pos[k % len(lift_pos)] * (slot - width)) for k in range(n // slot)]
    else:
        width = max(1, int(round(0.08 * spec.rate)))
        starts = [int(p * n) for p in lift_pos[:2]]
    for s in starts:
        hover[s:s + width] = True
    pts = np.column_stack([np.clip(x, 0.0, 1.0), np.clip(y, 0.0, 1.0), t * 1000.0])
    return [dsp.PenStroke(pts, hover)]


def inject_falls(samples, rate, start_second, count, seed):
    """Overwrite ``count`` whole seconds from ``start_second`` with 1 s fall windows."""
    out = np.array(samples, dtype=np.float64, copy=True)
    w = int(round(rate))
    for j in range(count):
        lo = (start_second + j) * w
        if lo + w > len(out):
            raise DataError(f"fall second {start_second + j} lies beyond the {len(out) / rate:g} s trace")
        out[lo:lo + w] = synth_accel(TraceSpec("fall", 1.0, rate, derive_seed(seed, 99, j)))[1]
    return out


def path_length(strokes):
    total = 0.0
    for s in strokes:
        d = np.diff(s.points[:, :2], axis=0)
        total += float(np.sqrt((d * d).sum(axis=1)).sum())
    return total


# --- datasets ----------------------------------------------------------------

def activity_records(counts, seed, rate=50.0, duration=1.0):
    """One ``{label, rate_hz, samples}`` record per synthetic window.

    ``counts`` maps accelerometer kind -> number of windows.
    """
    records = []
    for kind, count in counts.items():
        k = ACCEL_KINDS.index(kind)
        for i in range(count):
            _, samples = synth_accel(TraceSpec(kind, duration, rate, derive_seed(seed, k, i)))
            records.append({"label": kind, "rate_hz": rate, "samples": samples.tolist()})
    return records


def split_counts(total, kinds):
    base, extra = divmod(total, len(kinds))
    return {k: base + (1 if i < extra else 0) for i, k in enumerate(kinds)}


def write_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def activity_manifest(kinds=ACCEL_KINDS):
    return {"labels": [{"name": k, "group": ACTIVITY_GROUPS[k]} for k in kinds],
            "source": "carewatch synthetic accelerometer simulator"}


def audio_cases(counts, seed, duration=6.0, rate=44100):
    """``(subject_id, label, PcmAudio)`` triples for the depression harness."""
    out = []
    for kind, count in counts.items():
        k = AUDIO_KINDS.index(kind)
        for i in range(count):
            audio = synth_audio(TraceSpec(kind, duration, rate, derive_seed(seed, k, i)))
            out.append((f"{kind}-{i:03d}", AUDIO_LABELS[kind], audio))
    return out


def stroke_cases(counts, seed, duration=8.0, rate=100.0):
    """``(case_id, label, strokes)`` triples for the cognitive harness."""
    out = []
    for kind, count in counts.items():
        k = STROKE_KINDS.index(kind)
        for i in range(count):
            strokes = synth_strokes(TraceSpec(kind, duration, rate, derive_seed(seed, k, i)))
            out.append((f"{kind}-{i:03d}", STROKE_LABELS[kind], strokes))
    return out


def write_audio_corpus(cases, directory):
    os.makedirs(directory, exist_ok=True)
    index = []
    for subject, label, audio in cases:
        name = f"{subject}.pcm"
        with open(os.path.join(directory, name), "wb") as fh:
            fh.write(dsp.encode_pcm(audio))
        index.append({"subject_id": subject, "label": label, "pcm": name, "sample_rate": audio.sample_rate})
    write_jsonl(index, os.path.join(directory, "cases.jsonl"))


def write_stroke_corpus(cases, directory):
    os.makedirs(directory, exist_ok=True)
    index = []
    for case_id, label, strokes in cases:
        name = f"{case_id}.txt"
        dsp.write_strokes(strokes, os.path.join(directory, name))
        index.append({"case_id": case_id, "label": label, "strokes": name})
    write_jsonl(index, os.path.join(directory, "cases.jsonl"))


# --- replay ------------------------------------------------------------------

class ReplayError(RuntimeError):
    pass


@dataclass
class ReplayReport:
    packets_sent: int = 0
    events: list = field(default_factory=list)
    response_alerts: list = field(default_factory=list)
    stream_alerts: list = field(default_factory=list)
    alert_packets: list = field(default_factory=list)  # packet index whose response carried an alert
    aborted: bool = False
    error: str = ""

    def to_dict(self):
        labels = [e["label"] for e in self.events]
        return {"packets_sent": self.packets_sent, "events": len(self.events), "labels": labels,
                "alerts_in_responses": len(self.response_alerts),
                "alerts_on_stream": len(self.stream_alerts),
                "alert_ids": [a["alert_id"] for a in self.stream_alerts],
                "alert_packets": self.alert_packets,
                "aborted": self.aborted, "error": self.error}


def load_trace(path):
    """Concatenate the samples of every record in an activity JSONL trace file."""
    rate, chunks = None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                r = float(rec["rate_hz"])
                s = np.asarray(rec["samples"], dtype=np.float64).reshape(-1, 3)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed trace record ({exc})") from None
            if rate is not None and r != rate:
                raise DataError(f"{path}:{lineno}: rate {r} differs from earlier records ({rate})")
            rate = r
            chunks.append(s)
    if not chunks:
        raise DataError(f"{path}: empty trace")
    return rate, np.concatenate(chunks)


def slice_packets(samples, rate, seconds=1.0):
    """Consecutive non-overlapping packets; an N-second trace yields floor(N) packets."""
    w = int(round(rate * seconds))
    return [samples[i * w:(i + 1) * w] for i in range(len(samples) // w)]


class _AlertListener(threading.Thread):
    """Reads ``/v1/alerts/stream`` over a raw socket until stopped."""

    def __init__(self, base_url, patient_id):
        super().__init__(daemon=True, name="alert-listener")
        u = urlsplit(base_url)
        self.host, self.port = u.hostname, u.port or 80
        self.patient_id = patient_id
        self.alerts = []
        self.ready = threading.Event()
        self._halt = threading.Event()
        self._lock = threading.Lock()
        self.failed = None

    def run(self):
        try:
            sock = socket.create_connection((self.host, self.port), timeout=5)
        except OSError as exc:
            self.failed = exc
            self.ready.set()
            return
        try:
            sock.sendall(f"GET /v1/alerts/stream HTTP/1.1\r\nHost: {self.host}\r\n\r\n".encode())
            sock.settimeout(0.1)
            buf = b""
            in_body = False
            while not self._halt.is_set():
                try:
                    chunk = sock.recv(65536)
                except socket.timeout:
                    continue
                if not chunk:
                    break
                buf += chunk
                if not in_body:
                    if b"\r\n\r\n" not in buf:
                        continue
                    _, buf = buf.split(b"\r\n\r\n", 1)
                    in_body = True
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    self._handle(line)
        finally:
            sock.close()
            self.ready.set()

    def _handle(self, line):
        if not line.strip():
            return
        rec = json.loads(line)
        if "stream" in rec:
            self.ready.set()
        elif "alert_id" in rec and rec.get("patient_id") == self.patient_id:
            with self._lock:
                self.alerts.append(rec)

    def count(self):
        with self._lock:
            return len(self.alerts)

    def stop(self):
        self._halt.set()


def _post_json(url, payload, retries=3, backoff=0.2, timeout=30):
    data = json.dumps(payload).encode("utf-8")
    attempt = 0
    while True:
        req = urllib.request.Request(url, data=data, method="POST", headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return resp.status, json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            return exc.code, exc.read().decode("utf-8", "replace")
        except (urllib.error.URLError, ConnectionError, TimeoutError) as exc:
            attempt += 1
            if attempt > retries:
                raise ReplayError(f"cannot reach {url} after {retries} retries: {exc}") from None
            log.warning("POST %s failed (%s); retry %d/%d", url, exc, attempt, retries)
            time.sleep(backoff * attempt)


def replay(trace, base_url, patient_id, speed_factor=0.0, t0=None, location=None, grace=2.0,
           retries=3, backoff=0.2):
    """Post a trace to the service as 1-second packets, like a phone would.

    ``trace`` is a JSONL trace path, a :class:`TraceSpec` or a ``(rate, samples)``
    pair.  With ``speed_factor`` 0 packets go out back to back, otherwise one
    every ``1 / speed_factor`` seconds.  Alerts are collected from the alert
    stream, which is opened before the first packet is sent.
    """
    if isinstance(trace, (str, os.PathLike)):
        rate, samples = load_trace(trace)
    elif isinstance(trace, TraceSpec):
        rate = trace.rate
        samples = synth_accel(trace)[1]
    else:
        rate, samples = trace
    if speed_factor < 0:
        raise DataError("speed_factor must be >= 0")
    base_url = base_url.rstrip("/")
    url = f"{base_url}/v1/patients/{patient_id}/accel"
    report = ReplayReport()
    listener = _AlertListener(base_url, patient_id)
    listener.start()
    listener.ready.wait(5)
    if listener.failed is not None:
        log.warning("alert stream unavailable: %s", listener.failed)
    start_ms = int(time.time() * 1000) if t0 is None else t0
    began = time.monotonic()
    try:
        for i, packet in enumerate(slice_packets(samples, rate)):
            if speed_factor > 0:
                delay = began + i / speed_factor - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            body = {"t0": start_ms + 1000 * i, "rate_hz": rate, "samples": packet.tolist()}
            if location:
                body["location"] = location
            try:
                status, resp = _post_json(url, body, retries, backoff)
            except ReplayError as exc:
                report.aborted = True
                report.error = str(exc)
                break
            if status != 202:
                report.aborted = True
                report.error = resp if isinstance(resp, str) else json.dumps(resp)
                break
            report.packets_sent += 1
            report.events.append(resp["event"])
            if resp.get("alert"):
                report.response_alerts.append(resp["alert"])
                report.alert_packets.append(i)
        deadline = time.monotonic() + grace
        while listener.count() < len(report.response_alerts) and time.monotonic() < deadline:
            time.sleep(0.02)
    finally:
        listener.stop()
        listener.join(2)
    report.stream_alerts = list(listener.alerts)
    return report

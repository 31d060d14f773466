"""Deterministic signal preprocessing for audio, accelerometer and pen data.

All functions are pure; inputs are never modified in place.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError

ACCEL_RANGE_G = 16.0
STATE_CODES = {"c": "contact", "h": "hover"}


@dataclass(frozen=True)
class PcmAudio:
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise DataError("sample_rate must be positive")
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise DataError("audio must be mono (1-D samples)")
        if s.size and (not np.all(np.isfinite(s)) or np.abs(s).max() > 1.0):
            raise DataError("audio samples must be finite and lie in [-1, 1]")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray  # frames x bins, dB
    fft_size: int
    hop: int
    sample_rate: int

    @property
    def frame_count(self):
        return self.values.shape[0]

    @property
    def bin_count(self):
        return self.values.shape[1]

    def bin_frequency(self, k):
        return k * self.sample_rate / self.fft_size


@dataclass(frozen=True)
class AccelWindow:
    sample_rate: float
    samples: np.ndarray  # (W, 3) in g
    start_time: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != 3:
            raise DataError(f"accelerometer samples must be (W, 3), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DataError("accelerometer samples must be finite")
        if s.size and np.abs(s).max() > ACCEL_RANGE_G:
            raise DataError(f"accelerometer value exceeds the {ACCEL_RANGE_G:g} g sensor range")
        if not self.sample_rate > 0:
            raise DataError("sample_rate must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def end_time(self):
        return self.start_time + 1000.0 * len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class PenStroke:
    """Pen samples as an (n, 3) array of ``(x, y, t_ms)`` plus a hover mask."""

    points: np.ndarray
    hover: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        h = np.asarray(self.hover, dtype=bool).reshape(-1)
        if len(p) != len(h):
            raise DataError("points and hover flags differ in length")
        if len(p) and (p[:, :2].min() < 0.0 or p[:, :2].max() > 1.0):
            raise DataError("pen coordinates must lie in [0, 1]")
        if len(p) > 1 and np.any(np.diff(p[:, 2]) <= 0):
            raise DataError("pen timestamps must be strictly increasing")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "hover", h)

    def __len__(self):
        return len(self.points)


# --- audio -----------------------------------------------------------------

def decode_pcm(data, sample_rate):
    """Headerless 16-bit little-endian signed mono PCM -> samples / 32768."""
    if len(data) % 2:
        raise DataError(f"PCM byte length {len(data)} is odd")
    if int(sample_rate) <= 0:
        raise DataError("sample_rate must be positive")
    ints = np.frombuffer(bytes(data), dtype="<i2")
    return PcmAudio(int(sample_rate), ints.astype(np.float64) / 32768.0)


def encode_pcm(audio):
    q = np.round(np.asarray(audio.samples) * 32768.0)
    return np.clip(q, -32768, 32767).astype("<i2").tobytes()


def hann(n):
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(samples, fft_size, hop):
    n = len(samples)
    if n < fft_size:
        raise DataError(f"signal of {n} samples is shorter than fft_size {fft_size}")
    count = (n - fft_size) // hop + 1
    idx = np.arange(fft_size)[None, :] + hop * np.arange(count)[:, None]
    return samples[idx]


def stft(audio, fft_size=1024, hop=512):
    """Complex one-sided spectra of Hann-windowed frames, shape (frames, fft_size/2 + 1)."""
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise DataError(f"fft_size {fft_size} is not a power of two")
    if hop < 1:
        raise DataError("hop must be >= 1")
    frames = frame_signal(audio.samples, fft_size, hop) * hann(fft_size)
    return np.fft.rfft(frames, axis=1)


def spectrogram(audio, fft_size=1024, hop=512, floor_db=-80.0):
    """Log-magnitude spectrogram ``max(20 log10(|X| + 1e-10), floor_db)``."""
    mag = np.abs(stft(audio, fft_size, hop))
    db = np.maximum(20.0 * np.log10(mag + 1e-10), floor_db)
    return Spectrogram(db, fft_size, hop, audio.sample_rate)


def block_average(matrix, shape):
    """Average-pool a 2-D array onto ``shape`` using near-equal contiguous blocks.

    Output cell ``i`` along an axis of length ``n`` averages input rows
    ``floor(i n / m)`` up to ``floor((i + 1) n / m)``.
    """
    m = np.asarray(matrix, dtype=np.float64)
    for axis, target in enumerate(shape):
        n = m.shape[axis]
        if target > n:
            raise DataError(f"cannot pool axis of length {n} up to {target}")
        edges = (np.arange(target + 1) * n) // target
        sums = np.add.reduceat(m, edges[:-1], axis=axis)
        counts = np.diff(edges).reshape([-1 if a == axis else 1 for a in range(m.ndim)])
        m = sums / counts
    return m


# --- accelerometer ---------------------------------------------------------

def accel_magnitude(window):
    s = window.samples if isinstance(window, AccelWindow) else np.asarray(window, dtype=np.float64)
    return np.sqrt((s * s).sum(axis=1))


def window_count(n, rate, window_seconds, overlap_fraction):
    w = int(round(rate * window_seconds))
    hop = max(1, int(round(w * (1.0 - overlap_fraction))))
    return 0 if n < w or w < 1 else (n - w) // hop + 1


def window_stream(samples, rate, window_seconds=1.0, overlap_fraction=0.0, start_time=0.0):
    """Cut an (N, 3) stream into fixed-length windows; a trailing partial window is dropped."""
    if not 0.0 <= overlap_fraction < 1.0:
        raise DataError("overlap_fraction must lie in [0, 1)")
    if not rate > 0:
        raise DataError("rate must be positive")
    s = np.asarray(samples, dtype=np.float64)
    w = int(round(rate * window_seconds))
    if w < 1:
        raise DataError("window shorter than one sample")
    hop = max(1, int(round(w * (1.0 - overlap_fraction))))
    out = []
    for start in range(0, len(s) - w + 1, hop):
        out.append(AccelWindow(rate, s[start:start + w], start_time + 1000.0 * start / rate))
    return out


def zscore(values):
    """Population z-score; a constant input maps to zeros."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise DataError("z-score needs at least 2 values")
    sd = v.std()
    if sd == 0.0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def resample_linear(values, from_rate, to_rate):
    """Linearly interpolate onto a ``to_rate`` grid spanning the same duration.

    The output grid starts at the first sample and keeps every point inside
    ``[0, (n - 1) / from_rate]``.  2-D input is resampled column-wise.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape[0] == 0:
        raise DataError("cannot resample an empty signal")
    if not (from_rate > 0 and to_rate > 0):
        raise DataError("rates must be positive")
    if from_rate == to_rate:
        return v.copy()
    n = v.shape[0]
    m = int(np.floor((n - 1) * to_rate / from_rate + 1e-9)) + 1
    t_new = np.arange(m) / to_rate
    return interp_columns(t_new, np.arange(n) / from_rate, v)


def interp_columns(t_new, t_old, values):
    """Linear interpolation of each column of ``values`` at ``t_new``."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        return np.interp(t_new, t_old, v)
    return np.stack([np.interp(t_new, t_old, v[:, c]) for c in range(v.shape[1])], axis=1)


def fit_length(values, length):
    """Center-crop or symmetrically edge-pad the first axis to ``length``."""
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[0]
    if n == length:
        return v
    if n > length:
        start = (n - length) // 2
        return v[start:start + length]
    before = (length - n) // 2
    width = [(before, length - n - before)] + [(0, 0)] * (v.ndim - 1)
    return np.pad(v, width, mode="edge")


# --- pen trajectories ------------------------------------------------------

def voxelize(strokes, dims=(16, 16, 16)):
    """Bin pen points into a normalized (2, Gx, Gy, Gt) occupancy tensor.

    Channel 0 counts contact points, channel 1 hover points.  Time is min-max
    scaled over all points; x and y use their fixed [0, 1] domain.  Each axis
    is split into equal bins (value 1.0 falls in the last bin) and counts are
    divided by the maximum count.
    """
    gx, gy, gt = (int(d) for d in dims)
    if min(gx, gy, gt) < 2:
        raise DataError("voxel grid dims must be >= 2")
    pts, hover = _stack_strokes(strokes)
    if len(pts) == 0:
        raise DataError("cannot voxelize: no pen points")
    t = pts[:, 2]
    span = t.max() - t.min()
    tu = (t - t.min()) / span if span > 0 else np.zeros_like(t)
    ix = np.minimum((pts[:, 0] * gx).astype(np.int64), gx - 1)
    iy = np.minimum((pts[:, 1] * gy).astype(np.int64), gy - 1)
    it = np.minimum((tu * gt).astype(np.int64), gt - 1)
    grid = np.zeros((2, gx, gy, gt))
    np.add.at(grid, (hover.astype(np.int64), ix, iy, it), 1.0)
    return grid / grid.max()


def _stack_strokes(strokes):
    if isinstance(strokes, PenStroke):
        strokes = [strokes]
    strokes = list(strokes)
    if not strokes:
        return np.zeros((0, 3)), np.zeros(0, dtype=bool)
    return (np.concatenate([s.points for s in strokes]),
            np.concatenate([s.hover for s in strokes]))


def scaled_points(strokes):
    """Rows ``(x, y, t_scaled, channel)`` with time min-max scaled to [0, 1]."""
    pts, hover = _stack_strokes(strokes)
    if len(pts) == 0:
        raise DataError("no pen points")
    t = pts[:, 2]
    span = t.max() - t.min()
    ts = (t - t.min()) / span if span > 0 else np.zeros_like(t)
    return np.column_stack([pts[:, 0], pts[:, 1], ts, hover.astype(np.float64)])


def parse_strokes(text):
    """Parse ``t_ms,x,y,state`` lines (state ``c`` or ``h``).

    Blank lines separate strokes; ``#`` starts a comment line.
    """
    strokes, rows = [], []

    def flush():
        if rows:
            arr = np.array([r[:3] for r in rows])
            strokes.append(PenStroke(arr[:, [1, 2, 0]], [r[3] for r in rows]))
            rows.clear()

    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if line.startswith("#"):
            continue
        if not line:
            flush()
            continue
        parts = line.split(",")
        if len(parts) != 4 or parts[3].strip() not in STATE_CODES:
            raise DataError(f"line {lineno}: expected 't_ms,x,y,state' with state c|h, got {line!r}")
        try:
            t, x, y = (float(p) for p in parts[:3])
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric field in {line!r}") from None
        rows.append((t, x, y, parts[3].strip() == "h"))
    flush()
    return strokes


def format_strokes(strokes):
    blocks = []
    for s in strokes:
        lines = [f"{p[2]:.17g},{p[0]:.17g},{p[1]:.17g},{'h' if h else 'c'}" for p, h in zip(s.points, s.hover)]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def read_strokes(path):
    with open(path, encoding="utf-8") as fh:
        return parse_strokes(fh.read())


def write_strokes(strokes, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_strokes(strokes))

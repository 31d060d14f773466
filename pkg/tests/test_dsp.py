import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carewatch import dsp
from carewatch.errors import DataError

from oracles import full_naive_dft_energy, naive_dft, voxel_binning

RATE = 44100
FFT = 1024


# --- PCM ---------------------------------------------------------------------

def test_decode_known_bytes():
    assert dsp.decode_pcm(b"\x00\x00", 8000).samples.tolist() == [0.0]
    assert dsp.decode_pcm(b"\x00\x80", 8000).samples.tolist() == [-1.0]
    assert dsp.decode_pcm(b"\xff\x7f", 8000).samples.tolist() == [32767 / 32768]


def test_decode_odd_length():
    with pytest.raises(DataError, match="odd"):
        dsp.decode_pcm(b"\x00\x00\x01", 8000)


def test_pcm_round_trip_exact():
    ints = np.random.default_rng(0).integers(-32768, 32768, 5000)
    audio = dsp.PcmAudio(RATE, ints / 32768.0)
    raw = dsp.encode_pcm(audio)
    assert np.array_equal(np.frombuffer(raw, "<i2"), ints)
    assert np.array_equal(dsp.decode_pcm(raw, RATE).samples, audio.samples)


# --- spectrogram ---------------------------------------------------------------

def tone(freq, seconds=0.5, amp=0.5):
    t = np.arange(int(RATE * seconds)) / RATE
    return dsp.PcmAudio(RATE, amp * np.sin(2 * np.pi * freq * t))


def test_dc_signal_peaks_at_bin_zero():
    spec = dsp.spectrogram(dsp.PcmAudio(RATE, np.full(4096, 0.3)))
    assert np.all(np.argmax(spec.values, axis=1) == 0)


def test_exact_bin_tone_argmax_every_frame():
    freq = RATE * 32 / FFT
    assert freq == 1378.125
    spec = dsp.spectrogram(tone(freq))
    assert spec.frame_count == (int(RATE * 0.5) - FFT) // 512 + 1
    assert np.all(np.argmax(spec.values, axis=1) == 32)
    assert spec.bin_frequency(32) == freq


def test_stft_matches_naive_dft():
    audio = dsp.PcmAudio(RATE, np.random.default_rng(1).uniform(-1, 1, 3000))
    fast = dsp.stft(audio, 256, 128)
    frames = dsp.frame_signal(audio.samples, 256, 128) * dsp.hann(256)
    for i in range(len(frames)):
        assert np.abs(fast[i] - naive_dft(frames[i])).max() < 1e-9


def test_exact_bin_tone_agrees_with_naive_dft():
    audio = tone(RATE * 32 / FFT, seconds=0.1)
    frames = dsp.frame_signal(audio.samples, FFT, 512) * dsp.hann(FFT)
    for frame in frames:
        assert int(np.argmax(np.abs(naive_dft(frame)))) == 32


def test_parseval_per_frame():
    audio = dsp.PcmAudio(RATE, np.random.default_rng(2).uniform(-0.8, 0.8, 1024 + 3 * 512))
    spectra = dsp.stft(audio)
    frames = dsp.frame_signal(audio.samples, FFT, 512) * dsp.hann(FFT)
    for x, frame in zip(spectra, frames):
        # one-sided spectrum: interior bins stand for two conjugate bins
        energy = abs(x[0]) ** 2 + abs(x[-1]) ** 2 + 2 * np.sum(np.abs(x[1:-1]) ** 2)
        want = FFT * np.sum(frame ** 2)
        assert abs(energy - want) / want < 1e-6
        assert abs(full_naive_dft_energy(frame) - want) / want < 1e-6


def test_spectrogram_floor_and_errors():
    spec = dsp.spectrogram(dsp.PcmAudio(RATE, np.zeros(2048)))
    assert np.all(spec.values == -80.0)
    with pytest.raises(DataError, match="shorter"):
        dsp.spectrogram(dsp.PcmAudio(RATE, np.zeros(100)))
    with pytest.raises(DataError, match="power of two"):
        dsp.spectrogram(dsp.PcmAudio(RATE, np.zeros(3000)), fft_size=1000)


def test_block_average():
    m = np.arange(24.0).reshape(4, 6)
    assert np.array_equal(dsp.block_average(m, (2, 3)), [[3.5, 5.5, 7.5], [15.5, 17.5, 19.5]])
    uneven = dsp.block_average(np.arange(5.0)[:, None], (2, 1))
    assert uneven.ravel().tolist() == [0.5, 3.0]


# --- accelerometer -------------------------------------------------------------

def test_accel_magnitude():
    w = dsp.AccelWindow(50, np.array([[3.0, 4.0, 0.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]))
    assert np.allclose(dsp.accel_magnitude(w), [5.0, 0.0, math.sqrt(3)], atol=1e-15)


def test_accel_range_guard():
    with pytest.raises(DataError):
        dsp.AccelWindow(50, np.array([[0.0, 0.0, 17.0]]))


def test_window_stream_examples():
    s = np.zeros((100, 3))
    ws = dsp.window_stream(s, 50, 1.0, 0.5)
    assert [int(w.start_time * 50 / 1000) for w in ws] == [0, 25, 50]
    assert dsp.window_stream(np.zeros((49, 3)), 50, 1.0) == []
    assert len(dsp.window_stream(np.zeros((50, 3)), 50, 1.0, 0.0)) == 1


def test_window_count_closed_form():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(0, 400))
        rate = float(rng.choice([10, 20, 25, 50, 100]))
        overlap = float(rng.uniform(0, 0.95))
        w = int(round(rate))
        hop = max(1, int(round(w * (1 - overlap))))
        want = 0 if n < w else math.floor((n - w) / hop) + 1
        got = dsp.window_stream(np.zeros((n, 3)), rate, 1.0, overlap)
        assert len(got) == want == dsp.window_count(n, rate, 1.0, overlap)


def test_zscore():
    z = dsp.zscore([1.0, 2.0, 3.0])
    assert abs(z.mean()) < 1e-9 and abs(z.var() - 1) < 1e-6
    assert np.array_equal(dsp.zscore([4.0, 4.0, 4.0]), np.zeros(3))
    again = dsp.zscore(z)
    assert np.abs(again - z).max() < 1e-9


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50))
def test_zscore_property(values):
    z = dsp.zscore(values)
    if np.std(values) > 1e-3:
        assert abs(z.mean()) < 1e-9
        assert abs(z.var() - 1) < 1e-6


def test_resample_linear():
    v = np.random.default_rng(4).normal(size=(20, 3))
    assert np.array_equal(dsp.resample_linear(v, 50, 50), v)
    assert np.allclose(dsp.resample_linear(np.full(30, 2.5), 50, 37), 2.5)
    ramp = np.arange(50) / 50.0  # value = time in seconds
    up = dsp.resample_linear(ramp, 50, 100)
    assert len(up) == 99
    assert np.abs(up - np.arange(99) / 100.0).max() < 1e-12
    with pytest.raises(DataError):
        dsp.resample_linear([], 50, 100)


def test_fit_length():
    v = np.arange(10.0)
    assert dsp.fit_length(v, 6).tolist() == [2, 3, 4, 5, 6, 7]
    assert dsp.fit_length(v[:3], 6).tolist() == [0, 0, 1, 2, 2, 2]


# --- pen strokes and voxels --------------------------------------------------------

def stroke(xy, hover=None, t0=0.0):
    xy = np.asarray(xy, dtype=np.float64)
    t = t0 + 10.0 * np.arange(len(xy))
    return dsp.PenStroke(np.column_stack([xy, t]), np.zeros(len(xy), bool) if hover is None else hover)


def test_single_point_voxel():
    grid = dsp.voxelize([stroke([[0.3, 0.6]])])
    assert grid.shape == (2, 16, 16, 16)
    assert grid.sum() == 1.0 and grid[0, 4, 9, 0] == 1.0


def test_two_identical_points_one_voxel():
    # a stroke needs increasing timestamps, so the duplicate goes in a second stroke
    p = [[0.5, 0.5, 0.0]]
    grid = dsp.voxelize([dsp.PenStroke(p, [False]), dsp.PenStroke(p, [False])])
    assert grid.sum() == 1.0 and grid[0, 8, 8, 0] == 1.0


def test_diagonal_line_matches_binning_oracle():
    u = np.linspace(0, 1, 100)
    s = stroke(np.column_stack([u, u]))
    grid = dsp.voxelize([s], (16, 16, 16))
    want = voxel_binning(s.points.tolist(), s.hover.tolist(), (16, 16, 16))
    assert np.array_equal(np.argwhere(grid > 0), np.argwhere(want > 0))
    assert np.array_equal(grid, want)


def test_random_strokes_match_binning_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        strokes, t0 = [], 0.0
        for _ in range(int(rng.integers(1, 4))):
            n = int(rng.integers(1, 40))
            strokes.append(stroke(rng.uniform(0, 1, (n, 2)), rng.random(n) < 0.3, t0))
            t0 += 10.0 * n + 5
        dims = tuple(int(v) for v in rng.integers(2, 10, 3))
        grid = dsp.voxelize(strokes, dims)
        pts = np.concatenate([s.points for s in strokes])
        hov = np.concatenate([s.hover for s in strokes])
        assert np.array_equal(grid, voxel_binning(pts.tolist(), hov.tolist(), dims))
        assert grid.min() >= 0 and grid.max() == 1.0


def test_voxelize_errors():
    with pytest.raises(DataError):
        dsp.voxelize([])
    with pytest.raises(DataError):
        dsp.voxelize([stroke([[0.1, 0.1]])], (1, 4, 4))


def test_stroke_validation():
    with pytest.raises(DataError):
        dsp.PenStroke([[1.5, 0.0, 0.0]], [False])
    with pytest.raises(DataError):
        dsp.PenStroke([[0.1, 0.1, 5.0], [0.2, 0.2, 5.0]], [False, False])


def test_stroke_file_round_trip(tmp_path):
    strokes = [stroke([[0.1, 0.2], [0.3, 0.4]], np.array([False, True])),
               stroke([[0.5, 0.6]], t0=100.0)]
    path = tmp_path / "s.txt"
    dsp.write_strokes(strokes, path)
    back = dsp.read_strokes(path)
    assert len(back) == 2
    for a, b in zip(strokes, back):
        assert np.array_equal(a.points, b.points) and np.array_equal(a.hover, b.hover)


def test_parse_strokes_reports_line():
    with pytest.raises(DataError, match="line 3"):
        dsp.parse_strokes("# header\n0,0.1,0.1,c\n10,0.2,oops,c\n")

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mirkit import spectral
from mirkit.errors import PreconditionError

SR = 22050


def naive_frame_dft(frame: np.ndarray) -> np.ndarray:
    """Textbook DFT of one windowed frame, first n/2+1 bins."""
    n = len(frame)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    return (np.exp(-2j * np.pi * k * t / n) * (frame * w)).sum(axis=1)


def test_stft_shape_law():
    spec = spectral.stft(np.zeros(110250), 512, 128, SR)
    assert spec.shape == (257, 862)


def test_stft_zero_input():
    assert not np.any(spectral.stft(np.zeros(1000), 256, 64).data)


def test_stft_matches_naive_dft_per_frame():
    rng = np.random.default_rng(3)
    x = rng.normal(size=700)
    spec = spectral.stft(x, 64, 16)
    padded = np.pad(x, 32, mode="reflect")
    for m in (0, 5, 17, spec.shape[1] - 1):
        np.testing.assert_allclose(spec.data[:, m], naive_frame_dft(padded[m * 16:m * 16 + 64]), atol=1e-10)


def test_bin_centred_cosine_peaks_at_its_bin():
    n_fft, k = 512, 37
    t = np.arange(8192)
    x = np.cos(2 * np.pi * k * t / n_fft)
    mag = np.abs(spectral.stft(x, n_fft, 128).data)
    interior = mag[:, 4:-4]
    assert np.all(interior.argmax(axis=0) == k)


def test_istft_roundtrip_and_zero():
    x = np.random.default_rng(0).normal(size=5000)
    spec = spectral.stft(x, 512, 128)
    assert np.max(np.abs(spectral.istft(spec, len(x)) - x)) < 1e-6
    zero = spectral.ComplexSpectrogram(np.zeros_like(spec.data), 512, 128)
    assert not np.any(spectral.istft(zero, 5000))


def test_istft_single_frame_by_hand():
    n_fft = 16
    frame = np.ones(n_fft)
    w = spectral.hann(n_fft)
    spec = spectral.ComplexSpectrogram(np.fft.rfft(frame * w)[:, None], n_fft, 4)
    # one frame: output = frame * w * w / w^2 = frame where w != 0, cut after the centre pad
    out = spectral.istft(spec, n_fft // 2)
    np.testing.assert_allclose(out, frame[n_fft // 2:], atol=1e-12)


def test_istft_rejects_uncovered_hop():
    spec = spectral.ComplexSpectrogram(np.zeros((9, 4), dtype=complex), 16, 17)
    with pytest.raises(PreconditionError):
        spectral.istft(spec, 60)


@settings(max_examples=25, deadline=None)
@given(st.integers(200, 3000), st.sampled_from([64, 128, 256]), st.integers(0, 2**32 - 1))
def test_roundtrip_property(n, n_fft, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, n)
    y = spectral.istft(spectral.stft(x, n_fft, n_fft // 4), n)
    assert np.max(np.abs(y - x)) < 1e-6


@pytest.mark.parametrize("bad", [dict(n_fft=511), dict(n_fft=64, hop_length=65), dict(n_fft=64, hop_length=0)])
def test_stft_preconditions(bad):
    with pytest.raises(PreconditionError):
        spectral.stft(np.zeros(1000), **bad)


def test_magnitude_values():
    spec = spectral.ComplexSpectrogram(np.array([[-0.9134862 + 0.22103079j, 0, 3 + 4j]]), 0, 1)
    assert spectral.magnitude(spec).data[0, 0] == pytest.approx(0.9398466, abs=1e-7)
    assert spectral.magnitude(spec).data[0, 1] == 0
    assert spectral.magnitude(spec, 2).data[0, 2] == pytest.approx(25.0)


def test_to_decibels():
    m = np.array([[1.0, 100.0, 0.0]])
    db = spectral.to_decibels(m, "power", ref=1.0).data[0]
    assert db[0] == 0 and db[1] == pytest.approx(20.0) and db[2] == pytest.approx(-100.0)
    amp = spectral.to_decibels(np.array([[0.0]]), "amplitude", ref=1.0, floor_db=-100).data
    assert amp[0, 0] == pytest.approx(-100.0)
    assert spectral.to_decibels(m, "power", ref="max").data.max() == 0.0
    clamped = spectral.to_decibels(m, "power", ref=1.0, top_db=30).data
    assert clamped.min() == pytest.approx(-10.0)
    with pytest.raises(PreconditionError):
        spectral.to_decibels(-m, "power")


def test_mel_closed_forms():
    assert spectral.mel_scale(0.0) == 0.0
    assert spectral.mel_scale(1000.0) == 15.0
    assert spectral.mel_scale(6400.0) == 42.0


def test_mel_inverse():
    f = np.linspace(0, 11025, 10001)
    back = spectral.mel_to_hz(spectral.mel_scale(f))
    np.testing.assert_allclose(back, f, rtol=1e-9, atol=0)


def test_mel_monotone():
    f = np.linspace(0, 11025, 1000)
    assert np.all(np.diff(spectral.mel_scale(f)) > 0)


def test_filterbank_shape_and_triangles():
    fb = spectral.mel_filterbank(SR, 512, 128)
    assert fb.weights.shape == (128, 257)
    assert np.all(fb.weights >= 0)
    peaks = fb.weights.argmax(axis=1)
    for row, p in zip(fb.weights, peaks):
        nz = row[row > 0]
        # rises then falls: a single local maximum
        d = np.diff(nz)
        assert np.all(d[: np.argmax(nz)] >= 0) and np.all(d[np.argmax(nz):] <= 0)


def test_filter_centres_follow_mel_grid():
    fb = spectral.mel_filterbank(SR, 4096, 40)
    expected = spectral.mel_to_hz(np.linspace(0, spectral.mel_scale(SR / 2), 42))[1:-1]
    np.testing.assert_allclose(fb.centers, expected)
    assert np.all(np.diff(fb.weights.argmax(axis=1)) > 0)


def test_filterbank_warns_on_empty_filters():
    with pytest.warns(RuntimeWarning, match="empty"):
        spectral.mel_filterbank(SR, 64, 128)


def test_melspectrogram_shape_and_silence():
    assert spectral.melspectrogram(np.zeros(110250), SR, 512, 128, 128).shape == (128, 862)
    assert not np.any(spectral.melspectrogram(np.zeros(4096), SR, 512, 128, 64).data)


def test_melspectrogram_tone_lands_on_nearest_centre():
    t = np.arange(SR) / SR
    mel = spectral.melspectrogram(np.sin(2 * np.pi * 1000 * t), SR, 2048, 512, 128)
    nearest = int(np.argmin(np.abs(mel.frequencies - 1000)))
    assert abs(int(np.median(mel.data.argmax(axis=0))) - nearest) <= 1
    assert np.bincount(mel.data[:, 2:-2].argmax(axis=0)).argmax() == nearest


def test_cqt_grid_top_bin():
    freqs = spectral.CqtParams().center_frequencies()
    assert len(freqs) == 168
    assert freqs[-1] == pytest.approx(32.70319566257483 * 2 ** (167 / 24))
    assert freqs[-1] == pytest.approx(4066.84, abs=0.01)


def test_cqt_silence_and_tone():
    params = spectral.CqtParams()
    assert not np.any(spectral.cqt(np.zeros(SR * 2), SR, params).data)
    t = np.arange(2 * SR) / SR
    out = spectral.cqt(np.sin(2 * np.pi * 440 * t), SR, params)
    nearest = int(np.argmin(np.abs(out.frequencies - 440)))
    mid = out.data[:, out.shape[1] // 2]
    assert int(mid.argmax()) == nearest


def test_cqt_matches_direct_projection():
    params = spectral.CqtParams(f_min=110.0, bins_per_octave=12, n_bins=24, hop_length=256)
    x = np.random.default_rng(4).normal(size=8000)
    out = spectral.cqt(x, SR, params).data
    q = params.q
    for k in (0, 11, 23):
        f = params.center_frequencies()[k]
        n = math.ceil(q * SR / f)
        w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
        kern = w * np.exp(-2j * np.pi * f * (np.arange(n) - n // 2) / SR) / n
        for m in (0, 7, 20):
            c = m * 256
            acc = 0j
            for j in range(n):
                i = c - n // 2 + j
                if 0 <= i < len(x):
                    acc += x[i] * kern[j]
            assert out[k, m] == pytest.approx(abs(acc), abs=1e-10)


def test_cqt_preconditions():
    with pytest.raises(PreconditionError, match="Nyquist"):
        spectral.cqt(np.zeros(SR), 8000, spectral.CqtParams())
    with pytest.raises(PreconditionError, match="shorter"):
        spectral.cqt(np.zeros(100), SR, spectral.CqtParams())

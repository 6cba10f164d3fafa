"""Time-frequency representations: STFT, inverse STFT, decibels, mel and constant-Q."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .audio_io import as_mono_array
from .errors import PreconditionError

# Slaney-style mel constants: linear below 1 kHz, logarithmic above.
_MEL_BREAK_HZ = 1000.0
_MEL_BREAK = 15.0
_MEL_LOGSTEP = math.log(6.4) / 27.0


def hann(n: int) -> np.ndarray:
    """Periodic Hann window of length ``n``."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class ComplexSpectrogram:
    data: np.ndarray  # (n_bins, n_frames), complex
    n_fft: int
    hop_length: int
    sample_rate: int | None = None
    window: str = "hann"

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class RealMatrix:
    data: np.ndarray  # (rows, frames)
    scale: str
    frequencies: np.ndarray | None = None
    hop_length: int | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (n_mels, n_fft // 2 + 1)
    f_min: float
    f_max: float
    centers: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CqtParams:
    f_min: float = 32.70319566257483
    bins_per_octave: int = 24
    n_bins: int = 168
    hop_length: int = 512

    @property
    def q(self) -> float:
        return 1.0 / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    def center_frequencies(self) -> np.ndarray:
        return self.f_min * 2.0 ** (np.arange(self.n_bins) / self.bins_per_octave)


def _frames(n_samples: int, hop_length: int) -> int:
    return -(-n_samples // hop_length)


def stft(x, n_fft: int = 2048, hop_length: int | None = None, sample_rate: int | None = None) -> ComplexSpectrogram:
    """Centered, Hann-windowed STFT.

    The signal is reflect-padded by ``n_fft // 2`` on both sides; the result has
    ``n_fft // 2 + 1`` rows and ``ceil(len(x) / hop_length)`` columns.
    """
    if hasattr(x, "sample_rate") and sample_rate is None:
        sample_rate = x.sample_rate
    y = as_mono_array(x)
    if hop_length is None:
        hop_length = n_fft // 4
    if n_fft < 2 or n_fft % 2:
        raise PreconditionError(f"n_fft must be even and >= 2, got {n_fft}")
    if hop_length < 1:
        raise PreconditionError(f"hop_length must be >= 1, got {hop_length}")
    if hop_length > n_fft:
        raise PreconditionError(f"hop_length {hop_length} > n_fft {n_fft}: frames would not overlap")
    if len(y) == 0:
        raise PreconditionError("cannot analyse an empty signal")

    pad = n_fft // 2
    mode = "reflect" if len(y) > 1 else "constant"
    padded = np.pad(y, pad, mode=mode)
    n_frames = _frames(len(y), hop_length)
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop_length][:n_frames]
    spec = np.fft.rfft(frames * hann(n_fft), axis=1).T
    return ComplexSpectrogram(spec, n_fft, hop_length, sample_rate)


def istft(spec: ComplexSpectrogram, expected_length: int) -> np.ndarray:
    """Inverse STFT by overlap-add normalised by the summed squared window."""
    n_fft, hop = spec.n_fft, spec.hop_length
    n_bins, n_frames = spec.data.shape
    if n_bins != n_fft // 2 + 1:
        raise PreconditionError(f"{n_bins} bins inconsistent with n_fft={n_fft}")
    window = hann(n_fft)
    frames = np.fft.irfft(spec.data.T, n=n_fft, axis=1) * window

    total = n_fft + hop * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window ** 2
    for m in range(n_frames):
        start = m * hop
        out[start:start + n_fft] += frames[m]
        norm[start:start + n_fft] += wsq

    pad = n_fft // 2
    stop = min(total, pad + expected_length)
    out = out[pad:stop]
    norm = norm[pad:stop]
    if len(norm) and norm.min() < 1e-10 * wsq.max():
        raise PreconditionError(
            f"window/hop pair (hann {n_fft}, hop {hop}) leaves samples uncovered; cannot invert"
        )
    y = out / norm if len(norm) else out
    if len(y) < expected_length:
        y = np.concatenate([y, np.zeros(expected_length - len(y))])
    return y


def magnitude(spec: ComplexSpectrogram, power: int = 1) -> RealMatrix:
    if power not in (1, 2):
        raise PreconditionError(f"power must be 1 or 2, got {power}")
    mag = np.abs(spec.data)
    if power == 2:
        mag = mag ** 2
    freqs = None
    if spec.sample_rate:
        freqs = np.fft.rfftfreq(spec.n_fft, 1.0 / spec.sample_rate)
    return RealMatrix(mag, "linear-magnitude" if power == 1 else "power", freqs, spec.hop_length)


def to_decibels(m, kind: str = "power", ref="max", floor_db: float = -100.0, top_db: float | None = None) -> RealMatrix:
    """Convert magnitudes or powers to decibels.

    ``ref`` is a positive number or ``"max"`` (the matrix maximum). Values are
    floored at ``floor_db`` relative to ``ref``; ``top_db`` additionally clamps
    everything to ``[max - top_db, max]``.
    """
    if isinstance(m, RealMatrix):
        data, freqs, hop = m.data, m.frequencies, m.hop_length
    else:
        data, freqs, hop = np.asarray(m, dtype=np.float64), None, None
    if kind not in ("amplitude", "power"):
        raise PreconditionError(f"kind must be 'amplitude' or 'power', got {kind!r}")
    if np.any(data < 0):
        raise PreconditionError("decibel conversion needs nonnegative input")
    factor = 20.0 if kind == "amplitude" else 10.0

    if isinstance(ref, str):
        if ref != "max":
            raise PreconditionError(f"unknown ref mode {ref!r}")
        ref_value = float(data.max()) if data.size else 1.0
    else:
        ref_value = float(ref)
    eps = 10.0 ** (floor_db / factor)
    if ref_value <= 0:
        # all-zero input with ref=max
        ref_value = 1.0
    db = factor * np.log10(np.maximum(data / ref_value, eps))
    if top_db is not None:
        if top_db < 0:
            raise PreconditionError("top_db must be nonnegative")
        db = np.maximum(db, db.max() - top_db)
    return RealMatrix(db, "decibel", freqs, hop)


def mel_scale(f):
    """Hz to mel. Scalar in, scalar out; arrays map elementwise."""
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0):
        raise PreconditionError("frequency must be nonnegative")
    with np.errstate(divide="ignore"):
        log_part = _MEL_BREAK + np.log(np.maximum(f_arr, _MEL_BREAK_HZ) / _MEL_BREAK_HZ) / _MEL_LOGSTEP
    out = np.where(f_arr < _MEL_BREAK_HZ, f_arr * 3.0 / 200.0, log_part)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    m_arr = np.asarray(m, dtype=np.float64)
    if np.any(m_arr < 0):
        raise PreconditionError("mel value must be nonnegative")
    out = np.where(
        m_arr < _MEL_BREAK,
        m_arr * 200.0 / 3.0,
        _MEL_BREAK_HZ * np.exp(_MEL_LOGSTEP * (m_arr - _MEL_BREAK)),
    )
    return float(out) if out.ndim == 0 else out


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int = 128, f_min: float = 0.0,
                   f_max: float | None = None) -> MelFilterbank:
    """Area-normalised triangular filters spaced evenly on the mel scale."""
    nyquist = sample_rate / 2.0
    if f_max is None:
        f_max = nyquist
    if n_mels < 1:
        raise PreconditionError("n_mels must be >= 1")
    if not 0 <= f_min < f_max:
        raise PreconditionError(f"need 0 <= f_min < f_max, got {f_min}, {f_max}")
    if f_max > nyquist:
        raise PreconditionError(f"f_max {f_max} exceeds Nyquist {nyquist}")

    fft_freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    edges = mel_to_hz(np.linspace(mel_scale(f_min), mel_scale(f_max), n_mels + 2))
    widths = np.diff(edges)
    ramps = edges[:, np.newaxis] - fft_freqs[np.newaxis, :]

    weights = np.zeros((n_mels, len(fft_freqs)))
    for i in range(n_mels):
        lower = -ramps[i] / widths[i]
        upper = ramps[i + 2] / widths[i + 1]
        weights[i] = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, np.newaxis]

    empty = np.flatnonzero(weights.max(axis=1) == 0)
    if len(empty):
        warnings.warn(
            f"{len(empty)} mel filters are empty; n_mels={n_mels} is too many for n_fft={n_fft}",
            RuntimeWarning,
            stacklevel=2,
        )
    return MelFilterbank(weights, float(f_min), float(f_max), edges[1:-1])


def melspectrogram(x, sample_rate: int | None = None, n_fft: int = 2048, hop_length: int | None = None,
                   n_mels: int = 128, f_min: float = 0.0, f_max: float | None = None, power: int = 2) -> RealMatrix:
    if sample_rate is None:
        sample_rate = getattr(x, "sample_rate", None)
    if sample_rate is None:
        raise PreconditionError("sample_rate is required for a melspectrogram")
    spec = stft(x, n_fft, hop_length, sample_rate)
    fb = mel_filterbank(sample_rate, n_fft, n_mels, f_min, f_max)
    mag = magnitude(spec, power)
    return RealMatrix(fb.weights @ mag.data, "mel", fb.centers, spec.hop_length)


def _cqt_kernel(freq: float, q: float, sample_rate: int) -> np.ndarray:
    n = int(math.ceil(q * sample_rate / freq))
    t = (np.arange(n) - n // 2) / sample_rate
    return hann(n) * np.exp(-2j * np.pi * freq * t) / n


def cqt(x, sample_rate: int | None = None, params: CqtParams = CqtParams()) -> RealMatrix:
    """Constant-Q magnitudes by direct projection onto per-bin Hann-windowed kernels.

    Bin ``k`` uses a kernel of ``ceil(Q * sr / f_k)`` samples centred on frame
    position ``m * hop``; samples outside the signal count as zero. The
    projection is evaluated for every frame at once by FFT correlation.
    """
    if sample_rate is None:
        sample_rate = getattr(x, "sample_rate", None)
    if sample_rate is None:
        raise PreconditionError("sample_rate is required for a CQT")
    y = as_mono_array(x)
    freqs = params.center_frequencies()
    if params.n_bins < 1 or params.bins_per_octave < 1 or params.f_min <= 0:
        raise PreconditionError("invalid CQT parameters")
    if freqs[-1] >= sample_rate / 2:
        raise PreconditionError(f"top CQT bin {freqs[-1]:.2f} Hz is at or above Nyquist {sample_rate / 2}")
    q = params.q
    longest = int(math.ceil(q * sample_rate / freqs[0]))
    if len(y) < longest:
        raise PreconditionError(f"signal of {len(y)} samples is shorter than the longest CQT kernel ({longest})")

    n_frames = _frames(len(y), params.hop_length)
    centers = np.arange(n_frames) * params.hop_length
    out = np.empty((params.n_bins, n_frames))
    for k, f in enumerate(freqs):
        kernel = _cqt_kernel(f, q, sample_rate)
        n = len(kernel)
        # correlation: sum_j y[c - n//2 + j] * kernel[j]
        full = fftconvolve(y, kernel[::-1], mode="full")
        idx = centers + (n - 1) - n // 2
        vals = np.zeros(n_frames, dtype=complex)
        ok = idx < len(full)
        vals[ok] = full[idx[ok]]
        out[k] = np.abs(vals)
    return RealMatrix(out, "cqt", freqs, params.hop_length)

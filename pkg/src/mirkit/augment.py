"""Seeded time-domain audio augmentations and their composition.

Every stochastic transform comes in two layers: a deterministic kernel
(``apply_gain(x, gain_db)``) and a sampling wrapper (``gain(x, range, rng)``)
that draws the parameter from an explicit ``numpy.random.Generator``.
Pipelines derive one child stream per (view, transform index) from the root
seed, so views can run on any number of threads with identical output.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.signal import lfilter

from . import spectral
from .audio_io import AudioBuffer, as_mono_array
from .errors import InputParseError, PreconditionError

Range = tuple[float, float]

SCHROEDER_COMB_MS = (29.7, 37.1, 41.1, 43.7)
SCHROEDER_ALLPASS_MS = (5.0, 1.7)
SCHROEDER_ALLPASS_GAIN = 0.7


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Child stream for ``path`` under ``seed``; PCG64 is platform independent."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(path))))


def _check_range(lo: float, hi: float, name: str) -> None:
    if lo > hi:
        raise PreconditionError(f"{name}: min {lo} > max {hi}")


# --- crop ---------------------------------------------------------------

def random_resized_crop(x, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    y = as_mono_array(x)
    if len(y) < n_samples:
        raise PreconditionError(f"signal of {len(y)} samples is shorter than crop length {n_samples}")
    offset = int(rng.integers(0, len(y) - n_samples + 1))
    return y[offset:offset + n_samples].copy()


# --- polarity / gain / noise ---------------------------------------------

def polarity_inversion(x) -> np.ndarray:
    return -np.asarray(x, dtype=np.float64)


def apply_gain(x, gain_db: float) -> np.ndarray:
    y = np.asarray(x, dtype=np.float64)
    if gain_db == 0:
        return y.copy()
    return y * 10.0 ** (gain_db / 20.0)


def gain(x, gain_db_range: Range, rng: np.random.Generator) -> np.ndarray:
    lo, hi = gain_db_range
    _check_range(lo, hi, "gain_db_range")
    return apply_gain(x, rng.uniform(lo, hi))


def apply_noise(x, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Add white Gaussian noise whose RMS is ``ratio`` times the signal RMS."""
    y = np.asarray(x, dtype=np.float64)
    noise = rng.standard_normal(y.shape)
    std = ratio * math.sqrt(float(np.mean(y ** 2))) if y.size else 0.0
    if std == 0:
        return y.copy()
    return y + std * noise


def noise(x, snr_range: Range, rng: np.random.Generator) -> np.ndarray:
    lo, hi = snr_range
    _check_range(lo, hi, "snr_range")
    if lo < 0:
        raise PreconditionError("snr_range must be nonnegative")
    return apply_noise(x, rng.uniform(lo, hi), rng)


# --- filters --------------------------------------------------------------

def biquad_coefficients(kind: str, cutoff: float, sample_rate: int, q: float = 1 / math.sqrt(2)):
    """Cookbook second-order low/high-pass coefficients, normalised so a[0] == 1."""
    if not 0 < cutoff < sample_rate / 2:
        raise PreconditionError(f"cutoff {cutoff} Hz outside (0, {sample_rate / 2})")
    w0 = 2 * math.pi * cutoff / sample_rate
    cos_w0 = math.cos(w0)
    alpha = math.sin(w0) / (2 * q)
    if kind == "lowpass":
        b = [(1 - cos_w0) / 2, 1 - cos_w0, (1 - cos_w0) / 2]
    elif kind == "highpass":
        b = [(1 + cos_w0) / 2, -(1 + cos_w0), (1 + cos_w0) / 2]
    else:
        raise PreconditionError(f"unknown filter kind {kind!r}")
    a = [1 + alpha, -2 * cos_w0, 1 - alpha]
    return np.array(b) / a[0], np.array(a) / a[0]


def apply_biquad(x, kind: str, cutoff: float, sample_rate: int) -> np.ndarray:
    b, a = biquad_coefficients(kind, cutoff, sample_rate)
    return lfilter(b, a, as_mono_array(x))


def high_low_pass(x, sample_rate: int, lowpass_cutoff_range: Range, highpass_cutoff_range: Range,
                  rng: np.random.Generator) -> np.ndarray:
    _check_range(*lowpass_cutoff_range, "lowpass_cutoff_range")
    _check_range(*highpass_cutoff_range, "highpass_cutoff_range")
    if rng.random() < 0.5:
        return apply_biquad(x, "lowpass", rng.uniform(*lowpass_cutoff_range), sample_rate)
    return apply_biquad(x, "highpass", rng.uniform(*highpass_cutoff_range), sample_rate)


# --- delay ------------------------------------------------------------------

def apply_delay(x, sample_rate: int, delay_ms: float, volume_factor: float) -> np.ndarray:
    y = as_mono_array(x)
    shift = int(round(delay_ms * sample_rate / 1000.0))
    out = y.copy()
    if 0 < shift < len(y):
        out[shift:] += volume_factor * y[:-shift]
    elif shift == 0:
        out += volume_factor * y
    return out


def delay(x, sample_rate: int, delay_range_ms: Range, delay_interval_ms: float, volume_factor: float,
          rng: np.random.Generator) -> np.ndarray:
    lo, hi = delay_range_ms
    _check_range(lo, hi, "delay_range_ms")
    if lo < 0 or delay_interval_ms < 1 or volume_factor < 0:
        raise PreconditionError("delay needs min >= 0, interval >= 1 ms, volume_factor >= 0")
    steps = int(math.floor((hi - lo) / delay_interval_ms + 1e-9)) + 1
    delay_ms = lo + delay_interval_ms * int(rng.integers(0, steps))
    return apply_delay(x, sample_rate, delay_ms, volume_factor)


# --- pitch shift --------------------------------------------------------------

def phase_vocoder(spec: spectral.ComplexSpectrogram, rate: float) -> spectral.ComplexSpectrogram:
    """Resample STFT frames at ``rate`` (>1 speeds up) keeping phase advance consistent."""
    data = spec.data
    n_bins, n_frames = data.shape
    steps = np.arange(0, n_frames, rate)
    expected_advance = np.linspace(0, np.pi * spec.hop_length, n_bins)
    padded = np.concatenate([data, np.zeros((n_bins, 2), dtype=complex)], axis=1)

    out = np.empty((n_bins, len(steps)), dtype=complex)
    phase = np.angle(data[:, 0])
    for t, step in enumerate(steps):
        i = int(step)
        left, right = padded[:, i], padded[:, i + 1]
        frac = step - i
        mag = (1.0 - frac) * np.abs(left) + frac * np.abs(right)
        out[:, t] = mag * np.exp(1j * phase)
        dphase = np.angle(right) - np.angle(left) - expected_advance
        dphase -= 2.0 * np.pi * np.round(dphase / (2.0 * np.pi))
        phase = phase + expected_advance + dphase
    return spectral.ComplexSpectrogram(out, spec.n_fft, spec.hop_length, spec.sample_rate)


def time_stretch(x, rate: float, n_fft: int = 1024, hop_length: int = 256) -> np.ndarray:
    """Change duration by ``1 / rate`` without changing pitch."""
    y = as_mono_array(x)
    stretched = phase_vocoder(spectral.stft(y, n_fft, hop_length), rate)
    return spectral.istft(stretched, int(round(len(y) / rate)))


def apply_pitch_shift(x, semitones: int) -> np.ndarray:
    """Shift by ``semitones`` (12-TET): stretch by 2**(s/12), then resample back to the input length."""
    y = as_mono_array(x)
    if semitones == 0:
        return y.copy()
    ratio = 2.0 ** (semitones / 12.0)
    stretched = time_stretch(y, 1.0 / ratio)
    positions = np.arange(len(y)) * ratio
    return np.interp(positions, np.arange(len(stretched)), stretched, right=0.0)


def pitch_shift(x, sample_rate: int, semitone_range: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    lo, hi = semitone_range
    _check_range(lo, hi, "semitone_range")
    if lo < -12 or hi > 12:
        raise PreconditionError("semitone_range must lie within [-12, 12]")
    return apply_pitch_shift(x, int(rng.integers(lo, hi + 1)))


# --- reverb -------------------------------------------------------------------

def apply_reverb(x, sample_rate: int, room_size: float) -> np.ndarray:
    """Schroeder reverberator: 4 parallel feedback combs, 2 series allpasses, 50/50 dry/wet."""
    y = as_mono_array(x)
    if not 0 <= room_size <= 1:
        raise PreconditionError(f"room_size must be in [0, 1], got {room_size}")
    feedback = 0.7 + 0.28 * room_size
    wet = np.zeros_like(y)
    for ms in SCHROEDER_COMB_MS:
        d = max(1, int(round(ms * sample_rate / 1000.0)))
        a = np.zeros(d + 1)
        a[0], a[d] = 1.0, -feedback
        wet += lfilter([1.0], a, y)
    wet /= len(SCHROEDER_COMB_MS)
    g = SCHROEDER_ALLPASS_GAIN
    for ms in SCHROEDER_ALLPASS_MS:
        d = max(1, int(round(ms * sample_rate / 1000.0)))
        b = np.zeros(d + 1)
        a = np.zeros(d + 1)
        b[0], b[d] = -g, 1.0
        a[0], a[d] = 1.0, -g
        wet = lfilter(b, a, wet)
    return 0.5 * y + 0.5 * wet


def reverb(x, sample_rate: int, room_size_range: Range, rng: np.random.Generator) -> np.ndarray:
    lo, hi = room_size_range
    _check_range(lo, hi, "room_size_range")
    if lo < 0 or hi > 1:
        raise PreconditionError("room_size_range must lie within [0, 1]")
    return apply_reverb(x, sample_rate, rng.uniform(lo, hi))


# --- pipeline schema ------------------------------------------------------------

class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _ordered_ranges(self):
        for name, value in self:
            if isinstance(value, tuple) and len(value) == 2 and value[0] > value[1]:
                raise ValueError(f"{name}: min {value[0]} > max {value[1]}")
        return self


class CropParams(_Params):
    n_samples: int = Field(gt=0)


class NoParams(_Params):
    pass


class GainParams(_Params):
    gain_db_range: tuple[float, float] = (-6.0, 0.0)


class NoiseParams(_Params):
    snr_range: tuple[Annotated[float, Field(ge=0)], Annotated[float, Field(ge=0)]] = (0.0001, 0.01)


class HighLowPassParams(_Params):
    lowpass_cutoff_range: tuple[Annotated[float, Field(gt=0)], Annotated[float, Field(gt=0)]] = (2200.0, 4000.0)
    highpass_cutoff_range: tuple[Annotated[float, Field(gt=0)], Annotated[float, Field(gt=0)]] = (200.0, 1200.0)


class DelayParams(_Params):
    delay_range_ms: tuple[Annotated[float, Field(ge=0)], Annotated[float, Field(ge=0)]] = (100.0, 500.0)
    delay_interval_ms: float = Field(default=1.0, ge=1)
    volume_factor: float = Field(default=0.5, ge=0)


Semitone = Annotated[int, Field(ge=-12, le=12)]


class PitchShiftParams(_Params):
    semitone_range: tuple[Semitone, Semitone] = (-4, 4)


class ReverbParams(_Params):
    room_size_range: tuple[Annotated[float, Field(ge=0, le=1)], Annotated[float, Field(ge=0, le=1)]] = (0.0, 1.0)


class _Transform(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)
    p: float = Field(default=1.0, ge=0, le=1)


class RandomResizedCropSpec(_Transform):
    kind: Literal["random_resized_crop"]
    params: CropParams


class PolarityInversionSpec(_Transform):
    kind: Literal["polarity_inversion"]
    params: NoParams = NoParams()


class GainSpec(_Transform):
    kind: Literal["gain"]
    params: GainParams = GainParams()


class NoiseSpec(_Transform):
    kind: Literal["noise"]
    params: NoiseParams = NoiseParams()


class HighLowPassSpec(_Transform):
    kind: Literal["high_low_pass"]
    params: HighLowPassParams = HighLowPassParams()


class DelaySpec(_Transform):
    kind: Literal["delay"]
    params: DelayParams = DelayParams()


class PitchShiftSpec(_Transform):
    kind: Literal["pitch_shift"]
    params: PitchShiftParams = PitchShiftParams()


class ReverbSpec(_Transform):
    kind: Literal["reverb"]
    params: ReverbParams = ReverbParams()


TransformSpec = Annotated[
    Union[RandomResizedCropSpec, PolarityInversionSpec, GainSpec, NoiseSpec, HighLowPassSpec,
          DelaySpec, PitchShiftSpec, ReverbSpec],
    Field(discriminator="kind"),
]


class AugmentationPipeline(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    num_views: int = Field(default=1, ge=1)
    transforms: list[TransformSpec] = []


_KIND_TAGS = {
    "random_resized_crop", "polarity_inversion", "gain", "noise", "high_low_pass",
    "delay", "pitch_shift", "reverb",
}


def _field_path(loc) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        elif part in _KIND_TAGS:
            # pydantic inserts the union tag into the location; drop it
            continue
        else:
            path += f".{part}" if path else str(part)
    return path or "<root>"


def parse_pipeline_spec(text: str) -> AugmentationPipeline:
    """Parse and validate a pipeline JSON document.

    Errors name the offending field path, e.g. ``transforms[1].kind``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputParseError(f"pipeline: malformed JSON: {exc}") from exc
    try:
        return AugmentationPipeline.model_validate(doc)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            msg = err["msg"]
            if err["type"] == "union_tag_invalid":
                msg = f"unknown transform kind {err['input'].get('kind')!r}" if isinstance(err["input"], dict) else msg
            problems.append(f"{_field_path(err['loc'])}: {msg}")
        raise InputParseError("pipeline: " + "; ".join(problems)) from exc


def apply_transform(spec, x: np.ndarray, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    params = spec.params
    kind = spec.kind
    if kind == "random_resized_crop":
        return random_resized_crop(x, params.n_samples, rng)
    if kind == "polarity_inversion":
        return polarity_inversion(x)
    if kind == "gain":
        return gain(x, params.gain_db_range, rng)
    if kind == "noise":
        return noise(x, params.snr_range, rng)
    if kind == "high_low_pass":
        return high_low_pass(x, sample_rate, params.lowpass_cutoff_range, params.highpass_cutoff_range, rng)
    if kind == "delay":
        return delay(x, sample_rate, params.delay_range_ms, params.delay_interval_ms, params.volume_factor, rng)
    if kind == "pitch_shift":
        return pitch_shift(x, sample_rate, params.semitone_range, rng)
    if kind == "reverb":
        return reverb(x, sample_rate, params.room_size_range, rng)
    raise PreconditionError(f"unknown transform kind {kind!r}")


def _render_view(pipeline: AugmentationPipeline, y: np.ndarray, sample_rate: int, view: int) -> np.ndarray:
    out = y.copy()
    for index, spec in enumerate(pipeline.transforms):
        rng = derive_rng(pipeline.seed, view, index)
        if rng.random() < spec.p:
            out = apply_transform(spec, out, sample_rate, rng)
    return out


def apply_pipeline(pipeline: AugmentationPipeline, x: AudioBuffer, workers: int = 1) -> list[AudioBuffer]:
    """Render ``pipeline.num_views`` augmented views of a mono buffer.

    Transforms run in declared order; each fires when a uniform draw from its
    own child stream falls below ``p``.
    """
    y = x.mono
    views = range(pipeline.num_views)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            arrays = list(pool.map(lambda v: _render_view(pipeline, y, x.sample_rate, v), views))
    else:
        arrays = [_render_view(pipeline, y, x.sample_rate, v) for v in views]
    return [AudioBuffer(a, x.sample_rate) for a in arrays]

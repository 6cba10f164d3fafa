import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import freqz
from scipy.stats import chisquare

from conftest import SR, STOCHASTIC_CHAIN, sine
from mirkit import augment, spectral
from mirkit.audio_io import AudioBuffer
from mirkit.errors import InputParseError, PreconditionError


def rng(seed=0):
    return np.random.default_rng(seed)


def dominant_hz(x: np.ndarray, n_fft: int = 4096) -> float:
    mag = np.abs(spectral.stft(x, n_fft, n_fft // 4).data).sum(axis=1)
    return float(np.fft.rfftfreq(n_fft, 1 / SR)[mag.argmax()])


# crop

def test_crop_full_length_is_identity():
    x = np.arange(50.0)
    np.testing.assert_array_equal(augment.random_resized_crop(x, 50, rng()), x)


def test_crop_offsets_uniform():
    n = 20
    x = np.arange(2 * n, dtype=float)
    g = rng(11)
    offsets = [int(augment.random_resized_crop(x, n, g)[0]) for _ in range(10_000)]
    assert min(offsets) == 0 and max(offsets) == n
    counts = np.bincount(offsets, minlength=n + 1)
    assert chisquare(counts).pvalue > 0.001


def test_crop_too_short():
    with pytest.raises(PreconditionError):
        augment.random_resized_crop(np.zeros(10), 11, rng())


# polarity and gain

def test_polarity():
    x = np.array([1.0, -0.5])
    assert augment.polarity_inversion(x).tolist() == [-1.0, 0.5]
    y = rng().normal(size=100)
    assert not np.any(y + augment.polarity_inversion(y))
    np.testing.assert_array_equal(augment.polarity_inversion(augment.polarity_inversion(y)), y)


def test_gain_values():
    x = rng().normal(size=64)
    np.testing.assert_array_equal(augment.apply_gain(x, 0.0), x)
    np.testing.assert_allclose(augment.apply_gain(x, 20 * np.log10(0.5)), x / 2)
    np.testing.assert_allclose(augment.apply_gain(x, 10.0), x * 3.16227766)
    np.testing.assert_array_equal(augment.gain(x, (0.0, 0.0), rng()), x)


def test_gain_is_not_renormalised():
    assert augment.apply_gain(np.array([0.9]), 6.0)[0] > 1.0


# noise

def test_noise_identities():
    x = rng().normal(size=100)
    np.testing.assert_array_equal(augment.apply_noise(x, 0.0, rng()), x)
    np.testing.assert_array_equal(augment.noise(np.zeros(100), (0.5, 1.0), rng()), np.zeros(100))


def test_noise_ratio_monte_carlo():
    x = rng(1).normal(size=200_000)
    x /= np.sqrt(np.mean(x ** 2))
    y = augment.apply_noise(x, 0.5, rng(2))
    assert np.sqrt(np.mean((y - x) ** 2)) == pytest.approx(0.5, abs=0.02)


# filters

@pytest.mark.parametrize("kind,dc", [("lowpass", 1.0), ("highpass", 0.0)])
def test_biquad_dc_gain(kind, dc):
    b, a = augment.biquad_coefficients(kind, 1000.0, SR)
    assert abs(np.polyval(b[::-1], 1.0) / np.polyval(a[::-1], 1.0)) == pytest.approx(dc, abs=1e-12)
    y = augment.apply_biquad(np.ones(4000), kind, 1000.0, SR)
    assert y[-1] == pytest.approx(dc, abs=1e-6)


def test_biquad_half_power_at_cutoff():
    b, a = augment.biquad_coefficients("lowpass", 3000.0, SR)
    _, h = freqz(b, a, worN=[3000.0], fs=SR)
    assert abs(h[0]) == pytest.approx(1 / np.sqrt(2), abs=1e-9)


def test_biquad_cutoff_bounds():
    with pytest.raises(PreconditionError):
        augment.biquad_coefficients("lowpass", SR / 2, SR)


def test_high_low_pass_uses_both_branches():
    x = np.ones(3000)
    finals = {round(augment.high_low_pass(x, SR, (2200, 4000), (200, 1200), rng(s))[-1]) for s in range(20)}
    assert finals == {0, 1}


def test_high_low_pass_defaults():
    p = augment.HighLowPassParams()
    assert p.lowpass_cutoff_range == (2200.0, 4000.0) and p.highpass_cutoff_range == (200.0, 1200.0)


# delay

def test_delay_sample_count():
    x = np.zeros(10000)
    x[0] = 1.0
    y = augment.apply_delay(x, SR, 200.0, 0.5)
    assert np.flatnonzero(y).tolist() == [0, 4410] and y[4410] == 0.5


def test_delay_defaults_and_grid():
    p = augment.DelayParams()
    assert (p.delay_range_ms, p.delay_interval_ms, p.volume_factor) == ((100.0, 500.0), 1.0, 0.5)
    x = np.zeros(SR)
    x[0] = 1.0
    for s in range(10):
        y = augment.delay(x, SR, (100, 140), 20, 0.5, rng(s))
        shift_ms = np.flatnonzero(y)[1] * 1000 / SR
        assert min(abs(shift_ms - d) for d in (100, 120, 140)) < 0.05


def test_short_delay_comb_notches():
    d_ms = 61.0
    shift = round(d_ms * SR / 1000)
    x = np.zeros(shift * 40)
    x[0] = 1.0
    response = np.abs(np.fft.rfft(augment.apply_delay(x, SR, d_ms, 0.5)))
    freqs = np.fft.rfftfreq(len(x), 1 / SR)
    # |1 + 0.5 e^(-i w D)| dips to 0.5 at odd multiples of sr / (2D) and peaks at 1.5 at multiples of sr / D
    oracle = np.abs(1 + 0.5 * np.exp(-2j * np.pi * freqs * shift / SR))
    np.testing.assert_allclose(response, oracle, atol=1e-9)
    notches = freqs[(response < 0.5 + 1e-9)]
    np.testing.assert_allclose(np.diff(notches), SR / shift, rtol=1e-9)


# pitch

def test_pitch_zero_bit_identical():
    x = sine(440.0, 1.0)
    np.testing.assert_array_equal(augment.apply_pitch_shift(x, 0), x)
    np.testing.assert_array_equal(augment.pitch_shift(x, SR, (0, 0), rng()), x)


@pytest.mark.parametrize("semitones,target", [(12, 880.0), (-12, 220.0), (4, 440 * 2 ** (4 / 12))])
def test_pitch_shift_moves_dominant_bin(semitones, target):
    y = augment.apply_pitch_shift(sine(440.0, 2.0), semitones)
    bins = np.fft.rfftfreq(4096, 1 / SR)
    assert dominant_hz(y) == bins[np.argmin(np.abs(bins - target))]


@pytest.mark.parametrize("s", [-12, -5, 3, 12])
def test_pitch_shift_preserves_length(s):
    x = rng().normal(size=9000)
    assert len(augment.apply_pitch_shift(x, s)) == 9000


def test_time_stretch_duration():
    x = sine(440.0, 1.0)
    assert len(augment.time_stretch(x, 2.0)) == round(len(x) / 2)
    assert len(augment.time_stretch(x, 0.5)) == 2 * len(x)


def test_pitch_range_limits():
    with pytest.raises(PreconditionError):
        augment.pitch_shift(np.zeros(5000), SR, (-13, 0), rng())


# reverb

def test_reverb_impulse_tail():
    x = np.zeros(SR)
    x[0] = 1.0
    y = augment.apply_reverb(x, SR, 0.5)
    tail = y[int(0.05 * SR):]
    assert np.sum(tail ** 2) > 1e-3


def test_reverb_replay_and_non_invertible():
    x = rng(3).normal(size=8000)
    a = augment.reverb(x, SR, (0.0, 1.0), rng(9))
    b = augment.reverb(x, SR, (0.0, 1.0), rng(9))
    np.testing.assert_array_equal(a, b)
    once = augment.apply_reverb(x, SR, 0.5)
    twice = augment.apply_reverb(once, SR, 0.5)
    assert not np.allclose(twice, x) and not np.allclose(twice, once)


# pipelines

def test_parse_simple_pipeline():
    p = augment.parse_pipeline_spec('{"seed":42,"num_views":4,"transforms":[{"kind":"polarity_inversion","p":0.8}]}')
    assert p.seed == 42 and p.num_views == 4 and len(p.transforms) == 1
    assert p.transforms[0].kind == "polarity_inversion" and p.transforms[0].p == 0.8


def test_parse_stochastic_chain():
    p = augment.parse_pipeline_spec(json.dumps(STOCHASTIC_CHAIN))
    assert [t.p for t in p.transforms] == [0.8, 0.3, 0.2, 0.8, 0.5, 0.4, 0.3]


@pytest.mark.parametrize("doc,fragment", [
    ({"transforms": [{"kind": "flanger"}]}, "transforms[0]: unknown transform kind 'flanger'"),
    ({"transforms": [{"kind": "gain", "params": {"foo": 1}}]}, "transforms[0].params.foo"),
    ({"transforms": [{"kind": "gain", "p": 1.5}]}, "transforms[0].p"),
    ({"transforms": [{"kind": "gain", "params": {"gain_db_range": [3, -3]}}]}, "transforms[0].params"),
    ({"num_views": 0}, "num_views"),
    ({"transforms": [{"kind": "random_resized_crop"}]}, "transforms[0].params"),
])
def test_schema_errors_name_field(doc, fragment):
    with pytest.raises(InputParseError) as info:
        augment.parse_pipeline_spec(json.dumps(doc))
    assert fragment in str(info.value)


def test_malformed_json():
    with pytest.raises(InputParseError, match="malformed JSON"):
        augment.parse_pipeline_spec("{")


def test_empty_and_p0_pipelines_copy_input():
    x = AudioBuffer(sine(300.0, 0.5), SR)
    empty = augment.AugmentationPipeline(seed=1, num_views=3)
    zero = augment.parse_pipeline_spec(json.dumps(
        {"num_views": 2, "transforms": [{**t, "p": 0.0} for t in STOCHASTIC_CHAIN["transforms"]]}))
    for pipe in (empty, zero):
        for view in augment.apply_pipeline(pipe, x):
            np.testing.assert_array_equal(view.mono, x.mono)


def test_pipeline_crop_length():
    pipe = augment.parse_pipeline_spec('{"num_views":3,"transforms":[{"kind":"random_resized_crop","params":{"n_samples":1000}},{"kind":"gain"}]}')
    views = augment.apply_pipeline(pipe, AudioBuffer(sine(300.0, 0.5), SR))
    assert [v.num_frames for v in views] == [1000, 1000, 1000]


def test_pipeline_crop_too_short_fails():
    pipe = augment.parse_pipeline_spec('{"transforms":[{"kind":"random_resized_crop","params":{"n_samples":100000}}]}')
    with pytest.raises(PreconditionError):
        augment.apply_pipeline(pipe, AudioBuffer(np.zeros(100), SR))


def test_pipeline_deterministic_across_runs_and_workers():
    x = AudioBuffer(sine(440.0, 1.0), SR)
    pipe = augment.parse_pipeline_spec(json.dumps(STOCHASTIC_CHAIN))
    a = augment.apply_pipeline(pipe, x, workers=1)
    b = augment.apply_pipeline(pipe, x, workers=1)
    c = augment.apply_pipeline(pipe, x, workers=4)
    for u, v, w in zip(a, b, c):
        assert u.samples.tobytes() == v.samples.tobytes() == w.samples.tobytes()
    assert len({v.samples.tobytes() for v in a}) == 4


def test_noise_then_reverb_differs_from_reverb_then_noise():
    x = AudioBuffer(sine(440.0, 0.5), SR)
    noise = {"kind": "noise", "params": {"snr_range": [0.2, 0.2]}}
    rev = {"kind": "reverb", "params": {"room_size_range": [0.8, 0.8]}}
    dry = augment.apply_pipeline(augment.parse_pipeline_spec(json.dumps({"seed": 5, "transforms": [rev, noise]})), x)
    wet = augment.apply_pipeline(augment.parse_pipeline_spec(json.dumps({"seed": 5, "transforms": [noise, rev]})), x)
    assert not np.allclose(dry[0].mono, wet[0].mono)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63), st.integers(1, 6))
def test_views_depend_only_on_seed_and_index(seed, views):
    x = AudioBuffer(np.random.default_rng(0).normal(size=2000), 8000)
    doc = {"seed": seed, "num_views": views, "transforms": [
        {"kind": "gain", "p": 0.5}, {"kind": "noise", "p": 0.5}, {"kind": "polarity_inversion", "p": 0.5}]}
    pipe = augment.parse_pipeline_spec(json.dumps(doc))
    more = augment.parse_pipeline_spec(json.dumps({**doc, "num_views": views + 2}))
    a = augment.apply_pipeline(pipe, x)
    b = augment.apply_pipeline(more, x, workers=3)
    for u, v in zip(a, b):
        assert u.samples.tobytes() == v.samples.tobytes()


@settings(max_examples=30, deadline=None)
@given(st.integers(100, 3000), st.integers(0, 1000))
def test_length_preserved_by_non_crop_transforms(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    g = np.random.default_rng(seed + 1)
    for out in (
        augment.polarity_inversion(x),
        augment.gain(x, (-6, 0), g),
        augment.noise(x, (0, 0.1), g),
        augment.high_low_pass(x, SR, (2200, 4000), (200, 1200), g),
        augment.delay(x, SR, (1, 5), 1, 0.5, g),
        augment.reverb(x, SR, (0, 1), g),
    ):
        assert len(out) == n

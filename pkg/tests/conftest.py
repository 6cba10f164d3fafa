"""Shared fixtures: the vocal-detector vectors, test tones and the stochastic chain."""

from __future__ import annotations

import json

import numpy as np
import pytest

from mirkit.audio_io import AudioBuffer

SR = 22050

# 20-item vocal detector: ten instrumental then ten vocal tracks
VOCAL_TRUTH = np.array([False] * 10 + [True] * 10)
VOCAL_PRED = np.array([False] * 7 + [True] * 3 + [False] * 2 + [True] * 8)

SCORES_20 = np.array([0.1, 0.3, 0.8, 0.6, 0.1, 0.4, 0.5, 0.1, 0.2, 0.2,
                      0.4, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.6, 0.8, 0.7])
TRUTH_11_9 = np.array([0] * 11 + [1] * 9)
TRUTH_18_2 = np.array([0] * 18 + [1] * 2)
TRUTH_10_10 = np.array([0] * 10 + [1] * 10)

STOCHASTIC_CHAIN = {
    "seed": 42,
    "num_views": 4,
    "transforms": [
        {"kind": "polarity_inversion", "p": 0.8},
        {"kind": "noise", "p": 0.3, "params": {"snr_range": [0.001, 0.01]}},
        {"kind": "gain", "p": 0.2},
        {"kind": "high_low_pass", "p": 0.8},
        {"kind": "delay", "p": 0.5},
        {"kind": "pitch_shift", "p": 0.4},
        {"kind": "reverb", "p": 0.3},
    ],
}


def sine(freq: float, seconds: float = 1.0, sr: int = SR, amp: float = 0.5) -> np.ndarray:
    t = np.arange(int(round(seconds * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t)


def pair_count_auc(truth, scores) -> float:
    """Brute-force positive-vs-negative pair count with half credit for ties."""
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    wins = 0.0
    for p in pos:
        for n in neg:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(pos) * len(neg))


def enumerated_ap(truth, scores) -> float:
    """Average precision by direct enumeration of every distinct threshold."""
    truth = [bool(t) for t in truth]
    n_pos = sum(truth)
    total, prev_recall = 0.0, 0.0
    for thr in sorted(set(scores), reverse=True):
        picked = [t for s, t in zip(scores, truth) if s >= thr]
        tp = sum(picked)
        recall = tp / n_pos
        total += (recall - prev_recall) * (tp / len(picked))
        prev_recall = recall
    return total


@pytest.fixture
def tone_buffer() -> AudioBuffer:
    return AudioBuffer(sine(440.0, 5.0), SR)


@pytest.fixture
def chain_json() -> str:
    return json.dumps(STOCHASTIC_CHAIN)

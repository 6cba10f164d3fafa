"""Losses and regularisers for semi- and self-supervised training.

All functions are pure numpy in float64. Functions that return a gradient
return it with respect to their matrix inputs. Logs are natural logs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import PreconditionError


@dataclass(frozen=True)
class LossGrad:
    loss: float
    grad: np.ndarray


@dataclass(frozen=True)
class NtXentResult:
    loss: float
    grad_i: np.ndarray
    grad_j: np.ndarray


def soft_cross_entropy(logits, targets) -> LossGrad:
    """Mean over rows of ``-sum(targets * log_softmax(logits))``; targets are probability rows."""
    z = np.asarray(logits, dtype=np.float64)
    q = np.asarray(targets, dtype=np.float64)
    if z.ndim != 2 or z.shape != q.shape:
        raise PreconditionError(f"logits {z.shape} and targets {q.shape} must be equal 2-D shapes")
    n = z.shape[0]
    if n == 0:
        raise PreconditionError("empty batch")
    logp = log_softmax(z, axis=1)
    loss = -float(np.sum(q * logp)) / n
    grad = (np.exp(logp) * q.sum(axis=1, keepdims=True) - q) / n
    return LossGrad(loss, grad)


def softmax_cross_entropy(logits, target_class) -> LossGrad:
    """Mean negative log-likelihood of integer targets; grad is (softmax - onehot) / n."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(target_class)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise PreconditionError("logits must be (n, C) with one target per row")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise PreconditionError(f"target class out of range [0, {z.shape[1]})")
    onehot = np.zeros_like(z)
    onehot[np.arange(len(y)), y] = 1.0
    return soft_cross_entropy(z, onehot)


def cosine_similarity_matrix(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        raise PreconditionError("cosine similarity is undefined for zero rows")
    unit = z / norms[:, np.newaxis]
    return unit @ unit.T


def nt_xent(z_i, z_j, temperature: float = 0.5) -> NtXentResult:
    """Normalised temperature-scaled cross entropy over 2N stacked views.

    Row ``a`` of ``[z_i; z_j]`` treats its partner view as the positive and
    the other 2N - 2 rows as negatives. The loss is the mean over all 2N
    anchors.
    """
    zi = np.asarray(z_i, dtype=np.float64)
    zj = np.asarray(z_j, dtype=np.float64)
    if zi.shape != zj.shape or zi.ndim != 2:
        raise PreconditionError("z_i and z_j must be equal-shape matrices")
    if temperature <= 0:
        raise PreconditionError("temperature must be positive")
    batch = zi.shape[0]
    if batch < 2:
        raise PreconditionError("nt_xent needs batch >= 2 so that negatives exist")

    z = np.vstack([zi, zj])
    m = 2 * batch
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        raise PreconditionError("cosine similarity is undefined for zero rows")
    unit = z / norms[:, np.newaxis]
    logits = unit @ unit.T / temperature
    np.fill_diagonal(logits, -np.inf)
    partner = np.r_[np.arange(batch, m), np.arange(batch)]
    rows = np.arange(m)

    logp = log_softmax(logits, axis=1)
    loss = -float(np.mean(logp[rows, partner]))

    # dL/dS where S is the cosine-similarity matrix
    g = softmax(logits, axis=1)
    g[rows, partner] -= 1.0
    g /= m * temperature
    g_unit = (g + g.T) @ unit
    radial = np.sum(g_unit * unit, axis=1, keepdims=True)
    grad = (g_unit - radial * unit) / norms[:, np.newaxis]
    return NtXentResult(loss, grad[:batch], grad[batch:])


def combine_semi_supervised(l_sup: float, l_unsup: float, lam: float) -> float:
    if lam < 0:
        raise PreconditionError("lambda must be nonnegative")
    return l_sup + lam * l_unsup


def _probability_rows(p, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if np.any(arr < 0):
        raise PreconditionError(f"{name} has negative entries")
    if not np.allclose(arr.sum(axis=1), 1.0, atol=1e-6, rtol=0):
        raise PreconditionError(f"{name} rows must sum to 1")
    return arr


def consistency_distance(p1, p2) -> float:
    """Mean squared error between two prediction matrices."""
    a = _probability_rows(p1, "p1")
    b = _probability_rows(p2, "p2")
    if a.shape != b.shape:
        raise PreconditionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def prediction_entropy(p) -> float:
    """Mean row entropy in nats, with 0 log 0 taken as 0."""
    arr = _probability_rows(p, "p")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(arr > 0, arr * np.log(np.where(arr > 0, arr, 1.0)), 0.0)
    return float(np.mean(-terms.sum(axis=1)))


def harden_pseudo_label(p) -> np.ndarray:
    """One-hot at the argmax; ties resolve to the lowest index. Works row-wise on matrices."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.size == 0:
        raise PreconditionError("cannot harden an empty vector")
    out = np.zeros_like(arr)
    if arr.ndim == 1:
        out[np.argmax(arr)] = 1.0
    else:
        out[np.arange(arr.shape[0]), np.argmax(arr, axis=1)] = 1.0
    return out

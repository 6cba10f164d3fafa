"""Classification metrics, threshold-free AUC measures and chunk aggregation.

ROC-AUC uses the rank statistic with half credit for ties (identical to the
trapezoidal area under the ROC curve). PR-AUC is the step-sum average
precision over distinct score thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import PreconditionError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn_: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn_ + self.tn


@dataclass(frozen=True)
class BinaryMetrics:
    accuracy: float
    precision: float
    recall: float
    specificity: float
    f_beta: float
    beta: float = 1.0
    degenerate: tuple[str, ...] = ()

    @property
    def sensitivity(self) -> float:
        return self.recall

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "f_beta": self.f_beta,
            "beta": self.beta,
            "degenerate": list(self.degenerate),
        }


@dataclass(frozen=True)
class PredictionSet:
    item_ids: list
    scores: np.ndarray  # (items, classes)
    truth: np.ndarray  # (items, classes), bool
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        truth = np.atleast_2d(np.asarray(self.truth, dtype=bool))
        if scores.shape != truth.shape:
            raise PreconditionError(f"scores shape {scores.shape} != truth shape {truth.shape}")
        if len(self.item_ids) != scores.shape[0]:
            raise PreconditionError("one id per item required")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise PreconditionError("item ids must be unique")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "truth", truth)
        if not self.class_names:
            object.__setattr__(self, "class_names", [str(i) for i in range(scores.shape[1])])


def _bool_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise PreconditionError(f"{name} must be a vector")
    return arr.astype(bool)


def confusion_counts(truth, predicted) -> ConfusionCounts:
    t = _bool_vector(truth, "truth")
    p = _bool_vector(predicted, "predicted")
    if len(t) != len(p):
        raise PreconditionError(f"length mismatch: {len(t)} vs {len(p)}")
    return ConfusionCounts(
        tp=int(np.sum(t & p)),
        fp=int(np.sum(~t & p)),
        fn_=int(np.sum(t & ~p)),
        tn=int(np.sum(~t & ~p)),
    )


def accuracy(truth, predicted) -> float:
    """Fraction of positions where two label vectors agree."""
    t = np.asarray(truth)
    p = np.asarray(predicted)
    if t.shape != p.shape or t.ndim != 1:
        raise PreconditionError("label vectors must have equal length")
    if len(t) == 0:
        raise PreconditionError("accuracy of an empty set is undefined")
    return float(np.mean(t == p))


def binary_metrics(c: ConfusionCounts, beta: float = 1.0) -> BinaryMetrics:
    """Accuracy, precision, recall, specificity and F-beta.

    A 0/0 ratio evaluates to 0 and its name is listed in ``degenerate``.
    """
    if c.total <= 0:
        raise PreconditionError("confusion counts are empty")
    if beta <= 0:
        raise PreconditionError("beta must be positive")
    degenerate = []

    def ratio(num, den, name):
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    precision = ratio(c.tp, c.tp + c.fp, "precision")
    recall = ratio(c.tp, c.tp + c.fn_, "recall")
    specificity = ratio(c.tn, c.fp + c.tn, "specificity")
    b2 = beta * beta
    f_beta = ratio((1 + b2) * precision * recall, b2 * precision + recall, "f_beta")
    return BinaryMetrics(
        accuracy=(c.tp + c.tn) / c.total,
        precision=precision,
        recall=recall,
        specificity=specificity,
        f_beta=f_beta,
        beta=beta,
        degenerate=tuple(degenerate),
    )


def _check_scored(truth, scores):
    t = _bool_vector(truth, "truth")
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or len(s) != len(t):
        raise PreconditionError("truth and scores must be vectors of equal length")
    if np.any(np.isnan(s)):
        raise PreconditionError("scores contain NaN")
    return t, s


def roc_auc(truth, scores) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    t, s = _check_scored(truth, scores)
    n_pos = int(t.sum())
    n_neg = len(t) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise PreconditionError("ROC-AUC is undefined when truth contains a single class")
    ranks = rankdata(s)
    u = ranks[t].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(truth, scores) -> float:
    """Sum over descending distinct thresholds of (R_n - R_{n-1}) * P_n."""
    t, s = _check_scored(truth, scores)
    n_pos = int(t.sum())
    if n_pos == 0:
        raise PreconditionError("average precision is undefined without positives")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, t_sorted = s[order], t[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[np.diff(s_sorted) != 0, True])
    tps = np.cumsum(t_sorted)[ends]
    predicted = ends + 1
    precision = tps / predicted
    recall = tps / n_pos
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * precision))


@dataclass(frozen=True)
class MacroResult:
    per_class: list  # float per class, None where skipped
    macro: float
    skipped: list


def macro_multilabel(pred_set: PredictionSet, metric: str = "roc_auc") -> MacroResult:
    """Unweighted mean of a per-class metric; classes lacking the needed labels are skipped."""
    funcs = {"roc_auc": roc_auc, "average_precision": average_precision}
    if metric not in funcs:
        raise PreconditionError(f"unknown metric {metric!r}")
    per_class, skipped = [], []
    for k in range(pred_set.scores.shape[1]):
        try:
            per_class.append(funcs[metric](pred_set.truth[:, k], pred_set.scores[:, k]))
        except PreconditionError:
            per_class.append(None)
            skipped.append(pred_set.class_names[k])
    values = [v for v in per_class if v is not None]
    if not values:
        raise PreconditionError(f"no class is evaluable for {metric}")
    return MacroResult(per_class, float(np.mean(values)), skipped)


def aggregate_chunks(chunk_scores, method: str = "mean"):
    """Combine chunk-level scores into one track-level prediction.

    ``mean``/``max`` reduce columnwise and return a vector. ``majority``
    returns the most common per-chunk argmax; ties go to the lowest class index.
    """
    scores = np.atleast_2d(np.asarray(chunk_scores, dtype=np.float64))
    if scores.shape[0] == 0 or scores.shape[1] == 0:
        raise PreconditionError("no chunks to aggregate")
    if method == "mean":
        return scores.mean(axis=0)
    if method == "max":
        return scores.max(axis=0)
    if method == "majority":
        votes = np.bincount(scores.argmax(axis=1), minlength=scores.shape[1])
        return int(np.argmax(votes))
    raise PreconditionError(f"unknown aggregation method {method!r}")

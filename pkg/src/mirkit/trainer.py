"""Softmax linear classifier, Noisy Student self-training and linear evaluation.

Optimisation is plain minibatch gradient descent from a zero initialisation.
Shuffling for labeled data always comes from ``default_rng([seed, 0])`` and
everything touching unlabeled data from ``default_rng([seed, 1])``, so a
student trained with ``lam=0`` retraces ``fit_supervised`` exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import softmax

from . import formats
from .errors import InputParseError, PreconditionError
from .losses import harden_pseudo_label, soft_cross_entropy, softmax_cross_entropy
from .metrics import accuracy

Augment = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass
class LinearModel:
    W: np.ndarray  # (n_classes, feature_dim)
    b: np.ndarray  # (n_classes,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise PreconditionError(f"inconsistent model shapes W{self.W.shape} b{self.b.shape}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise PreconditionError("model parameters must be finite")

    @classmethod
    def zeros(cls, n_classes: int, feature_dim: int) -> "LinearModel":
        return cls(np.zeros((n_classes, feature_dim)), np.zeros(n_classes))

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "LinearModel":
        return LinearModel(self.W.copy(), self.b.copy())


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 32  # 0 means full batch
    seed: int = 0
    lam: float = 1.0
    pseudo_label_mode: str = "soft"
    noise_std: float = 0.0
    iterations: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise PreconditionError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 0 or self.iterations < 1:
            raise PreconditionError("epochs and batch_size must be >= 0, iterations >= 1")
        if self.lam < 0:
            raise PreconditionError("lam must be nonnegative")
        if self.noise_std < 0:
            raise PreconditionError("noise_std must be nonnegative")
        if self.pseudo_label_mode not in ("soft", "hard"):
            raise PreconditionError(f"pseudo_label_mode must be 'soft' or 'hard', got {self.pseudo_label_mode!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputParseError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LabeledSet:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.features.shape[0],):
            raise PreconditionError("one label per feature row required")
        if self.n_classes is None:
            self.n_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise PreconditionError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return len(self.labels)


@dataclass
class UnlabeledSet:
    features: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))

    def __len__(self):
        return self.features.shape[0]


@dataclass
class TrainResult:
    model: LinearModel
    loss_trace: list = field(default_factory=list)


@dataclass
class NoisyStudentResult:
    teacher: LinearModel
    student: LinearModel
    pseudo_labels: np.ndarray
    teacher_trace: list
    student_trace: list


@dataclass
class LinearEvalResult:
    model: LinearModel
    test_accuracy: float
    loss_trace: list


def forward_logits(model: LinearModel, features) -> np.ndarray:
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.feature_dim:
        raise PreconditionError(f"feature dim {x.shape[1]} != model dim {model.feature_dim}")
    return x @ model.W.T + model.b


def predict_proba(model: LinearModel, features) -> np.ndarray:
    return softmax(forward_logits(model, features), axis=1)


def predict(model: LinearModel, features) -> np.ndarray:
    return np.argmax(forward_logits(model, features), axis=1)


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list:
    order = rng.permutation(n)
    size = n if batch_size == 0 else batch_size
    return [order[i:i + size] for i in range(0, n, size)]


def supervised_gradient(model: LinearModel, x: np.ndarray, y: np.ndarray):
    """Loss and (dW, db) of mean softmax cross entropy on one batch."""
    res = softmax_cross_entropy(forward_logits(model, x), y)
    return res.loss, res.grad.T @ x, res.grad.sum(axis=0)


def fit_supervised(data: LabeledSet, cfg: TrainConfig, init: LinearModel | None = None) -> TrainResult:
    if len(data) < 1:
        raise PreconditionError("need at least one labeled example")
    model = init.copy() if init is not None else LinearModel.zeros(data.n_classes, data.features.shape[1])
    rng = np.random.default_rng([cfg.seed, 0])
    trace = []
    for _ in range(cfg.epochs):
        losses = []
        for idx in _batches(len(data), cfg.batch_size, rng):
            loss, dW, db = supervised_gradient(model, data.features[idx], data.labels[idx])
            model.W -= cfg.learning_rate * dW
            model.b -= cfg.learning_rate * db
            losses.append(loss)
        trace.append(float(np.mean(losses)))
    return TrainResult(model, trace)


def pseudo_labels(teacher: LinearModel, features, mode: str = "soft") -> np.ndarray:
    """Teacher targets for unlabeled rows: softmax vectors, or their one-hot argmax."""
    probs = predict_proba(teacher, features)
    if mode == "hard":
        return harden_pseudo_label(probs)
    if mode == "soft":
        return probs
    raise PreconditionError(f"unknown pseudo-label mode {mode!r}")


def gaussian_jitter(std: float) -> Augment:
    def jitter(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return z + std * rng.standard_normal(z.shape)
    return jitter


def _train_student(labeled: LabeledSet, unlabeled: UnlabeledSet, targets: np.ndarray, cfg: TrainConfig,
                   augment: Augment) -> TrainResult:
    model = LinearModel.zeros(labeled.n_classes, labeled.features.shape[1])
    lab_rng = np.random.default_rng([cfg.seed, 0])
    unl_rng = np.random.default_rng([cfg.seed, 1])
    trace = []
    for _ in range(cfg.epochs):
        lab_batches = _batches(len(labeled), cfg.batch_size, lab_rng)
        unl_batches = np.array_split(unl_rng.permutation(len(unlabeled)), len(lab_batches))
        losses = []
        for idx, uidx in zip(lab_batches, unl_batches):
            l1, dW, db = supervised_gradient(model, labeled.features[idx], labeled.labels[idx])
            l2 = 0.0
            if len(uidx):
                z_hat = augment(unlabeled.features[uidx], unl_rng)
                res = soft_cross_entropy(forward_logits(model, z_hat), targets[uidx])
                l2 = res.loss
                dW = dW + cfg.lam * (res.grad.T @ z_hat)
                db = db + cfg.lam * res.grad.sum(axis=0)
            model.W -= cfg.learning_rate * dW
            model.b -= cfg.learning_rate * db
            losses.append(l1 + cfg.lam * l2)
        trace.append(float(np.mean(losses)))
    return TrainResult(model, trace)


def noisy_student_train(labeled: LabeledSet, unlabeled: UnlabeledSet, teacher_cfg: TrainConfig,
                        student_cfg: TrainConfig, augment: Augment | None = None,
                        teacher: LinearModel | None = None) -> NoisyStudentResult:
    """Train a teacher on labeled data, then a student on labels plus teacher pseudo-labels.

    Pseudo-labels come from the frozen teacher on clean unlabeled features;
    the student sees noised copies (Gaussian jitter with ``student_cfg.noise_std``
    unless ``augment`` is given). Each step minimises ``l1 + lam * l2``.
    With ``student_cfg.iterations > 1`` the student becomes the next teacher.
    Passing ``teacher`` skips teacher training.
    """
    if len(labeled) == 0 or len(unlabeled) == 0:
        raise PreconditionError("labeled and unlabeled sets must be nonempty")
    if labeled.features.shape[1] != unlabeled.features.shape[1]:
        raise PreconditionError("labeled and unlabeled feature dims differ")
    if augment is None:
        augment = gaussian_jitter(student_cfg.noise_std)

    teacher_trace = []
    if teacher is None:
        fitted = fit_supervised(labeled, teacher_cfg)
        teacher, teacher_trace = fitted.model, fitted.loss_trace
    first_teacher = teacher

    for _ in range(student_cfg.iterations):
        targets = pseudo_labels(teacher, unlabeled.features, student_cfg.pseudo_label_mode)
        result = _train_student(labeled, unlabeled, targets, student_cfg, augment)
        teacher = result.model
    return NoisyStudentResult(first_teacher, result.model, targets, teacher_trace, result.loss_trace)


def linear_evaluation(train: LabeledSet, test: LabeledSet, cfg: TrainConfig) -> LinearEvalResult:
    """Fit a linear probe on frozen training features and score it on test features."""
    if train.features.shape[1] != test.features.shape[1]:
        raise PreconditionError("train and test feature dims differ")
    n_classes = max(train.n_classes, test.n_classes)
    train = LabeledSet(train.features, train.labels, n_classes)
    fitted = fit_supervised(train, cfg)
    acc = accuracy(test.labels, predict(fitted.model, test.features))
    return LinearEvalResult(fitted.model, acc, fitted.loss_trace)


def save_checkpoint(model: LinearModel, path, cfg: TrainConfig | None = None) -> Path:
    """Write ``[W | b]`` as an F32M matrix plus a JSON sidecar next to it."""
    path = Path(path)
    formats.write_matrix_binary(np.hstack([model.W, model.b[:, np.newaxis]]), path)
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = {
        "feature_dim": model.feature_dim,
        "n_classes": model.n_classes,
        "seed": cfg.seed if cfg else None,
        "config": cfg.to_dict() if cfg else None,
    }
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar


def load_checkpoint(path) -> LinearModel:
    path = Path(path)
    mat = formats.read_matrix_binary(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        if mat.shape != (meta["n_classes"], meta["feature_dim"] + 1):
            raise InputParseError(f"{path}: matrix shape {mat.shape} disagrees with sidecar")
    return LinearModel(mat[:, :-1].astype(np.float64), mat[:, -1].astype(np.float64))


def blobs(n: int, seed: int, dim: int = 2, separation: float = 4.0, std: float = 1.0):
    """Two Gaussian blobs at +/- separation/2 along the first axis, balanced labels."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    centers = np.zeros((2, dim))
    centers[0, 0], centers[1, 0] = -separation / 2, separation / 2
    x = centers[labels] + std * rng.standard_normal((n, dim))
    return x, labels

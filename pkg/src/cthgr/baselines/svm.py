"""One-vs-rest linear SVM trained by minibatch SGD on the primal hinge objective.

Each class ``k`` gets ``(w_k, b_k)`` minimising
``lam/2 * |w_k|^2 + mean_i max(0, 1 - y_ik (w_k . x_i + b_k))`` with
``y_ik = +1`` for members of ``k`` and ``-1`` otherwise. Step sizes decay as
``1 / (1 + lam * t)``, i.e. the Pegasos ``1 / (lam * t)`` rate without its huge
first steps; the returned weights are the iterate average over the second half
of training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-3
    epochs: int = 60
    batch_size: int = 32
    seed: int = 0


@dataclass
class LinearSVM:
    weights: np.ndarray  # [D x K]
    bias: np.ndarray  # [K]
    classes: np.ndarray  # [K] original labels
    mean: np.ndarray
    std: np.ndarray

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        return self.standardize(x) @ self.weights + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.decision_function(x), axis=1)]


def fit_standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def train_svm(features: np.ndarray, labels: np.ndarray, cfg: SvmConfig = SvmConfig()) -> LinearSVM:
    """Fit on training features; standardisation statistics come from these features only."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("SVM training needs at least two classes")
    mean, std = fit_standardizer(x)
    xs = (x - mean) / std
    n, d = xs.shape
    k = classes.size
    y = np.where(labels[:, None] == classes[None, :], 1.0, -1.0)

    rng = np.random.default_rng(cfg.seed)
    w = np.zeros((d, k))
    b = np.zeros(k)
    w_avg, b_avg, n_avg = np.zeros_like(w), np.zeros_like(b), 0
    bs = min(cfg.batch_size, n)
    steps_per_epoch = -(-n // bs)
    total = cfg.epochs * steps_per_epoch
    t = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for s in range(steps_per_epoch):
            idx = perm[s * bs : (s + 1) * bs]
            t += 1
            eta = 1.0 / (1.0 + cfg.lam * t)
            margin = y[idx] * (xs[idx] @ w + b)
            active = (margin < 1.0) * y[idx]
            gw = cfg.lam * w - xs[idx].T @ active / idx.size
            gb = -active.sum(axis=0) / idx.size
            w -= eta * gw
            b -= eta * gb
            if t > total // 2:
                n_avg += 1
                w_avg += (w - w_avg) / n_avg
                b_avg += (b - b_avg) / n_avg
    if n_avg == 0:
        w_avg, b_avg = w, b
    return LinearSVM(weights=w_avg, bias=b_avg, classes=classes, mean=mean, std=std)


def hinge_objective(model: LinearSVM, features: np.ndarray, labels: np.ndarray, lam: float) -> float:
    xs = model.standardize(features)
    y = np.where(np.asarray(labels)[:, None] == model.classes[None, :], 1.0, -1.0)
    hinge = np.maximum(0.0, 1.0 - y * (xs @ model.weights + model.bias)).mean(axis=0)
    return float(np.sum(0.5 * lam * (model.weights**2).sum(axis=0) + hinge))

"""Minibatch training loop shared by CT-HGR, the 3-D CNN and the fusion head."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Adam, Tensor, cross_entropy, learning_rate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    lr: float = 1e-4
    weight_decay: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    schedule: str = "linear"
    anneal_after: int = 10
    decoupled: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.schedule not in ("linear", "step", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)


def train_classifier(model, x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                     params: list[Tensor] | None = None, check=None) -> TrainHistory:
    """Fit ``model`` in place on ``(x, y)`` with Adam and cross-entropy.

    ``model.forward(x, train, rng)`` must return logits; ``y`` holds class indices.
    ``check`` (optional) is called after every backward pass, e.g. to audit frozen weights.
    """
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    if len(x) != len(y):
        raise ValueError("inputs and labels differ in length")
    params = model.parameters() if params is None else params
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay, betas=cfg.betas, eps=cfg.eps,
               decoupled=cfg.decoupled)
    rng = np.random.default_rng(cfg.seed)
    n = len(x)
    steps_per_epoch = -(-n // cfg.batch_size)
    hist = TrainHistory()
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total, correct = 0.0, 0
        for s in range(steps_per_epoch):
            idx = perm[s * cfg.batch_size : (s + 1) * cfg.batch_size]
            opt.lr = learning_rate(cfg.lr, step, steps_per_epoch, cfg.epochs, cfg.anneal_after, cfg.schedule)
            opt.zero_grad()
            logits = model.forward(x[idx], train=True, rng=rng)
            loss = cross_entropy(logits, y[idx])
            loss.backward()
            if check is not None:
                check()
            opt.step()
            step += 1
            total += loss.item() * idx.size
            correct += int(np.sum(np.argmax(logits.data, axis=1) == y[idx]))
        hist.loss.append(total / n)
        hist.train_accuracy.append(100.0 * correct / n)
        hist.lr.append(opt.lr)
        log.debug("epoch %d loss %.4f train acc %.2f", epoch + 1, hist.loss[-1], hist.train_accuracy[-1])
    return hist


def predict_logits(model, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
    x = np.asarray(x)
    out = [model.forward(x[i : i + batch_size], train=False).data for i in range(0, len(x), batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, 0))


def predict(model, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
    return np.argmax(predict_logits(model, x, batch_size), axis=1)


def accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Window-level top-1 accuracy in percent."""
    truth = np.asarray(truth)
    if truth.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return 100.0 * float(np.mean(np.asarray(pred) == truth))

"""Adam with decoupled weight decay, and learning-rate schedules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decoupled: bool = True
    step: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray | None], state: AdamState) -> None:
    """One in-place Adam update.

    With ``state.decoupled`` the decay shrinks the parameter by ``1 - lr*wd`` before
    the moment-based delta; otherwise ``wd * param`` is added to the gradient.
    Parameters whose gradient is ``None`` are left untouched.
    """
    lr = state.learning_rate
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    if len(state.first_moment) != len(params):
        raise ValueError("optimizer state does not match the parameter list")
    state.step += 1
    b1, b2, t = state.beta1, state.beta2, state.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g is None:
            continue
        if state.weight_decay:
            if state.decoupled:
                p *= 1.0 - lr * state.weight_decay
            else:
                g = g + state.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-4,
        weight_decay: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        decoupled: bool = True,
    ):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.params = list(params)
        self.state = AdamState(lr, weight_decay, betas[0], betas[1], eps, decoupled)

    @property
    def lr(self) -> float:
        return self.state.learning_rate

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.learning_rate = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state)


def learning_rate(
    base_lr: float, step: int, steps_per_epoch: int, epochs: int, anneal_after: int = 10, kind: str = "linear"
) -> float:
    """Learning rate for global ``step`` (0-based).

    ``linear``: constant for the first ``anneal_after`` epochs, then linear decay to
    zero across the remaining ones. ``step``: x0.1 after ``anneal_after`` epochs.
    ``constant``: no annealing.
    """
    start = anneal_after * steps_per_epoch
    total = epochs * steps_per_epoch
    if kind == "constant" or step < start or epochs <= anneal_after:
        return base_lr
    if kind == "step":
        return base_lr * 0.1
    if kind == "linear":
        return base_lr * (1.0 - (step - start) / max(total - start, 1))
    raise ValueError(f"unknown schedule {kind!r}")

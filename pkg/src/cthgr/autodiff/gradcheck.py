"""Central-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_input: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)``.

    The floor keeps gradients that are identically zero in exact arithmetic (e.g.
    a key bias under softmax) from turning finite-difference noise into a large ratio.
    """
    denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / denom)


def numeric_gradient(f: Callable[..., Tensor], inputs: Sequence[Tensor], which: int, step: float) -> np.ndarray:
    x = inputs[which].data
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(*inputs).data)
        flat[i] = orig - step
        fm = float(f(*inputs).data)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return grad


def grad_check(
    f: Callable[..., Tensor],
    inputs: Tensor | Sequence[Tensor],
    tolerance: float = 1e-6,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare backprop gradients of scalar ``f(*inputs)`` with central differences.

    Inputs are promoted to float64 in place; ``f`` must be deterministic (no
    training-mode dropout).
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    inputs = list(inputs)
    for t in inputs:
        if t.data.dtype != np.float64:
            t.data = t.data.astype(np.float64)
        t.requires_grad = True
        t.grad = None
    out = f(*inputs)
    if out.requires_grad:
        out.backward()
    errors = []
    for i, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_gradient(f, inputs, i, step)
        errors.append(relative_error(analytic, numeric))
    return GradCheckReport(max(errors, default=0.0), tolerance, errors)

"""Built-in self checks: finite-difference gradients for every op and two tiny models."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .baselines.cnn3d import Cnn3d, Cnn3dConfig
from .model import CTHGR, REFERENCE_PARAM_COUNTS, ModelConfig, PatchSpec, count_parameters, preset

OP_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _t(rng: np.random.Generator, *shape, positive: bool = False) -> Tensor:
    x = rng.standard_normal(shape)
    if positive:
        x = np.abs(x) + 0.5
    return Tensor(x, requires_grad=True)


def _weighted(out: Tensor, rng_seed: int = 99) -> Tensor:
    """Reduce to a scalar with fixed random weights so every output element matters."""
    w = np.random.default_rng(rng_seed).standard_normal(out.shape)
    return (out * Tensor(w)).sum()


def op_cases(seed: int = 0) -> list[tuple[str, Callable[..., Tensor], list[Tensor]]]:
    rng = np.random.default_rng(seed)
    labels = np.array([0, 2, 1, 2])

    def drop(x):
        return ad.dropout(x, 0.3, True, np.random.default_rng(5))

    return [
        ("add(broadcast)", lambda a, b: _weighted(a + b), [_t(rng, 3, 4), _t(rng, 4)]),
        ("sub", lambda a, b: _weighted(a - b), [_t(rng, 3, 4), _t(rng, 3, 1)]),
        ("mul(broadcast)", lambda a, b: _weighted(a * b), [_t(rng, 2, 3, 4), _t(rng, 3, 1)]),
        ("scale", lambda a: _weighted(a * 2.5), [_t(rng, 5)]),
        ("div(scalar)", lambda a: _weighted(a / 3.0), [_t(rng, 5)]),
        ("neg", lambda a: _weighted(-a), [_t(rng, 2, 2)]),
        ("matmul", lambda a, b: _weighted(a @ b), [_t(rng, 3, 4), _t(rng, 4, 2)]),
        ("matmul(batched)", lambda a, b: _weighted(a @ b), [_t(rng, 2, 3, 4), _t(rng, 4, 5)]),
        ("reshape", lambda a: _weighted(a.reshape(6, 2)), [_t(rng, 3, 4)]),
        ("transpose", lambda a: _weighted(a.transpose(2, 0, 1)), [_t(rng, 2, 3, 4)]),
        ("swapaxes", lambda a: _weighted(ad.swapaxes(a, -1, -2)), [_t(rng, 2, 3, 4)]),
        ("broadcast_to", lambda a: _weighted(ad.broadcast_to(a, (3, 2, 4))), [_t(rng, 1, 4)]),
        ("concat", lambda a, b: _weighted(ad.concat([a, b], axis=1)), [_t(rng, 2, 3), _t(rng, 2, 2)]),
        ("getitem", lambda a: _weighted(a[:, 1:3]), [_t(rng, 3, 4)]),
        ("getitem(repeat)", lambda a: _weighted(a[np.array([0, 2, 0])]), [_t(rng, 3, 2)]),
        ("sum(axis)", lambda a: _weighted(a.sum(axis=1)), [_t(rng, 3, 4)]),
        ("mean", lambda a: _weighted(a.mean(axis=0, keepdims=True)), [_t(rng, 3, 4)]),
        ("exp", lambda a: _weighted(ad.exp(a)), [_t(rng, 3, 3)]),
        ("log", lambda a: _weighted(ad.log(a)), [_t(rng, 3, 3, positive=True)]),
        ("linear", lambda x, w, b: _weighted(ad.linear(x, w, b)), [_t(rng, 2, 3, 4), _t(rng, 4, 5), _t(rng, 5)]),
        ("softmax", lambda a: _weighted(ad.softmax(a, axis=-1)), [_t(rng, 3, 5)]),
        ("log_softmax", lambda a: _weighted(ad.log_softmax(a, axis=-1)), [_t(rng, 3, 5)]),
        ("layer_norm", lambda x, g, b: _weighted(ad.layer_norm(x, g, b)), [_t(rng, 2, 3, 6), _t(rng, 6), _t(rng, 6)]),
        ("gelu", lambda a: _weighted(ad.gelu(a)), [_t(rng, 4, 5)]),
        ("relu", lambda a: _weighted(ad.relu(a)), [Tensor(rng.choice([-1, 1], (4, 5)) * rng.uniform(0.1, 1, (4, 5)))]),
        ("dropout(fixed mask)", lambda a: _weighted(drop(a)), [_t(rng, 4, 5)]),
        ("cross_entropy", lambda a: ad.cross_entropy(a, labels), [_t(rng, 4, 3)]),
        ("conv3d", lambda x, w, b: _weighted(ad.conv3d(x, w, b)), [_t(rng, 2, 2, 5, 4, 4), _t(rng, 3, 2, 3, 2, 2), _t(rng, 3)]),
        ("maxpool3d", lambda x: _weighted(ad.maxpool3d(x, (2, 2, 2))), [_t(rng, 2, 2, 4, 5, 3)]),
    ]


def tiny_ct_hgr(seed: int = 0) -> CTHGR:
    cfg = ModelConfig(d=8, heads=2, layers=2, mlp_hidden=12, n_classes=3, input_shape=(4, 4, 2),
                      patch=PatchSpec(2, 2), init_std=0.5)
    model = CTHGR(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    for p in model.parameters():
        p.data = p.data + 0.1 * rng.standard_normal(p.shape)  # move gains/biases off their trivial init
    return model


def tiny_cnn3d(seed: int = 0) -> Cnn3d:
    cfg = Cnn3dConfig(input_shape=(12, 5, 5), conv1=2, conv2=3, kernel=(3, 2, 2), fc=(6, 4), n_classes=3, dropout=0.0)
    return Cnn3d(cfg, seed=seed, dtype=np.float64)


def model_case(model, x: np.ndarray, labels: np.ndarray):
    names = list(model.params)

    def f(*ps):
        for n, p in zip(names, ps):
            model.params[n] = p
        return ad.cross_entropy(model.forward(x), labels)

    return f, [model.params[n] for n in names]


def model_cases(seed: int = 0):
    rng = np.random.default_rng(seed)
    labels = np.array([0, 1, 2])
    vit = tiny_ct_hgr(seed)
    cnn = tiny_cnn3d(seed)
    return [
        ("ct-hgr(tiny)", *model_case(vit, rng.standard_normal((3, 4, 4, 2)), labels)),
        ("cnn3d(tiny)", *model_case(cnn, rng.standard_normal((3, 12, 5, 5)), labels)),
    ]


def run_gradient_suite(seed: int = 0) -> list[CheckResult]:
    results = []
    for name, f, inputs in op_cases(seed):
        t0 = time.perf_counter()
        rep = grad_check(f, inputs, tolerance=OP_TOLERANCE)
        results.append(CheckResult(name, rep.max_rel_error, OP_TOLERANCE, time.perf_counter() - t0))
    for name, f, inputs in model_cases(seed):
        t0 = time.perf_counter()
        rep = grad_check(f, inputs, tolerance=MODEL_TOLERANCE)
        results.append(CheckResult(name, rep.max_rel_error, MODEL_TOLERANCE, time.perf_counter() - t0))
    return results


def run_oracle_suite(seed: int = 0) -> list[CheckResult]:
    """Closed-form checks: parameter counts, mu-law, filter gains, window counts, a tiny decomposition."""
    from .decomp import DecompConfig, decompose_window, rate_of_agreement
    from .dsp import butterworth_coefficients, count_windows, mu_law
    from .synthetic import synthesize_mixture

    out = []

    def add(name, err, tol, t0):
        out.append(CheckResult(name, float(err), tol, time.perf_counter() - t0))

    t0 = time.perf_counter()
    worst = max(abs(count_parameters(preset(v, c, w)) - ref) for (v, c, w), ref in REFERENCE_PARAM_COUNTS.items())
    add("parameter counts", worst, 0.5, t0)

    t0 = time.perf_counter()
    x = np.linspace(-1, 1, 201)
    err = max(abs(mu_law(np.array([0.0, 1.0, -1.0])) - [0.0, 1.0, -1.0]).max(),
              np.abs(mu_law(-x) + mu_law(x)).max())
    add("mu-law fixed points/odd", err, 1e-15, t0)
    t0 = time.perf_counter()
    add("mu-law(0.5)", abs(mu_law(np.array([0.5]))[0] - 0.875703), 1e-6, t0)

    t0 = time.perf_counter()
    b0, b1, a1 = butterworth_coefficients(1.0, 2048.0)
    dc = (b0 + b1) / (1 + a1)
    nyq = (b0 - b1) / (1 - a1)
    add("butterworth gains", max(abs(dc - 1), abs(nyq)), 1e-9, t0)

    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(200):
        n, w, s = int(rng.integers(0, 300)), int(rng.integers(1, 80)), int(rng.integers(1, 40))
        bad += count_windows(n, w, s) != len(range(0, n - w + 1, s))
    add("window counts", bad, 0.5, t0)

    t0 = time.perf_counter()
    obs, trains = synthesize_mixture(n_mu=1, snr_db=None, seed=seed)
    units = decompose_window(obs, DecompConfig(seed=seed))
    best = max((rate_of_agreement(u.discharge_indices, trains[0], tolerance=1, max_lag=40) for u in units), default=0)
    add("decomposition (noiseless)", 1.0 - best, 0.1, t0)
    return out

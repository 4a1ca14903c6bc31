"""Neural-network ops: softmax, layer norm, GELU, dropout, cross-entropy, 3-D conv and pooling."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .tensor import Tensor, _unbroadcast, as_tensor, matmul

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _check_axis(axis: int, ndim: int) -> int:
    ax = axis if axis >= 0 else axis + ndim
    if not 0 <= ax < ndim:
        raise ValueError(f"axis {axis} out of range for {ndim}-d tensor")
    return ax


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y + b if b is not None else y


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _check_axis(axis, x.ndim)
    z = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=ax, keepdims=True)
    return Tensor._make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=ax, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _check_axis(axis, x.ndim)
    z = x.data - x.data.max(axis=ax, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=ax, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return Tensor._make(y, (x,), lambda g: (g - p * g.sum(axis=ax, keepdims=True),))


def layer_norm(
    x: Tensor, gain: Tensor | None = None, bias: Tensor | None = None, axis: int = -1, eps: float = 1e-5
) -> Tensor:
    """Normalise along ``axis`` to zero mean / unit (biased) variance, then ``gain * xhat + bias``."""
    ax = _check_axis(axis, x.ndim)
    mu = x.data.mean(axis=ax, keepdims=True)
    xc = x.data - mu
    var = (xc**2).mean(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    if gain is not None and gain.ndim == 1 and ax != x.ndim - 1:
        raise ValueError("affine layer_norm with 1-d gain requires the last axis")
    gd = None if gain is None else gain.data
    out = xhat if gd is None else xhat * gd
    if bias is not None:
        out = out + bias.data
    parents = tuple(t for t in (x, gain, bias) if t is not None)

    def back(g):
        dxhat = g if gd is None else g * gd
        dx = inv * (
            dxhat - dxhat.mean(axis=ax, keepdims=True) - xhat * (dxhat * xhat).mean(axis=ax, keepdims=True)
        )
        grads = [dx]
        if gain is not None:
            grads.append(_unbroadcast(g * xhat, gain.shape))
        if bias is not None:
            grads.append(_unbroadcast(g, bias.shape))
        return tuple(grads)

    return Tensor._make(out, parents, back)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd**2)
    return Tensor._make(xd * cdf, (x,), lambda g: (g * (cdf + xd * pdf),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,))


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; exact identity when ``rate == 0`` or not training."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not train or rate == 0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit rng")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    if logits.ndim != 2:
        raise ValueError(f"cross_entropy expects [n x classes] logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError("label index out of range for the logits")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(n), labels].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (p * (g / n),)

    return Tensor._make(np.asarray(loss, dtype=logits.dtype), (logits,), back)


# --- 3-D convolution / pooling -------------------------------------------------


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Valid-padding, stride-1 3-D convolution (cross-correlation).

    ``x`` is ``[n, c_in, D, H, W]``, ``w`` is ``[c_out, c_in, kd, kh, kw]``.
    """
    if x.ndim != 5 or w.ndim != 5 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv3d shape mismatch: input {x.shape}, kernel {w.shape}")
    kd, kh, kw = w.shape[2:]
    if any(s < k for s, k in zip(x.shape[2:], (kd, kh, kw))):
        raise ValueError(f"conv3d kernel {w.shape[2:]} larger than input extent {x.shape[2:]}")
    cols = sliding_window_view(x.data, (kd, kh, kw), axis=(2, 3, 4))  # n,ci,D',H',W',kd,kh,kw
    out = np.tensordot(cols, w.data, axes=([1, 5, 6, 7], [1, 2, 3, 4]))  # n,D',H',W',co
    out = np.ascontiguousarray(np.moveaxis(out, -1, 1))
    if b is not None:
        out += b.data[None, :, None, None, None]
    od, oh, ow = out.shape[2:]
    wd = w.data
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        gx = None
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for i in range(kd):
                for j in range(kh):
                    for k in range(kw):
                        contrib = np.tensordot(g, wd[:, :, i, j, k], axes=([1], [0]))  # n,D',H',W',ci
                        gx[:, :, i : i + od, j : j + oh, k : k + ow] += np.moveaxis(contrib, -1, 1)
        gw = np.tensordot(g, cols, axes=([0, 2, 3, 4], [0, 2, 3, 4])) if w.requires_grad else None
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3, 4)))
        return tuple(grads)

    return Tensor._make(out, parents, back)


def pool_extent(shape: tuple[int, int, int], kernel: tuple[int, int, int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Effective kernel (clamped to the input extent) and output extent of non-overlapping max pooling."""
    k = tuple(min(kk, s) for kk, s in zip(kernel, shape))
    return k, tuple(s // kk for s, kk in zip(shape, k))


def maxpool3d(x: Tensor, kernel: tuple[int, int, int] = (2, 2, 2)) -> Tensor:
    """Non-overlapping max pooling over the last three axes of ``[n, c, D, H, W]``.

    An axis shorter than the kernel is pooled with a kernel equal to its length,
    so a unit-length axis passes through unchanged.
    """
    if x.ndim != 5:
        raise ValueError("maxpool3d expects [n, c, D, H, W]")
    n, c = x.shape[:2]
    (kd, kh, kw), (od, oh, ow) = pool_extent(x.shape[2:], kernel)
    crop = x.data[:, :, : od * kd, : oh * kh, : ow * kw]
    blocks = crop.reshape(n, c, od, kd, oh, kh, ow, kw).transpose(0, 1, 2, 4, 6, 3, 5, 7)
    blocks = blocks.reshape(n, c, od, oh, ow, kd * kh * kw)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    src_shape = x.shape

    def back(g):
        gb = np.zeros((n, c, od, oh, ow, kd * kh * kw), dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, od, oh, ow, kd, kh, kw).transpose(0, 1, 2, 5, 3, 6, 4, 7)
        gx = np.zeros(src_shape, dtype=g.dtype)
        gx[:, :, : od * kd, : oh * kh, : ow * kw] = gb.reshape(n, c, od * kd, oh * kh, ow * kw)
        return (gx,)

    return Tensor._make(out, (x,), back)


__all__ = [
    "as_tensor",
    "linear",
    "softmax",
    "log_softmax",
    "layer_norm",
    "gelu",
    "relu",
    "dropout",
    "cross_entropy",
    "conv3d",
    "maxpool3d",
    "pool_extent",
]

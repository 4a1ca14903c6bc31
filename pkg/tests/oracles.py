"""Independent reference implementations used only by the test suite.

Nothing here imports the package's numerics: the transformer and fusion oracles
are explicit per-sample, per-head loops over plain numpy arrays, the Wilcoxon
oracle enumerates sign patterns, and the SVM oracle solves the primal QP with cvxpy.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def _layer_norm(v: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = sum(v) / len(v)
    var = sum((a - mu) ** 2 for a in v) / len(v)
    return np.array([(a - mu) / math.sqrt(var + eps) for a in v]) * gain + bias


def _gelu(v: np.ndarray) -> np.ndarray:
    return np.array([a * 0.5 * (1.0 + math.erf(a / math.sqrt(2.0))) for a in v])


def _softmax(v: np.ndarray) -> np.ndarray:
    m = max(v)
    e = np.array([math.exp(a - m) for a in v])
    return e / e.sum()


def patches_by_index(x: np.ndarray, h: int, v: int) -> np.ndarray:
    """``[A, B, C]`` -> ``[N, h*v*C]`` via explicit index arithmetic."""
    a, b, c = x.shape
    rows = []
    for ab in range(a // h):
        for bb in range(b // v):
            rows.append([x[ab * h + i, bb * v + j, k] for i in range(h) for j in range(v) for k in range(c)])
    return np.array(rows, dtype=np.float64)


def ct_hgr_encode_one(x: np.ndarray, p: dict, cfg) -> np.ndarray:
    """Final encoder rows for one sample ``[A, B, C]``; ``p`` maps names to float64 arrays."""
    d, nh = cfg.d, cfg.heads
    dh = d // nh
    denom = math.sqrt(dh if cfg.scale_by_head_dim else d)
    pt = patches_by_index(x, cfg.patch.H, cfg.patch.V)
    z = [p["class_token"] + p["E_pos"][0]]
    for i, row in enumerate(pt):
        z.append(row @ p["E"] + p["E_pos"][i + 1])
    z = np.array(z)
    s = len(z)
    for l in range(cfg.layers):
        q = f"layer{l}."
        hn = np.array([_layer_norm(r, p[q + "ln1_gain"], p[q + "ln1_bias"]) for r in z])
        Q = hn @ p[q + "W_Q"] + p[q + "b_Q"]
        K = hn @ p[q + "W_K"] + p[q + "b_K"]
        V = hn @ p[q + "W_V"] + p[q + "b_V"]
        heads = np.zeros((s, d))
        for hh in range(nh):
            cols = slice(hh * dh, (hh + 1) * dh)
            for i in range(s):
                scores = np.array([float(Q[i, cols] @ K[j, cols]) / denom for j in range(s)])
                w = _softmax(scores)
                heads[i, cols] = sum(w[j] * V[j, cols] for j in range(s))
        z = z + heads @ p[q + "W_O"] + p[q + "b_O"]
        out = []
        for r in z:
            h2 = _layer_norm(r, p[q + "ln2_gain"], p[q + "ln2_bias"])
            h2 = _gelu(h2 @ p[q + "mlp_W1"] + p[q + "mlp_b1"]) @ p[q + "mlp_W2"] + p[q + "mlp_b2"]
            out.append(r + h2)
        z = np.array(out)
    return z


def ct_hgr_logits(x: np.ndarray, p: dict, cfg) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if cfg.input_kind == "image" and x.ndim == 3:
        x = x[..., None]
    return np.array([ct_hgr_encode_one(xi, p, cfg)[0] @ p["head_W"] + p["head_b"] for xi in x])


def fusion_logits(windows, images, p_macro, cfg_macro, p_micro, cfg_micro, p_head: dict) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.float64)
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[..., None]
    n_layers = len(p_head) // 2
    out = []
    for w, m in zip(windows, images):
        h = np.concatenate([ct_hgr_encode_one(w, p_macro, cfg_macro)[0], ct_hgr_encode_one(m, p_micro, cfg_micro)[0]])
        for i in range(n_layers):
            h = h @ p_head[f"fc{i}_W"] + p_head[f"fc{i}_b"]
            if i < n_layers - 1:
                h = _gelu(h)
        out.append(h)
    return np.array(out)


# --- statistics ------------------------------------------------------------------


def average_ranks(values) -> np.ndarray:
    v = list(values)
    order = sorted(range(len(v)), key=lambda i: v[i])
    ranks = [0.0] * len(v)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return np.array(ranks)


def wilcoxon_brute_force(a, b) -> tuple[float, float]:
    """(min(W+, W-), two-sided p) by enumerating every sign pattern."""
    d = [x - y for x, y in zip(a, b) if x != y]
    n = len(d)
    ranks = average_ranks([abs(v) for v in d])
    w_plus = sum(r for r, v in zip(ranks, d) if v > 0)
    w_minus = sum(r for r, v in zip(ranks, d) if v < 0)
    t = min(w_plus, w_minus)
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        if sum(r for r, s in zip(ranks, signs) if s) <= t + 1e-9:
            count += 1
    return t, min(1.0, 2.0 * count / 2**n)


# --- SVM QP ----------------------------------------------------------------------


def svm_qp_one_vs_rest(xs: np.ndarray, labels: np.ndarray, classes: np.ndarray, lam: float):
    """Exact minimiser of ``lam/2 |w|^2 + mean hinge`` per class, via cvxpy."""
    import cvxpy as cp

    n, d = xs.shape
    W = np.zeros((d, classes.size))
    b = np.zeros(classes.size)
    for k, c in enumerate(classes):
        y = np.where(labels == c, 1.0, -1.0)
        w = cp.Variable(d)
        bb = cp.Variable()
        obj = lam / 2 * cp.sum_squares(w) + cp.sum(cp.pos(1 - cp.multiply(y, xs @ w + bb))) / n
        cp.Problem(cp.Minimize(obj)).solve()
        W[:, k] = w.value
        b[k] = bb.value
    return W, b

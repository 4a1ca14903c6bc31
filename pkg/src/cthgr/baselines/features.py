"""Classic per-channel time-domain sEMG features: RMS, ZC, SSC, WL."""

from __future__ import annotations

import numpy as np

FEATURE_NAMES = ("rms", "zc", "ssc", "wl")


def rms(x: np.ndarray, axis: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(np.mean(x**2, axis=axis))


def zero_crossings(x: np.ndarray, deadband: float = 0.0, axis: int = 0) -> np.ndarray:
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    a, b = x[:-1], x[1:]
    return np.sum((a * b < 0) & (np.abs(a - b) > deadband), axis=0)


def slope_sign_changes(x: np.ndarray, deadband: float = 0.0, axis: int = 0) -> np.ndarray:
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    return np.sum((x[1:-1] - x[:-2]) * (x[1:-1] - x[2:]) > deadband, axis=0)


def waveform_length(x: np.ndarray, axis: int = 0) -> np.ndarray:
    return np.sum(np.abs(np.diff(np.asarray(x, dtype=np.float64), axis=axis)), axis=axis)


def extract_features(window: np.ndarray, deadband: float = 0.0) -> np.ndarray:
    """``[W x C]`` (or ``[W x N_ch x N_cv]``) -> ``[C x 4]`` flattened channel-major."""
    x = np.asarray(window, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    if x.shape[0] < 3:
        raise ValueError(f"feature extraction needs at least 3 samples, got {x.shape[0]}")
    feats = np.stack(
        [rms(x), zero_crossings(x, deadband), slope_sign_changes(x, deadband), waveform_length(x)],
        axis=1,
    )
    return feats.reshape(-1)


def extract_features_batch(windows: np.ndarray, deadband: float = 0.0) -> np.ndarray:
    """``[n x W x ...]`` -> ``[n x 4C]``."""
    x = np.asarray(windows, dtype=np.float64)
    n, w = x.shape[:2]
    if w < 3:
        raise ValueError(f"feature extraction needs at least 3 samples, got {w}")
    x = x.reshape(n, w, -1)
    feats = np.stack(
        [
            rms(x, axis=1),
            zero_crossings(x, deadband, axis=1),
            slope_sign_changes(x, deadband, axis=1),
            waveform_length(x, axis=1),
        ],
        axis=2,
    )
    return feats.reshape(n, -1)

"""Preprocessing: rectified first-order Butterworth envelope, mu-law companding, windowing."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .container import WINDOWS_MAGIC, read_array, write_array
from .ingest import Recording, RecordingError, remove_rest


@dataclass(frozen=True)
class PreprocessConfig:
    mu: float = 255.0
    cutoff_hz: float = 1.0
    rectify: bool = True
    filter_mode: str = "causal"

    def validate(self, sampling_rate_hz: float) -> None:
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 0 < self.cutoff_hz < sampling_rate_hz / 2:
            raise ValueError(f"cutoff {self.cutoff_hz} Hz must lie in (0, {sampling_rate_hz / 2})")
        if self.filter_mode not in ("causal", "zero-phase"):
            raise ValueError(f"unknown filter_mode {self.filter_mode!r}")


def default_skip(window_len: int) -> int:
    """Hop sizes used for the raw-window experiments: 64 for W=512, 1 for W=1, else 32."""
    if window_len == 1:
        return 1
    return 64 if window_len >= 512 else 32


@dataclass(frozen=True)
class WindowSpec:
    length: int
    skip: int | None = None

    def __post_init__(self):
        if self.skip is None:
            object.__setattr__(self, "skip", default_skip(self.length))
        if self.length < 1 or self.skip < 1:
            raise ValueError("window length and skip must be >= 1")


@dataclass
class WindowBatch:
    samples: np.ndarray  # [n, W, N_ch, N_cv]
    labels: np.ndarray  # [n]
    fold_key: np.ndarray  # [n] repetition id
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))  # offsets into the source
    subject_id: str = ""

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index: np.ndarray) -> "WindowBatch":
        return replace(
            self,
            samples=self.samples[index],
            labels=self.labels[index],
            fold_key=self.fold_key[index],
            starts=self.starts[index] if len(self.starts) else self.starts,
        )


# --- filtering -----------------------------------------------------------------


def butterworth_coefficients(cutoff_hz: float, sampling_rate_hz: float) -> tuple[float, float, float]:
    """First-order low-pass (b0, b1, a1) by the bilinear transform with a pre-warped corner."""
    if not 0 < cutoff_hz < sampling_rate_hz / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({sampling_rate_hz / 2} Hz)")
    k = math.tan(math.pi * cutoff_hz / sampling_rate_hz)
    b = k / (1 + k)
    return b, b, (k - 1) / (1 + k)


def butterworth_lowpass(
    x: np.ndarray, cutoff_hz: float, sampling_rate_hz: float, filter_mode: str = "causal", axis: int = 0
) -> np.ndarray:
    b0, b1, a1 = butterworth_coefficients(cutoff_hz, sampling_rate_hz)
    b, a = [b0, b1], [1.0, a1]
    y = lfilter(b, a, np.asarray(x, dtype=np.float64), axis=axis)
    if filter_mode == "zero-phase":
        y = np.flip(lfilter(b, a, np.flip(y, axis=axis), axis=axis), axis=axis)
    elif filter_mode != "causal":
        raise ValueError(f"unknown filter_mode {filter_mode!r}")
    return y


def envelope(channel: np.ndarray, cfg: PreprocessConfig, sampling_rate_hz: float) -> np.ndarray:
    """Rectify (optional) then low-pass; works column-wise on matrices."""
    cfg.validate(sampling_rate_hz)
    x = np.asarray(channel, dtype=np.float64)
    if cfg.rectify:
        x = np.abs(x)
    return butterworth_lowpass(x, cfg.cutoff_hz, sampling_rate_hz, cfg.filter_mode, axis=0)


def envelope_recording(rec: Recording, cfg: PreprocessConfig) -> Recording:
    return replace(rec, signal=envelope(rec.signal, cfg, rec.sampling_rate_hz))


# --- normalisation -------------------------------------------------------------


def mu_law(x: np.ndarray, mu: float = 255.0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if mu <= 0:
        raise ValueError("mu must be positive")
    if np.any(np.abs(x) > 1):
        raise ValueError("mu-law input must lie in [-1, 1]; scale by the max absolute value first")
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def fit_scale(signal: np.ndarray) -> np.ndarray:
    """Per-channel max |x| over the samples given (pass training samples only)."""
    s = np.max(np.abs(signal.reshape(-1, signal.shape[-1])), axis=0) if signal.size else np.ones(signal.shape[-1])
    return np.where(s > 0, s, 1.0)


def normalize(x: np.ndarray, scale: np.ndarray, mu: float) -> np.ndarray:
    """Divide by per-channel ``scale`` (trailing axes), clip to [-1, 1], mu-law compress."""
    return mu_law(np.clip(x / scale, -1.0, 1.0), mu)


# --- windowing -----------------------------------------------------------------


def count_windows(run_length: int, window_len: int, skip: int) -> int:
    return (run_length - window_len) // skip + 1 if run_length >= window_len else 0


def runs(labels: np.ndarray, repetitions: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, stop) runs of constant (label, repetition)."""
    n = len(labels)
    if n == 0:
        return []
    change = np.flatnonzero((np.diff(labels) != 0) | (np.diff(repetitions) != 0)) + 1
    bounds = np.concatenate([[0], change, [n]])
    return list(zip(bounds[:-1].tolist(), bounds[1:].tolist()))


def window_starts(labels: np.ndarray, repetitions: np.ndarray, spec: WindowSpec) -> np.ndarray:
    out = []
    for a, b in runs(labels, repetitions):
        k = count_windows(b - a, spec.length, spec.skip)
        if k:
            out.append(a + spec.skip * np.arange(k))
    return np.concatenate(out).astype(np.int64) if out else np.zeros(0, np.int64)


def segment(rec: Recording, spec: WindowSpec, starts: np.ndarray | None = None) -> WindowBatch:
    """Cut ``rec`` into windows that never cross a (label, repetition) boundary.

    Call after rest removal. ``starts`` reuses precomputed offsets so that two
    views of one recording (raw and enveloped) yield aligned windows.
    """
    if starts is None:
        starts = window_starts(rec.gesture_label, rec.repetition, spec)
    grid = rec.grid_view()
    if len(starts):
        idx = starts[:, None] + np.arange(spec.length)[None, :]
        samples = grid[idx]
    else:
        samples = np.zeros((0, spec.length) + grid.shape[1:], dtype=grid.dtype)
    return WindowBatch(
        samples=samples,
        labels=rec.gesture_label[starts],
        fold_key=rec.repetition[starts],
        starts=starts,
        subject_id=rec.subject_id,
    )


# --- window batch files --------------------------------------------------------


def write_window_batch(batch: WindowBatch, path: str | Path, manifest: dict | None = None) -> None:
    path = Path(path)
    write_array(path, batch.samples, WINDOWS_MAGIC)
    meta = {
        "subject_id": batch.subject_id,
        "labels": batch.labels.tolist(),
        "fold_key": batch.fold_key.tolist(),
        "starts": batch.starts.tolist(),
        "preprocessing": manifest or {},
    }
    path.with_name(path.name + ".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_window_batch(path: str | Path) -> tuple[WindowBatch, dict]:
    path = Path(path)
    samples = read_array(path, WINDOWS_MAGIC)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    labels = np.asarray(meta["labels"], np.int64)
    if len(labels) != samples.shape[0]:
        raise RecordingError("window batch sidecar disagrees with payload")
    batch = WindowBatch(
        samples=samples,
        labels=labels,
        fold_key=np.asarray(meta["fold_key"], np.int64),
        starts=np.asarray(meta["starts"], np.int64),
        subject_id=meta.get("subject_id", ""),
    )
    return batch, meta.get("preprocessing", {})


def preprocess_to_batch(
    rec: Recording, cfg: PreprocessConfig, spec: WindowSpec, fit_repetitions: list[int] | None = None
) -> tuple[WindowBatch, dict]:
    """Standalone preprocessing for the CLI: envelope, max-abs scale, mu-law, windows.

    The scale is fitted on the active samples of ``fit_repetitions`` (all
    repetitions when ``None``); experiments refit it per fold instead.
    """
    env = envelope_recording(rec, cfg)
    active = remove_rest(env)
    if fit_repetitions is None:
        fit_mask = np.ones(active.n_samples, bool)
    else:
        fit_mask = np.isin(active.repetition, fit_repetitions)
        if not fit_mask.any():
            raise RecordingError(f"no active samples in repetitions {fit_repetitions}")
    scale = fit_scale(active.signal[fit_mask])
    norm = replace(active, signal=normalize(active.signal, scale, cfg.mu))
    batch = segment(norm, spec)
    manifest = {
        "config": asdict(cfg),
        "window": {"length": spec.length, "skip": spec.skip},
        "scale_fit_repetitions": sorted(set(active.repetition[fit_mask].tolist())),
        "n_windows": len(batch),
    }
    return batch, manifest

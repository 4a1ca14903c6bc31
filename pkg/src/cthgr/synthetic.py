"""Seeded synthetic HD-sEMG generators for desk-scale experiments and tests.

``synthesize_dataset`` builds a full 128-channel recording in which every gesture
class drives its own pool of motor units whose spatial footprint follows a
class-specific activation map. ``synthesize_mixture`` builds a small convolutive
mixture of known spike trains for checking the decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import oaconvolve

from .ingest import FULL_CHANNELS, GridLayout, Recording, SAMPLING_RATE_HZ


@dataclass
class SynthSpec:
    n_classes: int = 4
    n_repetitions: int = 5
    gesture_s: float = 2.0
    rest_s: float = 0.5
    noise_level: float = 0.02
    seed: int = 7
    mus_per_class: int = 6
    gain_jitter: float = 0.2
    sampling_rate_hz: float = SAMPLING_RATE_HZ
    subject_id: str = "synth"
    activation_maps: list | None = None

    def validate(self) -> None:
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if not 1 <= self.n_repetitions <= 5:
            raise ValueError("n_repetitions must be within 1..5")
        if self.n_classes > 66:
            raise ValueError("at most 66 gesture classes")
        if self.gesture_s <= 0 or self.rest_s < 0 or self.noise_level < 0:
            raise ValueError("durations must be positive and noise non-negative")
        if self.mus_per_class < 1:
            raise ValueError("mus_per_class must be >= 1")
        if self.activation_maps is not None:
            maps = np.asarray(self.activation_maps, dtype=float)
            if maps.shape != (self.n_classes, FULL_CHANNELS) or np.any(maps < 0):
                raise ValueError(f"activation_maps must be non-negative [{self.n_classes} x {FULL_CHANNELS}]")


def default_activation_maps(n_classes: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian blobs on the 16x8 grid, centres spread along the horizontal axis."""
    hh, vv = np.meshgrid(np.arange(16), np.arange(8), indexing="ij")
    maps = np.empty((n_classes, FULL_CHANNELS))
    for k in range(n_classes):
        ch = (k + 0.5) * 16 / n_classes + rng.uniform(-0.5, 0.5)
        cv = rng.uniform(1.5, 6.5)
        d2 = (hh - ch) ** 2 + (vv - cv) ** 2
        maps[k] = (0.05 + 0.95 * np.exp(-d2 / (2 * 2.5**2))).ravel()
    return maps


def muap_shape(length: int, width: float, center: float) -> np.ndarray:
    """Negative second derivative of a Gaussian (Ricker-like), unit peak."""
    t = (np.arange(length) - center) / width
    w = (1 - t**2) * np.exp(-(t**2) / 2)
    return w / np.abs(w).max()


def spike_train(n: int, rate_hz: float, fs: float, rng: np.random.Generator, cv: float = 0.1) -> np.ndarray:
    """Quasi-regular discharge indices in ``[0, n)`` with Gaussian ISI jitter."""
    mean_isi = fs / rate_hz
    t = rng.uniform(0, mean_isi)
    out = []
    while t < n:
        out.append(int(t))
        t += max(mean_isi * (1 + cv * rng.standard_normal()), 0.25 * mean_isi)
    return np.unique(np.asarray(out, dtype=np.int64))


def _segment_activity(
    n: int, footprints: np.ndarray, rng: np.random.Generator, fs: float, wave_len: int = 25
) -> np.ndarray:
    """Sum of motor-unit trains convolved with per-channel MUAPs; ``footprints`` is [M x C]."""
    m, c = footprints.shape
    out = np.zeros((n + wave_len - 1, c))
    for j in range(m):
        spikes = np.zeros(n)
        spikes[spike_train(n, rng.uniform(8, 20), fs, rng)] = 1.0
        shape = muap_shape(wave_len, rng.uniform(1.5, 3.0), wave_len / 2)
        delays = rng.integers(0, 3, size=c)
        wave = np.zeros((wave_len, c))
        for d in range(3):
            cols = delays == d
            wave[d:, cols] = shape[: wave_len - d, None] * footprints[j, cols]
        out += oaconvolve(spikes[:, None], wave, axes=0)
    return out[:n]


def synthesize_dataset(spec: SynthSpec) -> Recording:
    """Deterministic 128-channel recording: rest, then each class's repetitions separated by rest.

    For every gesture segment the per-channel RMS of the noise-free activity equals
    ``activation_map[class, ch] * gain`` exactly, where ``gain`` is a per-repetition
    jitter factor drawn once per segment.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    fs = spec.sampling_rate_hz
    maps = (
        np.asarray(spec.activation_maps, dtype=float)
        if spec.activation_maps is not None
        else default_activation_maps(spec.n_classes, rng)
    )
    n_gest = int(round(spec.gesture_s * fs))
    n_rest = int(round(spec.rest_s * fs))

    chunks, labels, reps = [], [], []

    def rest():
        if n_rest:
            chunks.append(np.zeros((n_rest, FULL_CHANNELS)))
            labels.append(np.zeros(n_rest, np.int64))
            reps.append(np.zeros(n_rest, np.int64))

    rest()
    for k in range(spec.n_classes):
        pool = maps[k][None, :] * np.exp(0.3 * rng.standard_normal((spec.mus_per_class, FULL_CHANNELS)))
        for r in range(1, spec.n_repetitions + 1):
            act = _segment_activity(n_gest, pool, rng, fs)
            rms = np.sqrt(np.mean(act**2, axis=0))
            rms[rms == 0] = 1.0
            gain = 1.0 + spec.gain_jitter * rng.uniform(-1, 1)
            chunks.append(act / rms * maps[k] * gain)
            labels.append(np.full(n_gest, k + 1, np.int64))
            reps.append(np.full(n_gest, r, np.int64))
            rest()

    signal = np.concatenate(chunks)
    if spec.noise_level > 0:
        signal = signal + spec.noise_level * rng.standard_normal(signal.shape)
    return Recording(
        signal=signal,
        gesture_label=np.concatenate(labels),
        repetition=np.concatenate(reps),
        subject_id=spec.subject_id,
        layout=GridLayout(n_horizontal=16, sampling_rate_hz=fs),
    )


def synthesize_mixture(
    n_mu: int = 2,
    n_channels: int = 16,
    length: int = 2048,
    snr_db: float | None = 20.0,
    seed: int = 0,
    fs: float = SAMPLING_RATE_HZ,
    wave_len: int = 16,
    rate_range: tuple[float, float] = (10.0, 25.0),
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Convolutive mixture of ``n_mu`` spike trains through random MUAP filters.

    Returns the ``[length x n_channels]`` observation and the ground-truth discharge
    indices of each motor unit. ``snr_db=None`` gives a noiseless mixture.
    """
    rng = np.random.default_rng(seed)
    obs = np.zeros((length + wave_len - 1, n_channels))
    trains = []
    for _ in range(n_mu):
        idx = spike_train(length, rng.uniform(*rate_range), fs, rng)
        trains.append(idx)
        spikes = np.zeros(length)
        spikes[idx] = 1.0
        base = muap_shape(wave_len, rng.uniform(1.2, 2.5), rng.uniform(4, wave_len - 4))
        gains = rng.uniform(0.2, 1.0, size=n_channels) * rng.choice([-1, 1], size=n_channels)
        wave = base[:, None] * gains[None, :] + 0.3 * rng.standard_normal((wave_len, n_channels)) * np.abs(base)[:, None]
        obs += oaconvolve(spikes[:, None], wave, axes=0)
    obs = obs[:length]
    if snr_db is not None:
        p_sig = np.mean(obs**2)
        obs = obs + np.sqrt(p_sig / 10 ** (snr_db / 10)) * rng.standard_normal(obs.shape)
    return obs, trains

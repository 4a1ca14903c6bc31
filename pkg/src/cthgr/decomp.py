"""Motor-unit decomposition of HD-sEMG windows and peak-to-peak MUAP images.

Pipeline per window: delay-extend every channel, whiten, run deflation fastICA
with a cubic contrast, turn each converged source into discharge times by
two-class splitting of its peak heights, and keep sources whose silhouette
clears the threshold. Spike-triggered averages of the raw window then give one
peak-to-peak amplitude image per accepted motor unit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .container import MUAP_MAGIC, read_array, write_array

log = logging.getLogger(__name__)


class DegenerateCovarianceError(ValueError):
    """The window carries no variance to whiten (e.g. a constant window)."""


@dataclass(frozen=True)
class DecompConfig:
    max_sources: int = 7
    silhouette_threshold: float = 0.92
    extension_factor: int = 8
    ica_max_iter: int = 200
    tol: float = 1e-4
    muap_half_window: int = 20
    min_peak_distance: int = 20
    min_discharges: int = 2
    duplicate_agreement: float = 0.5
    aggregate: str = "mean"
    eig_floor: float = 1e-10
    max_components: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.silhouette_threshold <= 1:
            raise ValueError("silhouette_threshold must lie in (0, 1]")
        if self.max_sources < 1:
            raise ValueError("max_sources must be >= 1")
        if self.extension_factor < 1:
            raise ValueError("extension_factor must be >= 1")
        if self.aggregate not in ("mean", "max"):
            raise ValueError("aggregate must be 'mean' or 'max'")


@dataclass
class MotorUnitSpikeTrain:
    discharge_indices: np.ndarray
    silhouette: float
    source_vector: np.ndarray
    source: np.ndarray | None = field(default=None, repr=False)


@dataclass
class Whitened:
    z: np.ndarray  # [W x k], unit covariance
    whitening: np.ndarray  # [D x k] maps centred extended data to z
    mean: np.ndarray
    eigenvalues: np.ndarray


@dataclass
class MuapImageSet:
    images: np.ndarray  # [m x N_ch x N_cv]
    aggregate: np.ndarray  # [N_ch x N_cv]
    label: int = 0

    def v3_input(self) -> np.ndarray:
        """Aggregate as the single-channel (N_cv x N_ch) image, e.g. (8 x 16)."""
        return self.aggregate.T[..., None]


# --- whitening ---------------------------------------------------------------


def extend(window: np.ndarray, extension_factor: int) -> np.ndarray:
    """``[W x C]`` -> ``[W x C*R]``; column ``c*R + r`` is channel ``c`` delayed by ``r`` (zero-filled)."""
    w, c = window.shape
    out = np.zeros((w, c, extension_factor), dtype=np.float64)
    for r in range(extension_factor):
        out[r:, :, r] = window[: w - r]
    return out.reshape(w, c * extension_factor)


def extend_and_whiten(
    window: np.ndarray, extension_factor: int = 8, eig_floor: float = 1e-10, max_components: int | None = None
) -> Whitened:
    x = np.asarray(window, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    if x.shape[0] <= extension_factor:
        raise ValueError(f"window length {x.shape[0]} must exceed the extension factor {extension_factor}")
    # zero-filled delays would give a constant window spurious variance
    if not np.any(np.ptp(x, axis=0) > 0):
        raise DegenerateCovarianceError("window is constant; nothing to whiten")
    ext = extend(x, extension_factor)
    mean = ext.mean(axis=0)
    xc = ext - mean
    n = xc.shape[0]
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    eig = s**2 / n
    if eig.size == 0 or eig[0] <= 0:
        raise DegenerateCovarianceError("window covariance is zero; nothing to whiten")
    keep = eig >= eig_floor * eig[0]
    if max_components is not None:
        keep[max_components:] = False
    v = vt[keep].T
    whitening = v / np.sqrt(eig[keep])
    return Whitened(z=xc @ whitening, whitening=whitening, mean=mean, eigenvalues=eig[keep])


# --- spike detection -----------------------------------------------------------


def otsu_split(values: np.ndarray) -> float:
    """Threshold maximising between-class variance of a 1-D sample (exact over all cuts)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    if n < 2:
        return float(v[0]) if n else 0.0
    csum = np.cumsum(v)
    k = np.arange(1, n)
    w0, w1 = k / n, (n - k) / n
    m0 = csum[:-1] / k
    m1 = (csum[-1] - csum[:-1]) / (n - k)
    between = w0 * w1 * (m0 - m1) ** 2
    i = int(np.argmax(between))
    return float(0.5 * (v[i] + v[i + 1]))


def silhouette(heights: np.ndarray, threshold: float) -> float:
    """Separation of the high (spike) class from the low class of peak heights.

    ``(between - within) / max(between, within)`` where ``within`` sums distances of
    spike-class heights to their own centroid and ``between`` sums their distances
    to the low-class centroid.
    """
    hi = heights[heights > threshold]
    lo = heights[heights <= threshold]
    if hi.size == 0 or lo.size == 0:
        return -1.0
    within = np.abs(hi - hi.mean()).sum()
    between = np.abs(hi - lo.mean()).sum()
    top = max(within, between)
    return 0.0 if top == 0 else float((between - within) / top)


def detect_discharges(source: np.ndarray, min_distance: int = 20) -> tuple[np.ndarray, float]:
    """Discharge indices of a sign-normalised source and their silhouette."""
    s2 = source * np.abs(source)
    peaks, _ = find_peaks(s2, distance=max(1, min_distance))
    if peaks.size < 2:
        return np.zeros(0, np.int64), -1.0
    heights = s2[peaks]
    thr = otsu_split(heights)
    return peaks[heights > thr].astype(np.int64), silhouette(heights, thr)


def rate_of_agreement(a: np.ndarray, b: np.ndarray, tolerance: int = 1, max_lag: int = 0) -> float:
    """Best ``matched / (|a| + |b| - matched)`` over constant lags in ``[-max_lag, max_lag]``."""
    a, b = np.sort(np.asarray(a)), np.sort(np.asarray(b))
    if a.size == 0 or b.size == 0:
        return 0.0
    best = 0.0
    for lag in range(-max_lag, max_lag + 1):
        shifted = a + lag
        pos = np.searchsorted(b, shifted)
        matched, used = 0, set()
        for x, p in zip(shifted, pos):
            for j in (p - 1, p):
                if 0 <= j < b.size and j not in used and abs(b[j] - x) <= tolerance:
                    used.add(j)
                    matched += 1
                    break
        best = max(best, matched / (a.size + b.size - matched))
    return best


# --- fastICA -----------------------------------------------------------------


def _orthogonalize(w: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for b in basis:
        w = w - (w @ b) * b
    return w


def fast_ica_deflate(whitened: Whitened | np.ndarray, cfg: DecompConfig = DecompConfig()) -> list[MotorUnitSpikeTrain]:
    """Deflation fastICA (``g(u) = u^3``) with silhouette-gated source acceptance.

    Each round starts from the whitened sample of highest energy not used before,
    iterates the fixed point with Gram-Schmidt against every earlier converged
    vector, and accepts the source if its silhouette reaches the threshold and its
    discharges do not duplicate an accepted unit.
    """
    z = whitened.z if isinstance(whitened, Whitened) else np.asarray(whitened, dtype=np.float64)
    n, k = z.shape
    energy = np.einsum("ij,ij->i", z, z)
    order = list(np.argsort(-energy, kind="stable"))
    rng = np.random.default_rng(cfg.seed)
    basis: list[np.ndarray] = []
    accepted: list[MotorUnitSpikeTrain] = []
    blocked = np.zeros(n, dtype=bool)
    lag = cfg.extension_factor + cfg.muap_half_window

    for rnd in range(min(cfg.max_sources, k)):
        while order and blocked[order[0]]:
            order.pop(0)
        if order:
            t0 = order.pop(0)
            blocked[max(0, t0 - cfg.min_peak_distance): t0 + cfg.min_peak_distance + 1] = True
            w = z[t0].copy()
        else:
            w = rng.standard_normal(k)
        w = _orthogonalize(w, basis)
        norm = np.linalg.norm(w)
        if norm < 1e-12:
            w = _orthogonalize(rng.standard_normal(k), basis)
            norm = np.linalg.norm(w)
        w /= norm
        converged = False
        for _ in range(cfg.ica_max_iter):
            s = z @ w
            w_new = (z * (s**3)[:, None]).mean(axis=0) - 3.0 * w
            w_new = _orthogonalize(w_new, basis)
            nn = np.linalg.norm(w_new)
            if nn < 1e-12:
                break
            w_new /= nn
            delta = 1.0 - abs(float(w_new @ w))
            w = w_new
            if delta < cfg.tol:
                converged = True
                break
        if not converged:
            log.info("deflation round %d did not converge within %d iterations; skipped", rnd, cfg.ica_max_iter)
            if np.linalg.norm(w) > 0:
                basis.append(w)
            continue
        basis.append(w)
        s = z @ w
        if np.mean(s**3) < 0:
            s, w = -s, -w
        idx, sil = detect_discharges(s, cfg.min_peak_distance)
        if sil < cfg.silhouette_threshold or idx.size < cfg.min_discharges:
            continue
        if any(rate_of_agreement(idx, mu.discharge_indices, 1, lag) >= cfg.duplicate_agreement for mu in accepted):
            continue
        accepted.append(MotorUnitSpikeTrain(discharge_indices=idx, silhouette=sil, source_vector=w.copy(), source=s))
    return accepted


def decompose_window(window: np.ndarray, cfg: DecompConfig = DecompConfig()) -> list[MotorUnitSpikeTrain]:
    """Decompose one ``[W x C]`` or ``[W x N_ch x N_cv]`` window; degenerate windows yield no units."""
    x = np.asarray(window, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    try:
        wh = extend_and_whiten(x, cfg.extension_factor, cfg.eig_floor, cfg.max_components)
    except DegenerateCovarianceError:
        return []
    return fast_ica_deflate(wh, cfg)


# --- MUAP images -------------------------------------------------------------


def muap_images(
    window: np.ndarray, trains: list[MotorUnitSpikeTrain | np.ndarray], cfg: DecompConfig = DecompConfig(), label: int = 0
) -> MuapImageSet:
    """Peak-to-peak amplitude of each unit's spike-triggered average, per channel."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    w = x.shape[0]
    hw = cfg.muap_half_window
    offsets = np.arange(-hw, hw + 1)
    images = []
    for tr in trains:
        idx = tr.discharge_indices if isinstance(tr, MotorUnitSpikeTrain) else np.asarray(tr)
        idx = np.sort(np.asarray(idx, dtype=np.int64))
        idx = idx[(idx - hw >= 0) & (idx + hw < w)]
        if idx.size == 0:
            continue
        sta = x[idx[:, None] + offsets[None, :]].mean(axis=0)
        images.append(sta.max(axis=0) - sta.min(axis=0))
    if images:
        stack = np.stack(images)
        agg = stack.mean(axis=0) if cfg.aggregate == "mean" else stack.max(axis=0)
    else:
        stack = np.zeros((0,) + x.shape[1:])
        agg = np.zeros(x.shape[1:])
    return MuapImageSet(images=stack, aggregate=agg, label=label)


def decompose_batch(raw_windows: np.ndarray, labels: np.ndarray, cfg: DecompConfig = DecompConfig()) -> tuple[np.ndarray, list[dict]]:
    """V3 inputs ``[n x N_cv x N_ch x 1]`` for a stack of raw windows plus per-window metadata."""
    out, meta = [], []
    for win, lab in zip(raw_windows, labels):
        trains = decompose_window(win, cfg)
        imgs = muap_images(win, trains, cfg, int(lab))
        out.append(imgs.v3_input())
        meta.append({"label": int(lab), "n_units": len(imgs.images), "silhouettes": [round(t.silhouette, 6) for t in trains]})
    shape = (0,) + (raw_windows.shape[3], raw_windows.shape[2], 1) if raw_windows.ndim == 4 else (0,)
    return (np.stack(out) if out else np.zeros(shape)), meta


def write_muap_file(path: str | Path, images: np.ndarray, meta: list[dict], cfg: DecompConfig,
                    extra: dict | None = None) -> None:
    path = Path(path)
    write_array(path, images, MUAP_MAGIC)
    doc = {"config": asdict(cfg), "windows": meta, **(extra or {})}
    path.with_name(path.name + ".json").write_text(json.dumps(doc, sort_keys=True) + "\n")


def read_muap_file(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    return read_array(path, MUAP_MAGIC), json.loads(path.with_name(path.name + ".json").read_text())

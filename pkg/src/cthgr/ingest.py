"""Canonical HD-sEMG recordings: on-disk format, validation, rest removal, channel subsets.

A recording is stored as two files next to each other: ``<subject>.emg`` holding the
float32 signal matrix (see :mod:`cthgr.container`) and ``<subject>.json`` holding
run-length-encoded annotations, the grid layout and the checksum of the ``.emg`` file.

Channels are indexed 0-based, row-major over (grid, row, column) of the two 8x8
electrode grids, so a 128-channel signal reshapes to ``(T, 16, 8)`` as
``(time, horizontal, vertical)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .container import ContainerError, read_matrix, sha256_file, write_matrix

FORMAT_VERSION = 1
N_VERTICAL = 8
FULL_CHANNELS = 128
MAX_LABEL = 66
MAX_REPETITION = 5
SAMPLING_RATE_HZ = 2048.0

CHANNEL_MODES = {"full": 1, "half": 2, "quarter": 4}


class RecordingError(ValueError):
    """A recording or its sidecar violates the canonical format."""


@dataclass(frozen=True)
class GridLayout:
    n_horizontal: int = 16
    n_vertical: int = N_VERTICAL
    sampling_rate_hz: float = SAMPLING_RATE_HZ

    def __post_init__(self):
        if self.n_vertical != N_VERTICAL:
            raise RecordingError(f"n_vertical must be {N_VERTICAL}, got {self.n_vertical}")
        if self.n_horizontal not in (4, 8, 16):
            raise RecordingError(f"n_horizontal must be 4, 8 or 16, got {self.n_horizontal}")
        if not self.sampling_rate_hz > 0:
            raise RecordingError("sampling_rate_hz must be positive")

    @property
    def n_channels(self) -> int:
        return self.n_horizontal * self.n_vertical

    def to_dict(self) -> dict:
        return {
            "n_horizontal": self.n_horizontal,
            "n_vertical": self.n_vertical,
            "sampling_rate_hz": self.sampling_rate_hz,
        }


@dataclass(frozen=True, eq=False)
class Recording:
    """One subject's annotated multi-channel signal.

    ``layout`` may be ``None`` for small unstructured fixtures; anything that needs
    the 3-D (time, horizontal, vertical) view requires a layout.
    """

    signal: np.ndarray
    gesture_label: np.ndarray
    repetition: np.ndarray
    subject_id: str
    layout: GridLayout | None = None
    sampling_rate_hz: float = field(default=SAMPLING_RATE_HZ)

    def __post_init__(self):
        sig = np.asarray(self.signal)
        if sig.ndim != 2:
            raise RecordingError(f"signal must be [T x C], got shape {sig.shape}")
        lab = np.asarray(self.gesture_label, dtype=np.int64)
        rep = np.asarray(self.repetition, dtype=np.int64)
        object.__setattr__(self, "signal", sig)
        object.__setattr__(self, "gesture_label", lab)
        object.__setattr__(self, "repetition", rep)
        if lab.shape != (sig.shape[0],) or rep.shape != (sig.shape[0],):
            raise RecordingError(
                f"length mismatch: signal has {sig.shape[0]} rows, labels {lab.shape}, repetitions {rep.shape}"
            )
        if lab.size and (lab.min() < 0 or lab.max() > MAX_LABEL):
            raise RecordingError(f"gesture labels must lie in 0..{MAX_LABEL}")
        if rep.size and (rep.min() < 0 or rep.max() > MAX_REPETITION):
            raise RecordingError(f"repetitions must lie in 0..{MAX_REPETITION}")
        if sig.shape[1] > FULL_CHANNELS:
            raise RecordingError(f"at most {FULL_CHANNELS} channels supported, got {sig.shape[1]}")
        if self.layout is not None:
            if self.layout.n_channels != sig.shape[1]:
                raise RecordingError(
                    f"layout expects {self.layout.n_channels} channels, signal has {sig.shape[1]}"
                )
            object.__setattr__(self, "sampling_rate_hz", float(self.layout.sampling_rate_hz))

    @property
    def n_samples(self) -> int:
        return self.signal.shape[0]

    @property
    def n_channels(self) -> int:
        return self.signal.shape[1]

    def grid_view(self) -> np.ndarray:
        """Signal reshaped to ``(T, n_horizontal, n_vertical)``."""
        if self.layout is None:
            raise RecordingError("recording has no grid layout")
        return self.signal.reshape(self.n_samples, self.layout.n_horizontal, self.layout.n_vertical)

    def take(self, index: np.ndarray) -> "Recording":
        return replace(
            self,
            signal=self.signal[index],
            gesture_label=self.gesture_label[index],
            repetition=self.repetition[index],
        )


def rle_encode(values: np.ndarray) -> list[list[int]]:
    values = np.asarray(values)
    if values.size == 0:
        return []
    change = np.flatnonzero(np.diff(values)) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [values.size]]))
    return [[int(values[s]), int(n)] for s, n in zip(starts, lengths)]


def rle_decode(runs: list) -> np.ndarray:
    if not runs:
        return np.zeros(0, dtype=np.int64)
    try:
        vals = [int(v) for v, _ in runs]
        lens = [int(n) for _, n in runs]
    except (TypeError, ValueError) as exc:
        raise RecordingError(f"malformed run-length annotation: {exc}") from exc
    if min(lens) < 0:
        raise RecordingError("negative run length in annotation")
    return np.repeat(np.asarray(vals, dtype=np.int64), lens)


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def write_recording(rec: Recording, path: str | Path) -> Path:
    """Write ``rec`` to ``path`` (``.emg``) plus its JSON sidecar; returns the sidecar path."""
    path = Path(path)
    write_matrix(path, rec.signal)
    meta = {
        "format_version": FORMAT_VERSION,
        "subject_id": str(rec.subject_id),
        "n_samples": rec.n_samples,
        "n_channels": rec.n_channels,
        "sampling_rate_hz": float(rec.sampling_rate_hz),
        "layout": None if rec.layout is None else rec.layout.to_dict(),
        "labels": rle_encode(rec.gesture_label),
        "repetitions": rle_encode(rec.repetition),
        "checksum": sha256_file(path),
    }
    side = sidecar_path(path)
    side.write_text(json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    return side


def load_recording(path: str | Path, verify_checksum: bool = True) -> Recording:
    path = Path(path)
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
    except FileNotFoundError as exc:
        raise RecordingError(f"missing sidecar {side}") from exc
    except json.JSONDecodeError as exc:
        raise RecordingError(f"malformed sidecar {side}: {exc}") from exc
    required = {"format_version", "subject_id", "n_samples", "n_channels", "labels", "repetitions", "checksum"}
    missing = required - set(meta)
    if missing:
        raise RecordingError(f"sidecar {side} lacks {sorted(missing)}")
    if meta["format_version"] != FORMAT_VERSION:
        raise RecordingError(f"unsupported format_version {meta['format_version']}")
    if verify_checksum and sha256_file(path) != meta["checksum"]:
        raise RecordingError(f"checksum mismatch for {path}")
    try:
        signal = read_matrix(path)
    except ContainerError as exc:
        raise RecordingError(str(exc)) from exc
    if signal.shape != (meta["n_samples"], meta["n_channels"]):
        raise RecordingError(f"header shape {signal.shape} disagrees with sidecar")
    layout = GridLayout(**meta["layout"]) if meta.get("layout") else None
    return Recording(
        signal=signal,
        gesture_label=rle_decode(meta["labels"]),
        repetition=rle_decode(meta["repetitions"]),
        subject_id=meta["subject_id"],
        layout=layout,
        sampling_rate_hz=float(meta.get("sampling_rate_hz", SAMPLING_RATE_HZ)),
    )


def remove_rest(rec: Recording) -> Recording:
    return rec.take(np.flatnonzero(rec.gesture_label != 0))


def channel_indices(mode: str) -> np.ndarray:
    if mode not in CHANNEL_MODES:
        raise RecordingError(f"unknown channel mode {mode!r}; expected one of {sorted(CHANNEL_MODES)}")
    return np.arange(0, FULL_CHANNELS, CHANNEL_MODES[mode])


def select_channels(rec: Recording, mode: str) -> Recording:
    """Keep all, every 2nd, or every 4th channel of a full 128-channel recording."""
    idx = channel_indices(mode)
    if rec.n_channels != FULL_CHANNELS or (rec.layout is not None and rec.layout.n_horizontal != 16):
        raise RecordingError(f"channel selection needs the full {FULL_CHANNELS}-channel grid, got {rec.n_channels}")
    base = rec.layout or GridLayout(sampling_rate_hz=rec.sampling_rate_hz)
    layout = replace(base, n_horizontal=16 // CHANNEL_MODES[mode])
    return replace(rec, signal=rec.signal[:, idx], layout=layout)


# --- manifests -----------------------------------------------------------------


@dataclass
class ManifestEntry:
    subject_id: str
    path: str
    n_channels: int
    duration_s: float
    checksum: str


@dataclass
class Manifest:
    subjects: list[ManifestEntry]
    format_version: int = FORMAT_VERSION
    root: Path = Path(".")

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def validate(self) -> None:
        for entry in self.subjects:
            p = self.resolve(entry)
            if not p.exists():
                raise RecordingError(f"manifest lists missing file {p}")
            if sha256_file(p) != entry.checksum:
                raise RecordingError(f"checksum mismatch for {p}")

    def load(self, subject_id: str) -> Recording:
        for entry in self.subjects:
            if entry.subject_id == subject_id:
                return load_recording(self.resolve(entry))
        raise KeyError(subject_id)


def build_manifest(paths: list[str | Path], root: str | Path) -> Manifest:
    root = Path(root)
    entries = []
    for p in paths:
        rec = load_recording(p)
        p = Path(p).resolve()
        rel = p.relative_to(root.resolve()) if root.resolve() in p.parents else p
        entries.append(
            ManifestEntry(
                subject_id=rec.subject_id,
                path=str(rel),
                n_channels=rec.n_channels,
                duration_s=rec.n_samples / rec.sampling_rate_hz,
                checksum=sha256_file(p),
            )
        )
    return Manifest(subjects=entries, root=root)


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    doc = {
        "format_version": manifest.format_version,
        "subjects": [vars(e) for e in manifest.subjects],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path, validate: bool = True) -> Manifest:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise RecordingError(f"unsupported manifest version {doc.get('format_version')}")
    manifest = Manifest(
        subjects=[ManifestEntry(**e) for e in doc["subjects"]],
        root=path.parent,
    )
    if validate:
        manifest.validate()
    return manifest


# --- converter -----------------------------------------------------------------


def _load_table(path: Path) -> np.ndarray:
    with open(path) as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(v) for v in first.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        skip = 1
    return np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)


def convert_matrix(
    signal_path: str | Path,
    out_dir: str | Path,
    subject_id: str,
    n_channels: int | None = None,
    annotations: str | Path | None = None,
    sampling_rate_hz: float = SAMPLING_RATE_HZ,
) -> Path:
    """Map an external matrix dump into canonical form.

    CSV input holds ``C`` signal columns followed by label and repetition columns
    (a header row is skipped if present). Raw little-endian float32 input needs
    ``n_channels`` and an ``annotations`` CSV with label and repetition columns.
    """
    signal_path = Path(signal_path)
    if signal_path.suffix.lower() == ".csv":
        table = _load_table(signal_path)
        if table.shape[1] < 3:
            raise RecordingError("CSV needs at least one signal column plus label and repetition")
        signal, labels, reps = table[:, :-2], table[:, -2], table[:, -1]
    else:
        if n_channels is None or annotations is None:
            raise RecordingError("raw float32 input requires n_channels and an annotations CSV")
        flat = np.fromfile(signal_path, dtype="<f4")
        if flat.size % n_channels:
            raise RecordingError(f"{flat.size} floats do not divide into {n_channels} channels")
        signal = flat.reshape(-1, n_channels)
        ann = _load_table(Path(annotations))
        labels, reps = ann[:, 0], ann[:, 1]
    if np.any(labels != np.round(labels)) or np.any(reps != np.round(reps)):
        raise RecordingError("annotations must be integers")
    c = signal.shape[1]
    layout = None
    if c % N_VERTICAL == 0 and c // N_VERTICAL in (4, 8, 16):
        layout = GridLayout(n_horizontal=c // N_VERTICAL, sampling_rate_hz=sampling_rate_hz)
    rec = Recording(
        signal=signal.astype(np.float32),
        gesture_label=labels.astype(np.int64),
        repetition=reps.astype(np.int64),
        subject_id=subject_id,
        layout=layout,
        sampling_rate_hz=sampling_rate_hz,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{subject_id}.emg"
    write_recording(rec, target)
    return target

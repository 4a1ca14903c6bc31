"""Little-endian binary containers shared by recordings, window batches and MUAP images.

Recordings use a fixed 2-D layout::

    b"EMG1" | u32 T | u32 C | f32[T*C] row-major

Everything else (window batches, image sets) uses the n-dimensional variant::

    magic(4) | u32 ndim | u32 dims[ndim] | f32 data row-major
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

RECORDING_MAGIC = b"EMG1"
WINDOWS_MAGIC = b"EMGW"
MUAP_MAGIC = b"MUAP"


class ContainerError(ValueError):
    """Raised for malformed or truncated binary containers."""


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_matrix(path: str | Path, data: np.ndarray) -> None:
    data = np.asarray(data)
    if data.ndim != 2:
        raise ContainerError(f"recording payload must be 2-D, got shape {data.shape}")
    t, c = data.shape
    with open(path, "wb") as fh:
        fh.write(RECORDING_MAGIC)
        fh.write(struct.pack("<II", t, c))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != RECORDING_MAGIC:
        raise ContainerError(f"{path}: bad magic or truncated header")
    t, c = struct.unpack("<II", raw[4:12])
    payload = raw[12:]
    if len(payload) != 4 * t * c:
        raise ContainerError(f"{path}: header says {t}x{c} floats, payload has {len(payload)} bytes")
    return np.frombuffer(payload, dtype="<f4").reshape(t, c).copy()


def write_array(path: str | Path, data: np.ndarray, magic: bytes) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    data = np.asarray(data)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", data.ndim))
        fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_array(path: str | Path, magic: bytes) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != magic:
        raise ContainerError(f"{path}: expected magic {magic!r}")
    (ndim,) = struct.unpack("<I", raw[4:8])
    head = 8 + 4 * ndim
    if len(raw) < head:
        raise ContainerError(f"{path}: truncated shape header")
    shape = struct.unpack(f"<{ndim}I", raw[8:head])
    count = int(np.prod(shape)) if ndim else 1
    if len(raw) - head != 4 * count:
        raise ContainerError(f"{path}: payload size does not match shape {shape}")
    return np.frombuffer(raw[head:], dtype="<f4").reshape(shape).copy()

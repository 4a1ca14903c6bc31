"""CT-HGR vision transformer: patch embedding, class token, learnable 1-D positions,
pre-norm encoder layers with multi-head self-attention, linear head on the class token.

Inputs are ``[n, A, B, C]`` arrays: ``(W, N_ch, N_cv)`` windows for the raw-signal
variants, ``(8, 16, 1)`` peak-to-peak images for the MUAP variant. Patches tile the
first two axes with ``(H, V)`` and keep the full third axis.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import (
    Tensor,
    broadcast_to,
    concat,
    dropout,
    gelu,
    layer_norm,
    linear,
    softmax,
    swapaxes,
)

CHECKPOINT_MAGIC = b"CTHG"
CHECKPOINT_VERSION = 1

# Published learnable-parameter counts, keyed by (variant, channels, window).
REFERENCE_PARAM_COUNTS = {
    ("V1", 32, 64): 46_530,
    ("V1", 32, 128): 47_042,
    ("V1", 32, 256): 48_066,
    ("V1", 64, 64): 62_914,
    ("V1", 64, 128): 63_426,
    ("V1", 64, 256): 64_450,
    ("V1", 128, 64): 95_682,
    ("V1", 128, 128): 96_194,
    ("V1", 128, 256): 97_218,
    ("V1", 128, 512): 99_266,
    ("V2", 128, 64): 273_346,
    ("V2", 128, 128): 274_370,
    ("V2", 128, 256): 276_418,
    ("V2", 128, 512): 280_514,
}


class ModelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PatchSpec:
    H: int
    V: int

    def n_patches(self, a: int, b: int) -> int:
        if self.H < 1 or self.V < 1 or a % self.H or b % self.V:
            raise ModelConfigError(f"patch ({self.H}, {self.V}) does not tile input extent ({a}, {b})")
        return (a // self.H) * (b // self.V)


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    heads: int = 8
    layers: int = 1
    mlp_hidden: int = 64
    n_classes: int = 66
    input_shape: tuple[int, int, int] = (64, 8, 8)
    patch: PatchSpec = field(default_factory=lambda: PatchSpec(8, 8))
    input_kind: str = "window"
    dropout: float = 0.0
    scale_by_head_dim: bool = True
    init_std: float = 0.02

    def __post_init__(self):
        if isinstance(self.patch, (tuple, list)):
            object.__setattr__(self, "patch", PatchSpec(*self.patch))
        elif isinstance(self.patch, dict):
            object.__setattr__(self, "patch", PatchSpec(**self.patch))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        if self.d < 1 or self.heads < 1 or self.d % self.heads:
            raise ModelConfigError(f"embedding dim {self.d} must be divisible by head count {self.heads}")
        if self.layers < 0 or self.mlp_hidden < 1:
            raise ModelConfigError("layers must be >= 0 and mlp_hidden >= 1")
        if self.n_classes < 2:
            raise ModelConfigError("need at least 2 classes")
        if self.input_kind not in ("window", "image"):
            raise ModelConfigError(f"unknown input kind {self.input_kind!r}")
        if len(self.input_shape) != 3:
            raise ModelConfigError("input_shape must be (A, B, C)")
        self.patch.n_patches(*self.input_shape[:2])

    @property
    def n_patches(self) -> int:
        return self.patch.n_patches(*self.input_shape[:2])

    @property
    def patch_dim(self) -> int:
        return self.patch.H * self.patch.V * self.input_shape[2]

    @property
    def seq_len(self) -> int:
        return self.n_patches + 1

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    def to_dict(self) -> dict:
        out = asdict(self)
        out["input_shape"] = list(self.input_shape)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def preset(name: str, channels: int = 128, window: int = 64, n_classes: int = 66) -> ModelConfig:
    """V1/V2 for raw windows with 32/64/128 channels; V3 for the (8 x N_ch) MUAP image."""
    if name == "V3":
        n_ch = channels // 8
        if channels not in (32, 64, 128):
            raise ModelConfigError(f"channels must be 32, 64 or 128, got {channels}")
        return ModelConfig(
            d=64, heads=8, layers=1, mlp_hidden=64, n_classes=n_classes,
            input_shape=(8, n_ch, 1), patch=PatchSpec(8, min(8, n_ch)), input_kind="image",
        )
    if name not in ("V1", "V2"):
        raise ModelConfigError(f"unknown preset {name!r}")
    if channels not in (32, 64, 128):
        raise ModelConfigError(f"channels must be 32, 64 or 128, got {channels}")
    n_ch = channels // 8
    h = min(8, window)
    if window % h:
        raise ModelConfigError(f"window {window} is not a multiple of the temporal patch extent {h}")
    d, mlp = (64, 64) if name == "V1" else (128, 256)
    return ModelConfig(
        d=d, heads=8, layers=1, mlp_hidden=mlp, n_classes=n_classes,
        input_shape=(window, n_ch, 8), patch=PatchSpec(h, n_ch), input_kind="window",
    )


def count_parameters(cfg: ModelConfig) -> int:
    """Closed-form learnable-scalar count (bias-free patch projection, N+1 positions)."""
    d, m = cfg.d, cfg.mlp_hidden
    per_layer = 2 * d + 4 * (d * d + d) + 2 * d + (d * m + m) + (m * d + d)
    return cfg.patch_dim * d + cfg.seq_len * d + d + cfg.layers * per_layer + d * cfg.n_classes + cfg.n_classes


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in checkpoint order."""
    d, m = cfg.d, cfg.mlp_hidden
    shapes: dict[str, tuple[int, ...]] = {
        "E": (cfg.patch_dim, d),
        "E_pos": (cfg.seq_len, d),
        "class_token": (d,),
    }
    for l in range(cfg.layers):
        p = f"layer{l}."
        shapes.update({
            p + "ln1_gain": (d,), p + "ln1_bias": (d,),
            p + "W_Q": (d, d), p + "b_Q": (d,),
            p + "W_K": (d, d), p + "b_K": (d,),
            p + "W_V": (d, d), p + "b_V": (d,),
            p + "W_O": (d, d), p + "b_O": (d,),
            p + "ln2_gain": (d,), p + "ln2_bias": (d,),
            p + "mlp_W1": (d, m), p + "mlp_b1": (m,),
            p + "mlp_W2": (m, d), p + "mlp_b2": (d,),
        })
    shapes["head_W"] = (d, cfg.n_classes)
    shapes["head_b"] = (cfg.n_classes,)
    return shapes


def trunc_normal(rng: np.random.Generator, shape, std: float, bound: float = 2.0) -> np.ndarray:
    z = rng.standard_normal(shape)
    bad = np.abs(z) > bound
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > bound
    return z * std


def init_params(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    out = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.split(".")[-1]
        if "gain" in leaf:
            arr = np.ones(shape)
        elif leaf.startswith("b_") or "_b" in leaf or leaf.endswith("bias"):
            arr = np.zeros(shape)
        else:
            arr = trunc_normal(rng, shape, cfg.init_std)
        out[name] = arr.astype(dtype)
    return out


def patchify(x: np.ndarray, patch: PatchSpec) -> np.ndarray:
    """``[..., A, B, C]`` -> ``[..., N, H*V*C]``.

    Patches are ordered time-major (index = a_block * (B/V) + b_block) and each one
    is flattened in (time, horizontal, vertical) order.
    """
    x = np.asarray(x)
    *lead, a, b, c = x.shape
    patch.n_patches(a, b)
    h, v = patch.H, patch.V
    y = x.reshape(*lead, a // h, h, b // v, v, c)
    k = len(lead)
    y = np.moveaxis(y, k + 2, k + 1)  # [..., a/h, b/v, h, v, c]
    return y.reshape(*lead, (a // h) * (b // v), h * v * c)


class CTHGR:
    """A CT-HGR model instance: config plus named leaf tensors."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 seed: int = 0, dtype=np.float32):
        self.config = config
        if params is None:
            params = init_params(config, np.random.default_rng(seed), dtype)
        shapes = param_shapes(config)
        if list(params) != list(shapes):
            raise ModelConfigError("parameter names do not match the configuration")
        self.params: dict[str, Tensor] = {}
        for name, arr in params.items():
            arr = np.asarray(arr, dtype=dtype)
            if arr.shape != shapes[name]:
                raise ModelConfigError(f"{name}: expected shape {shapes[name]}, got {arr.shape}")
            self.params[name] = Tensor(arr.copy(), requires_grad=True, name=name)

    @property
    def dtype(self):
        return self.params["E"].dtype

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def freeze(self) -> None:
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None

    def astype(self, dtype) -> "CTHGR":
        return CTHGR(self.config, {k: v.data for k, v in self.params.items()}, dtype=dtype)

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    # -- forward ----------------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if self.config.input_kind == "image" and x.ndim == 3:
            x = x[..., None]
        if x.ndim != 4 or x.shape[1:] != self.config.input_shape:
            raise ModelConfigError(f"expected input [n, {', '.join(map(str, self.config.input_shape))}], got {x.shape}")
        return x.astype(self.dtype, copy=False)

    def _attention(self, h: Tensor, l: int, trace: dict | None) -> Tensor:
        cfg, p = self.config, self.params
        n, s, d = h.shape
        nh, dh = cfg.heads, cfg.head_dim
        pre = f"layer{l}."

        def split(t: Tensor) -> Tensor:
            return t.reshape(n, s, nh, dh).transpose(0, 2, 1, 3)

        q = split(linear(h, p[pre + "W_Q"], p[pre + "b_Q"]))
        k = split(linear(h, p[pre + "W_K"], p[pre + "b_K"]))
        v = split(linear(h, p[pre + "W_V"], p[pre + "b_V"]))
        denom = math.sqrt(dh if cfg.scale_by_head_dim else d)
        att = softmax((q @ swapaxes(k, -1, -2)) / denom, axis=-1)
        if trace is not None:
            trace["attention"].append(att.data.copy())
        o = (att @ v).transpose(0, 2, 1, 3).reshape(n, s, d)
        return linear(o, p[pre + "W_O"], p[pre + "b_O"])

    def encode(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None,
               trace: dict | None = None) -> Tensor:
        """Final encoder output ``z_L`` of shape ``[n, N+1, d]``."""
        cfg, p = self.config, self.params
        x = self._check_input(x)
        n = x.shape[0]
        tokens = Tensor(patchify(x, cfg.patch)) @ p["E"]
        cls = broadcast_to(p["class_token"].reshape(1, 1, cfg.d), (n, 1, cfg.d))
        z = concat([cls, tokens], axis=1) + p["E_pos"]
        z = dropout(z, cfg.dropout, train, rng)
        if trace is not None:
            trace.setdefault("z", []).append(z.data.copy())
            trace.setdefault("attention", [])
        for l in range(cfg.layers):
            pre = f"layer{l}."
            h = layer_norm(z, p[pre + "ln1_gain"], p[pre + "ln1_bias"])
            z = z + dropout(self._attention(h, l, trace), cfg.dropout, train, rng)
            h = layer_norm(z, p[pre + "ln2_gain"], p[pre + "ln2_bias"])
            h = gelu(linear(h, p[pre + "mlp_W1"], p[pre + "mlp_b1"]))
            h = linear(dropout(h, cfg.dropout, train, rng), p[pre + "mlp_W2"], p[pre + "mlp_b2"])
            z = z + dropout(h, cfg.dropout, train, rng)
            if trace is not None:
                trace["z"].append(z.data.copy())
        return z

    def class_token(self, x: np.ndarray, train: bool = False, rng=None) -> Tensor:
        return self.encode(x, train, rng)[:, 0, :]

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None,
                trace: dict | None = None) -> Tensor:
        z0 = self.encode(x, train, rng, trace)[:, 0, :]
        return linear(z0, self.params["head_W"], self.params["head_b"])

    __call__ = forward


def positional_cosine_matrix(params) -> np.ndarray:
    """Cosine similarity between every pair of positional-embedding rows."""
    if isinstance(params, CTHGR):
        e = params.params["E_pos"].data
    elif isinstance(params, dict):
        e = params["E_pos"]
        e = e.data if isinstance(e, Tensor) else e
    else:
        e = params
    e = np.asarray(e, dtype=np.float64)
    norms = np.linalg.norm(e, axis=1)
    zero = norms == 0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero-norm positional rows; their similarities are set to 0")
    safe = np.where(zero, 1.0, norms)
    u = e / safe[:, None]
    sim = u @ u.T
    sim[zero, :] = 0.0
    sim[:, zero] = 0.0
    return sim


# --- checkpoints -----------------------------------------------------------------


def save_checkpoint(model, path: str | Path, extra: dict | None = None, kind: str = "ct-hgr") -> str:
    """Write ``CTHG | u32 version | u32 header_len | header JSON | f32 blob``; return its sha256.

    ``model`` needs ``params`` (name -> Tensor) and ``config.to_dict()``.
    """
    header = {
        "kind": kind,
        "config": model.config.to_dict(),
        "params": [[k, list(v.shape)] for k, v in model.params.items()],
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    blob = b"".join(np.ascontiguousarray(v.data, dtype="<f4").tobytes() for v in model.params.values())
    payload = CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(hbytes)) + hbytes + blob
    Path(path).write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def read_checkpoint_blob(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ModelConfigError(f"{path}: not a checkpoint")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise ModelConfigError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[12 : 12 + hlen])
    flat = np.frombuffer(raw[12 + hlen :], dtype="<f4")
    params, off = {}, 0
    for name, shape in header["params"]:
        size = int(np.prod(shape))
        params[name] = flat[off : off + size].reshape(shape).copy()
        off += size
    if off != flat.size:
        raise ModelConfigError(f"{path}: blob size does not match the header")
    return header, params


def load_checkpoint(path: str | Path, dtype=np.float32) -> CTHGR:
    header, params = read_checkpoint_blob(path)
    if header.get("kind") != "ct-hgr":
        raise ModelConfigError(f"{path}: expected a ct-hgr checkpoint, found {header.get('kind')!r}")
    cfg = ModelConfig.from_dict(header["config"])
    return CTHGR(cfg, params, dtype=dtype)


def params_digest(model) -> str:
    h = hashlib.sha256()
    for name, t in model.params.items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(t.data).tobytes())
    return h.hexdigest()

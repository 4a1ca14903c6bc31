"""3-D CNN baseline: two (conv -> GELU -> dropout -> max-pool) stages, two FC layers, linear head."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Tensor, conv3d, dropout, gelu, linear, maxpool3d
from ..autodiff.functional import pool_extent

# Published 3D-CNN parameter counts for 64 channels, keyed by window size.
REFERENCE_CNN3D_COUNTS = {64: 294_914, 128: 311_298, 256: 319_490}


@dataclass(frozen=True)
class Cnn3dConfig:
    input_shape: tuple[int, int, int] = (64, 8, 8)
    conv1: int = 16
    conv2: int = 32
    kernel: tuple[int, int, int] = (5, 3, 3)
    pool: tuple[int, int, int] = (2, 2, 2)
    dropout: float = 0.2
    fc: tuple[int, int] = (256, 128)
    n_classes: int = 66

    def __post_init__(self):
        for name in ("input_shape", "kernel", "pool", "fc"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        self.feature_shape()

    def stage_shapes(self) -> list[tuple[int, int, int]]:
        """Spatial extents after conv1, pool1, conv2, pool2."""
        out = []
        s = self.input_shape
        for _ in range(2):
            s = tuple(a - k + 1 for a, k in zip(s, self.kernel))
            if min(s) < 1:
                raise ValueError(f"spatial underflow: input {self.input_shape} too small for kernel {self.kernel}")
            out.append(s)
            s = pool_extent(s, self.pool)[1]
            out.append(s)
        return out

    def feature_shape(self) -> tuple[int, int, int]:
        return self.stage_shapes()[-1]

    @property
    def flat_dim(self) -> int:
        return self.conv2 * int(np.prod(self.feature_shape()))

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: Cnn3dConfig) -> dict[str, tuple[int, ...]]:
    k = cfg.kernel
    f1, f2 = cfg.fc
    return {
        "conv1_W": (cfg.conv1, 1, *k),
        "conv1_b": (cfg.conv1,),
        "conv2_W": (cfg.conv2, cfg.conv1, *k),
        "conv2_b": (cfg.conv2,),
        "fc1_W": (cfg.flat_dim, f1),
        "fc1_b": (f1,),
        "fc2_W": (f1, f2),
        "fc2_b": (f2,),
        "head_W": (f2, cfg.n_classes),
        "head_b": (cfg.n_classes,),
    }


def count_parameters(cfg: Cnn3dConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(cfg).values()))


class Cnn3d:
    def __init__(self, config: Cnn3dConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0,
                 dtype=np.float32):
        self.config = config
        shapes = param_shapes(config)
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for name, shape in shapes.items():
                if name.endswith("_b"):
                    params[name] = np.zeros(shape)
                else:
                    fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
                    params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        self.params = {
            name: Tensor(np.asarray(params[name], dtype=dtype).reshape(shape).copy(), requires_grad=True, name=name)
            for name, shape in shapes.items()
        }

    @property
    def dtype(self):
        return self.params["conv1_W"].dtype

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Logits for ``[n, W, N_ch, N_cv]`` windows (softmax is applied by the loss / at prediction)."""
        cfg, p = self.config, self.params
        x = np.asarray(x)
        if x.shape[1:] != cfg.input_shape:
            raise ValueError(f"expected windows of shape {cfg.input_shape}, got {x.shape[1:]}")
        h = Tensor(x[:, None].astype(self.dtype, copy=False))
        for stage in ("conv1", "conv2"):
            h = gelu(conv3d(h, p[stage + "_W"], p[stage + "_b"]))
            h = dropout(h, cfg.dropout, train, rng)
            h = maxpool3d(h, cfg.pool)
        h = h.reshape(h.shape[0], -1)
        h = gelu(linear(h, p["fc1_W"], p["fc1_b"]))
        h = gelu(linear(h, p["fc2_W"], p["fc2_b"]))
        return linear(h, p["head_W"], p["head_b"])

    __call__ = forward

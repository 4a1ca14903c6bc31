"""Fused Macro/Micro classifier.

Two frozen CT-HGR backbones (raw-signal windows and MUAP peak-to-peak images) each
produce a class token; the tokens are concatenated, projected to 1024 dims and
classified by a small fully-connected stack. Only the projection and the stack train.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor, concat, dropout, gelu, linear
from .model import CTHGR, ModelConfig, params_digest, read_checkpoint_blob, save_checkpoint
from .training import TrainConfig, TrainHistory, predict_logits, train_classifier

log = logging.getLogger(__name__)


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    token_dims: tuple[int, int] = (64, 64)
    projection: int = 1024
    hidden: tuple[int, ...] = (512,)
    n_classes: int = 66
    dropout: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "token_dims", tuple(int(v) for v in self.token_dims))
        object.__setattr__(self, "hidden", tuple(int(v) for v in self.hidden))

    def widths(self) -> list[int]:
        return [sum(self.token_dims), self.projection, *self.hidden, self.n_classes]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["token_dims"] = list(self.token_dims)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        return cls(**d)


def head_shapes(cfg: FusionConfig) -> dict[str, tuple[int, ...]]:
    w = cfg.widths()
    out = {}
    for i, (a, b) in enumerate(zip(w[:-1], w[1:])):
        out[f"fc{i}_W"] = (a, b)
        out[f"fc{i}_b"] = (b,)
    return out


class FusionHead:
    """Trainable part: token vector ``[n, d_V1 + d_V3]`` -> logits."""

    def __init__(self, config: FusionConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0,
                 dtype=np.float32):
        self.config = config
        shapes = head_shapes(config)
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for name, shape in shapes.items():
                if name.endswith("_b"):
                    params[name] = np.zeros(shape)
                else:
                    bound = 1.0 / np.sqrt(shape[0])
                    params[name] = rng.uniform(-bound, bound, shape)
        self.params = {
            name: Tensor(np.asarray(params[name], dtype=dtype).reshape(shape).copy(), requires_grad=True, name=name)
            for name, shape in shapes.items()
        }

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def forward(self, tokens, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        h = tokens if isinstance(tokens, Tensor) else Tensor(np.asarray(tokens, dtype=self.params["fc0_W"].dtype))
        if h.shape[-1] != sum(self.config.token_dims):
            raise FusionError(f"expected {sum(self.config.token_dims)}-dim token vectors, got {h.shape[-1]}")
        n_layers = len(self.config.widths()) - 1
        for i in range(n_layers):
            h = linear(h, self.params[f"fc{i}_W"], self.params[f"fc{i}_b"])
            if i < n_layers - 1:
                h = dropout(gelu(h), self.config.dropout, train, rng)
        return h

    __call__ = forward


class FusionModel:
    def __init__(self, macro: CTHGR, micro: CTHGR, head: FusionHead):
        dims = (macro.config.d, micro.config.d)
        if head.config.token_dims != dims:
            raise FusionError(f"head expects token dims {head.config.token_dims}, backbones give {dims}")
        macro.freeze()
        micro.freeze()
        self.macro, self.micro, self.head = macro, micro, head

    def backbone_digests(self) -> tuple[str, str]:
        return params_digest(self.macro), params_digest(self.micro)

    def tokens(self, windows: np.ndarray, images: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Concatenated eval-mode class tokens ``[n, d_V1 + d_V3]``."""
        windows, images = np.asarray(windows), np.asarray(images)
        if len(windows) != len(images):
            raise FusionError("windows and MUAP images differ in count")
        out = []
        for i in range(0, len(windows), batch_size):
            a = self.macro.class_token(windows[i : i + batch_size])
            b = self.micro.class_token(images[i : i + batch_size])
            out.append(concat([a, b], axis=1).data)
        return np.concatenate(out, axis=0)

    def forward(self, windows: np.ndarray, images: np.ndarray) -> Tensor:
        return self.head.forward(self.tokens(windows, images), train=False)

    def check_frozen(self) -> None:
        for model in (self.macro, self.micro):
            for name, p in model.params.items():
                assert p.grad is None and not p.requires_grad, f"gradient reached frozen parameter {name}"


def fuse_forward(windows: np.ndarray, images: np.ndarray, model: FusionModel) -> np.ndarray:
    return model.forward(windows, images).data


def train_fusion(macro: CTHGR, micro: CTHGR, windows: np.ndarray, images: np.ndarray, labels: np.ndarray,
                 train_cfg: TrainConfig, fusion_cfg: FusionConfig | None = None) -> tuple[FusionModel, TrainHistory]:
    """Train the projection and classifier stack on top of frozen backbones."""
    if fusion_cfg is None:
        fusion_cfg = FusionConfig(token_dims=(macro.config.d, micro.config.d), n_classes=macro.config.n_classes)
    head = FusionHead(fusion_cfg, seed=train_cfg.seed)
    model = FusionModel(macro, micro, head)
    before = model.backbone_digests()
    tokens = model.tokens(windows, images)
    hist = train_classifier(head, tokens, labels, train_cfg, check=model.check_frozen)
    if model.backbone_digests() != before:
        raise AssertionError("backbone parameters changed during fusion training")
    return model, hist


def predict_fusion(model: FusionModel, windows: np.ndarray, images: np.ndarray) -> np.ndarray:
    return np.argmax(predict_logits(model.head, model.tokens(windows, images)), axis=1)


# -- checkpoints ------------------------------------------------------------------


def load_backbone(path: str | Path) -> tuple[CTHGR, dict]:
    """Load a trained CT-HGR checkpoint; refuse ones that record no training."""
    header, params = read_checkpoint_blob(path)
    if header.get("kind") != "ct-hgr":
        raise FusionError(f"{path}: not a CT-HGR checkpoint")
    if int(header.get("extra", {}).get("trained_epochs", 0)) <= 0:
        raise FusionError(f"{path}: backbone checkpoint is untrained")
    return CTHGR(ModelConfig.from_dict(header["config"]), params), header


def save_fusion(model: FusionModel, path: str | Path, macro_sha: str, micro_sha: str, extra: dict | None = None) -> str:
    meta = {"macro_checkpoint": macro_sha, "micro_checkpoint": micro_sha, **(extra or {})}
    return save_checkpoint(model.head, path, meta, kind="fusion-head")


def load_fusion(path: str | Path, macro_path: str | Path, micro_path: str | Path) -> FusionModel:
    from .container import sha256_file

    header, params = read_checkpoint_blob(path)
    if header.get("kind") != "fusion-head":
        raise FusionError(f"{path}: not a fusion checkpoint")
    for key, p in (("macro_checkpoint", macro_path), ("micro_checkpoint", micro_path)):
        if sha256_file(p) != header["extra"].get(key):
            raise FusionError(f"{p}: content hash does not match the one recorded in {path}")
    macro, _ = load_backbone(macro_path)
    micro, _ = load_backbone(micro_path)
    head = FusionHead(FusionConfig.from_dict(header["config"]), params)
    return FusionModel(macro, micro, head)

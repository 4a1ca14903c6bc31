"""Versioned JSON experiment configuration.

Every section has explicit defaults; ``resolve`` materialises them all and rejects
unknown keys, and ``config_hash`` identifies a resolved configuration.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict
from pathlib import Path

from ..baselines.svm import SvmConfig
from ..decomp import DecompConfig
from ..dsp import PreprocessConfig, WindowSpec
from ..ingest import CHANNEL_MODES
from ..synthetic import SynthSpec
from ..training import TrainConfig
from .folds import FoldPlan

CONFIG_VERSION = 1
MODEL_KINDS = ("ct-hgr", "cnn3d", "svm", "fusion")


class ConfigError(ValueError):
    pass


def _without_seed(d: dict) -> dict:
    # Per-job seeds are derived from the top-level seed.
    d.pop("seed")
    return d


def _train_defaults(**overrides) -> dict:
    return _without_seed(TrainConfig(**overrides).to_dict())


DEFAULTS: dict = {
    "version": CONFIG_VERSION,
    "name": "experiment",
    "seed": 0,
    "output_dir": "runs",
    "dataset": {"synthetic": None, "manifest": None, "recordings": [], "n_subjects": 1},
    "channels": "full",
    "preprocessing": asdict(PreprocessConfig()),
    "window": {"length": 64, "skip": None},
    "model": {"kind": "ct-hgr", "preset": "V1", "overrides": {}},
    "optimizer": _train_defaults(),
    "svm": _without_seed(asdict(SvmConfig())),
    "folds": FoldPlan().to_dict(),
    "fusion": {
        "decomposition": asdict(DecompConfig()),
        "micro_optimizer": _train_defaults(epochs=50, batch_size=64, lr=3e-4),
        "head_optimizer": _train_defaults(epochs=50, batch_size=64, lr=3e-4),
        "projection": 1024,
        "hidden": [512],
        "dropout": 0.2,
    },
}

# Sections whose keys are free-form and therefore not checked against DEFAULTS.
_OPEN = {("model", "overrides")}


def _merge(defaults: dict, given: dict, path: tuple[str, ...]) -> dict:
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        where = ".".join(path) or "top level"
        raise ConfigError(f"unknown key(s) {unknown} in {where}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        sub = path + (key,)
        if isinstance(defaults[key], dict) and sub not in _OPEN and key != "synthetic":
            if not isinstance(value, dict):
                raise ConfigError(f"{'.'.join(sub)} must be an object")
            out[key] = _merge(defaults[key], value, sub)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve(config: dict) -> dict:
    """Materialise defaults, reject unknown keys and validate every section."""
    if not isinstance(config, dict):
        raise ConfigError("configuration must be a JSON object")
    if config.get("version") != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {config.get('version')!r} (expected {CONFIG_VERSION})")
    cfg = _merge(DEFAULTS, config, ())
    ds = cfg["dataset"]
    sources = [ds["synthetic"] is not None, ds["manifest"] is not None, bool(ds["recordings"])]
    if sum(sources) != 1:
        raise ConfigError("dataset needs exactly one of synthetic, manifest, recordings")
    if ds["synthetic"] is not None:
        try:
            spec = SynthSpec(**ds["synthetic"])
            spec.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"dataset.synthetic: {exc}") from None
        ds["synthetic"] = asdict(spec)
    if int(ds["n_subjects"]) < 1:
        raise ConfigError("dataset.n_subjects must be >= 1")
    if cfg["channels"] not in CHANNEL_MODES:
        raise ConfigError(f"channels must be one of {sorted(CHANNEL_MODES)}")
    if cfg["model"]["kind"] not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
    try:
        PreprocessConfig(**cfg["preprocessing"])
        TrainConfig.from_dict(cfg["optimizer"])
        SvmConfig(**cfg["svm"])
        FoldPlan(**cfg["folds"])
        DecompConfig(**cfg["fusion"]["decomposition"])
        TrainConfig.from_dict(cfg["fusion"]["micro_optimizer"])
        TrainConfig.from_dict(cfg["fusion"]["head_optimizer"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    try:
        spec = WindowSpec(int(cfg["window"]["length"]), cfg["window"]["skip"])
    except ValueError as exc:
        raise ConfigError(f"window: {exc}") from None
    cfg["window"] = {"length": spec.length, "skip": spec.skip}
    _check_model_shapes(cfg)
    return cfg


def _check_model_shapes(cfg: dict) -> None:
    """Build the model configs once so shape errors surface before any data is touched."""
    from ..baselines.cnn3d import Cnn3dConfig
    from ..model import ModelConfig, preset

    overrides = dict(cfg["model"]["overrides"])
    n_classes = int(overrides.pop("n_classes", 66))
    n_h = 16 // CHANNEL_MODES[cfg["channels"]]
    window = cfg["window"]["length"]
    kind = cfg["model"]["kind"]
    try:
        if kind == "cnn3d":
            Cnn3dConfig(**{"input_shape": (window, n_h, 8), "n_classes": n_classes, **overrides})
        elif kind in ("ct-hgr", "fusion"):
            base = preset(cfg["model"]["preset"], n_h * 8, window, n_classes)
            if overrides:
                ModelConfig.from_dict({**base.to_dict(), **overrides})
            if kind == "fusion":
                preset("V3", n_h * 8, window, n_classes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(canonical_json(resolved).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def load_config(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return resolve(raw)

"""Experiment protocol: per-subject, per-fold training and evaluation.

Normalisation constants (channel max-abs scales, MUAP image scale, SVM feature
standardisation) are always fitted on the training indices of the fold at hand;
each job records an audit entry proving it.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..baselines import Cnn3d, Cnn3dConfig, SvmConfig, extract_features_batch, train_svm
from ..decomp import DecompConfig, decompose_batch
from ..dsp import PreprocessConfig, WindowBatch, WindowSpec, envelope_recording, fit_scale, normalize, segment, window_starts
from ..fusion import FusionConfig, predict_fusion, train_fusion
from ..ingest import FULL_CHANNELS, Recording, load_manifest, load_recording, remove_rest, select_channels
from ..model import CTHGR, ModelConfig, positional_cosine_matrix, preset
from ..synthetic import SynthSpec, synthesize_dataset
from ..training import TrainConfig, accuracy, predict, train_classifier
from .folds import Fold, FoldPlan, make_folds
from .stats import confusion_matrix

log = logging.getLogger(__name__)

WORKERS_ENV = "CTHGR_WORKERS"


@dataclass
class SubjectData:
    subject_id: str
    windows: WindowBatch  # enveloped, not yet normalised
    images: np.ndarray | None = None  # MUAP images aligned with ``windows`` (fusion only)
    decomposition: list | None = None


def job_seed(seed: int, subject_index: int, fold_index: int) -> int:
    return int(np.random.SeedSequence([seed, subject_index, fold_index]).generate_state(1)[0])


def load_recordings(cfg: dict) -> list[Recording]:
    ds = cfg["dataset"]
    if ds["synthetic"] is not None:
        base = dict(ds["synthetic"])
        n = int(ds["n_subjects"])
        recs = []
        for i in range(n):
            sid = base["subject_id"] if n == 1 else f"{base['subject_id']}{i + 1:02d}"
            recs.append(synthesize_dataset(SynthSpec(**{**base, "seed": base["seed"] + i, "subject_id": sid})))
        return recs
    if ds["manifest"] is not None:
        manifest = load_manifest(ds["manifest"])
        return [manifest.load(e.subject_id) for e in manifest.subjects]
    return [load_recording(p) for p in ds["recordings"]]


def prepare_subject(rec: Recording, cfg: dict) -> SubjectData:
    """Channel selection, envelope, rest removal and windowing; decomposition for fusion runs."""
    if rec.n_channels == FULL_CHANNELS:
        rec = select_channels(rec, cfg["channels"])
    elif cfg["channels"] != "full":
        raise ValueError(f"channel mode {cfg['channels']!r} needs a {FULL_CHANNELS}-channel recording")
    pp = PreprocessConfig(**cfg["preprocessing"])
    spec = WindowSpec(**cfg["window"])
    env = remove_rest(envelope_recording(rec, pp))
    starts = window_starts(env.gesture_label, env.repetition, spec)
    windows = segment(env, spec, starts)
    data = SubjectData(rec.subject_id, windows)
    if cfg["model"]["kind"] == "fusion":
        raw = segment(remove_rest(rec), spec, starts).samples
        dcfg = DecompConfig(**cfg["fusion"]["decomposition"])
        data.images, data.decomposition = decompose_batch(raw, windows.labels, dcfg)
    return data


def n_classes_of(cfg: dict) -> int:
    return int(cfg["model"]["overrides"].get("n_classes", 66))


def backbone_config(cfg: dict, name: str, input_shape: tuple[int, ...]) -> ModelConfig:
    n_classes = n_classes_of(cfg)
    channels = input_shape[1] * input_shape[2]
    base = preset(name, channels, input_shape[0], n_classes)
    overrides = {k: v for k, v in cfg["model"]["overrides"].items() if k != "n_classes"} if name != "V3" else {}
    return ModelConfig.from_dict({**base.to_dict(), **overrides}) if overrides else base


def _train_cfg(section: dict, seed: int) -> TrainConfig:
    return TrainConfig.from_dict({**section, "seed": seed})


def run_fold(cfg: dict, subject: SubjectData, fold: Fold, seed: int) -> dict:
    """Train and test one model (or the three fusion paths) on one fold of one subject."""
    kind = cfg["model"]["kind"]
    tr, te = fold.train, fold.test
    if tr.size == 0:
        raise ValueError(f"fold {fold.index} of {subject.subject_id} has an empty training set")
    samples = subject.windows.samples
    n_classes = n_classes_of(cfg)
    y = subject.windows.labels - 1
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"gesture labels exceed the {n_classes}-class head")

    grid = samples.shape[2:]
    scale = fit_scale(samples[tr].reshape(-1, int(np.prod(grid)))).reshape(grid)
    x = normalize(samples, scale, cfg["preprocessing"]["mu"]).astype(np.float32)
    audit = {
        "scale_fit": "train",
        "scale_fit_windows": int(tr.size),
        "test_windows_in_fit": int(np.intersect1d(tr, te).size),
    }

    out = {
        "subject_id": subject.subject_id,
        "fold": fold.index,
        "test_repetition": fold.test_repetition,
        "n_train": int(tr.size),
        "n_test": int(te.size),
        "accuracy": {},
        "train_accuracy": {},
        "confusion": {},
        "n_parameters": {},
        "audit": audit,
        "cosine": None,
    }

    def record(path: str, pred: np.ndarray, train_acc: float, n_params: int) -> None:
        out["accuracy"][path] = accuracy(pred, y[te])
        out["train_accuracy"][path] = float(train_acc)
        out["confusion"][path] = confusion_matrix(y[te], pred, n_classes).tolist()
        out["n_parameters"][path] = int(n_params)

    if kind == "svm":
        feats = extract_features_batch(x)
        svm = train_svm(feats[tr], y[tr], SvmConfig(**{**cfg["svm"], "seed": seed}))
        audit["feature_standardization_fit"] = "train"
        record("svm", svm.predict(feats[te]), accuracy(svm.predict(feats[tr]), y[tr]), svm.weights.size + svm.bias.size)
    elif kind == "cnn3d":
        ccfg = Cnn3dConfig(**{"input_shape": x.shape[1:], "n_classes": n_classes, **cfg["model"]["overrides"]})
        model = Cnn3d(ccfg, seed=seed)
        hist = train_classifier(model, x[tr], y[tr], _train_cfg(cfg["optimizer"], seed))
        record("cnn3d", predict(model, x[te]), hist.train_accuracy[-1] if hist.train_accuracy else 0.0,
               model.n_parameters())
    elif kind == "ct-hgr":
        model = CTHGR(backbone_config(cfg, cfg["model"]["preset"], x.shape[1:]), seed=seed)
        hist = train_classifier(model, x[tr], y[tr], _train_cfg(cfg["optimizer"], seed))
        record("ct-hgr", predict(model, x[te]), hist.train_accuracy[-1] if hist.train_accuracy else 0.0,
               model.n_parameters())
        out["cosine"] = positional_cosine_matrix(model).tolist()
    else:
        _run_fusion(cfg, subject, x, y, tr, te, seed, record, out)
    if audit["test_windows_in_fit"]:
        raise AssertionError("normalisation statistics touched test windows")
    return out


def _run_fusion(cfg, subject, x, y, tr, te, seed, record, out) -> None:
    fcfg = cfg["fusion"]
    img_scale = float(np.max(subject.images[tr])) if tr.size else 1.0
    img_scale = img_scale if img_scale > 0 else 1.0
    images = np.clip(subject.images / img_scale, 0.0, 1.0).astype(np.float32)
    out["audit"]["image_scale_fit"] = "train"

    macro = CTHGR(backbone_config(cfg, cfg["model"]["preset"], x.shape[1:]), seed=seed)
    h_macro = train_classifier(macro, x[tr], y[tr], _train_cfg(cfg["optimizer"], seed))
    micro = CTHGR(backbone_config(cfg, "V3", x.shape[1:]), seed=seed + 1)
    h_micro = train_classifier(micro, images[tr], y[tr], _train_cfg(fcfg["micro_optimizer"], seed + 1))
    record("macro", predict(macro, x[te]), h_macro.train_accuracy[-1] if h_macro.train_accuracy else 0.0,
           macro.n_parameters())
    record("micro", predict(micro, images[te]), h_micro.train_accuracy[-1] if h_micro.train_accuracy else 0.0,
           micro.n_parameters())
    out["cosine"] = positional_cosine_matrix(macro).tolist()

    head_cfg = FusionConfig(
        token_dims=(macro.config.d, micro.config.d),
        projection=fcfg["projection"],
        hidden=tuple(fcfg["hidden"]),
        n_classes=macro.config.n_classes,
        dropout=fcfg["dropout"],
    )
    fused, h_fused = train_fusion(macro, micro, x[tr], images[tr], y[tr], _train_cfg(fcfg["head_optimizer"], seed + 2),
                                  head_cfg)
    n_head = sum(p.size for p in fused.head.parameters())
    record("fused", predict_fusion(fused, x[te], images[te]),
           h_fused.train_accuracy[-1] if h_fused.train_accuracy else 0.0, n_head)


def _run_job(args) -> dict:
    cfg, subject, fold, seed = args
    t0 = time.perf_counter()
    result = run_fold(cfg, subject, fold, seed)
    result["_seconds"] = time.perf_counter() - t0
    log.info("subject %s fold %d: %s", subject.subject_id, fold.index,
             ", ".join(f"{k}={v:.2f}" for k, v in result["accuracy"].items()))
    return result


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_protocol(cfg: dict, subjects: list[SubjectData] | None = None, workers: int | None = None) -> list[dict]:
    """Run every (subject, fold) job; results come back in (subject, fold) order."""
    if subjects is None:
        subjects = [prepare_subject(rec, cfg) for rec in load_recordings(cfg)]
    plan = FoldPlan(**cfg["folds"])
    jobs = []
    for si, subject in enumerate(subjects):
        for fold in make_folds(subject.windows.fold_key, subject.windows.labels, plan):
            jobs.append((cfg, subject, fold, job_seed(cfg["seed"], si, fold.index)))
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]

"""Command-line entry point: ``cthgr <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .container import ContainerError, sha256_file
from .evaluation.config import ConfigError

log = logging.getLogger("cthgr")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    pass


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# --- ingest --------------------------------------------------------------------


def cmd_ingest_convert(args) -> int:
    from .ingest import convert_matrix

    out = convert_matrix(args.signal, args.out, args.subject, args.n_channels, args.annotations, args.fs)
    print(out)
    return EXIT_OK


def cmd_ingest_validate(args) -> int:
    from .ingest import load_manifest, load_recording

    for p in args.paths:
        p = Path(p)
        if p.suffix == ".json":
            m = load_manifest(p, validate=True)
            print(f"{p}: manifest ok, {len(m.subjects)} subject(s)")
        else:
            rec = load_recording(p, verify_checksum=True)
            reps = sorted(set(rec.repetition[rec.repetition > 0].tolist()))
            n_labels = len(set(rec.gesture_label[rec.gesture_label > 0].tolist()))
            print(f"{p}: ok, subject {rec.subject_id}, {rec.n_samples} samples x {rec.n_channels} channels, "
                  f"{n_labels} gesture(s), repetitions {reps}")
    return EXIT_OK


def cmd_ingest_synth(args) -> int:
    from .ingest import build_manifest, write_manifest, write_recording
    from .synthetic import SynthSpec, synthesize_dataset

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(args.subjects):
        sid = f"synth{i + 1:02d}"
        spec = SynthSpec(n_classes=args.classes, n_repetitions=args.repetitions, noise_level=args.noise,
                         seed=args.seed + i, subject_id=sid)
        p = out / f"{sid}.emg"
        write_recording(synthesize_dataset(spec), p)
        paths.append(p)
    write_manifest(build_manifest(paths, out), out / "manifest.json")
    print(out / "manifest.json")
    return EXIT_OK


# --- preprocess / decompose ------------------------------------------------------


def _load_for_windows(path: str, channels: str):
    from .ingest import FULL_CHANNELS, load_recording, select_channels

    rec = load_recording(path)
    if rec.n_channels == FULL_CHANNELS:
        return select_channels(rec, channels)
    if channels != "full":
        raise CliError(f"--channels {channels} needs a {FULL_CHANNELS}-channel recording")
    return rec


def cmd_preprocess(args) -> int:
    from .dsp import PreprocessConfig, WindowSpec, preprocess_to_batch, write_window_batch

    rec = _load_for_windows(args.recording, args.channels)
    cfg = PreprocessConfig(mu=args.mu, cutoff_hz=args.cutoff_hz, rectify=args.rectify, filter_mode=args.filter_mode)
    spec = WindowSpec(args.window, args.skip)
    batch, manifest = preprocess_to_batch(rec, cfg, spec, args.fit_repetitions)
    manifest.update(channels=args.channels, source_sha256=sha256_file(args.recording))
    write_window_batch(batch, args.out, manifest)
    print(f"{args.out}: {len(batch)} windows of shape {batch.samples.shape[1:]}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    from .decomp import DecompConfig, decompose_batch, write_muap_file
    from .dsp import WindowSpec, segment
    from .ingest import remove_rest

    rec = remove_rest(_load_for_windows(args.recording, args.channels))
    spec = WindowSpec(args.window, args.skip)
    batch = segment(rec, spec)
    cfg = DecompConfig(
        max_sources=args.max_sources,
        silhouette_threshold=args.silhouette,
        extension_factor=args.extension_factor,
        max_components=args.max_components,
        aggregate=args.aggregate,
        seed=args.seed,
    )
    images, meta = decompose_batch(batch.samples, batch.labels, cfg)
    extra = {
        "subject_id": rec.subject_id,
        "labels": batch.labels.tolist(),
        "fold_key": batch.fold_key.tolist(),
        "starts": batch.starts.tolist(),
        "window": {"length": spec.length, "skip": spec.skip},
        "channels": args.channels,
        "source_sha256": sha256_file(args.recording),
    }
    write_muap_file(args.out, images, meta, cfg, extra)
    with_units = sum(m["n_units"] > 0 for m in meta)
    print(f"{args.out}: {len(meta)} windows, {with_units} with accepted units")
    return EXIT_OK


# --- training ------------------------------------------------------------------


def _load_inputs(path: str) -> dict:
    """Window batch (``.emgw``) or MUAP image file (``.muap``) -> arrays plus provenance."""
    from .decomp import read_muap_file
    from .dsp import load_window_batch

    p = Path(path)
    if p.suffix == ".muap":
        images, doc = read_muap_file(p)
        if "labels" not in doc:
            raise CliError(f"{p}: MUAP file lacks window labels; regenerate it with `cthgr decompose`")
        return {
            "kind": "images",
            "x": images,
            "labels": np.asarray(doc["labels"], np.int64),
            "fold_key": np.asarray(doc["fold_key"], np.int64),
            "starts": np.asarray(doc["starts"], np.int64),
            "subject_id": doc.get("subject_id", ""),
            "meta": {k: v for k, v in doc.items() if k != "windows"},
        }
    batch, manifest = load_window_batch(p)
    return {
        "kind": "windows",
        "x": batch.samples,
        "labels": batch.labels,
        "fold_key": batch.fold_key,
        "starts": batch.starts,
        "subject_id": batch.subject_id,
        "meta": manifest,
    }


def _split(fold_key: np.ndarray, test_repetition: int) -> tuple[np.ndarray, np.ndarray]:
    te = np.flatnonzero(fold_key == test_repetition)
    tr = np.flatnonzero(fold_key != test_repetition)
    if te.size == 0:
        raise CliError(f"repetition {test_repetition} is absent from the input")
    if tr.size == 0:
        raise CliError("empty training set")
    return tr, te


def _train_config(args, seed: int):
    from .training import TrainConfig

    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, weight_decay=args.weight_decay,
                       schedule=args.schedule, anneal_after=args.anneal_after, seed=seed)


def _job_result(subject_id: str, test_repetition: int, tr, te, audit: dict) -> dict:
    return {
        "subject_id": subject_id,
        "fold": test_repetition,
        "test_repetition": test_repetition,
        "n_train": int(tr.size),
        "n_test": int(te.size),
        "accuracy": {},
        "train_accuracy": {},
        "confusion": {},
        "n_parameters": {},
        "audit": audit,
        "cosine": None,
    }


def _record(result: dict, path: str, pred, truth, train_acc: float, n_params: int, n_classes: int) -> None:
    from .evaluation.stats import confusion_matrix
    from .training import accuracy

    result["accuracy"][path] = accuracy(pred, truth)
    result["train_accuracy"][path] = float(train_acc)
    result["confusion"][path] = confusion_matrix(truth, pred, n_classes).tolist()
    result["n_parameters"][path] = int(n_params)


def _image_scale(images: np.ndarray, tr: np.ndarray) -> float:
    s = float(np.max(images[tr])) if tr.size else 0.0
    return s if s > 0 else 1.0


def _write_run(out: Path, run_cfg: dict, results: list[dict]) -> Path:
    from .evaluation.report import build_report, write_report

    return write_report(build_report(run_cfg, results), out)


def cmd_train(args) -> int:
    from .baselines import Cnn3d, Cnn3dConfig, SvmConfig, extract_features_batch, train_svm
    from .model import CTHGR, ModelConfig, positional_cosine_matrix, preset, save_checkpoint
    from .training import accuracy, predict, train_classifier

    data = _load_inputs(args.input)
    x = data["x"].astype(np.float32)
    y = data["labels"] - 1
    if y.min() < 0 or y.max() >= args.n_classes:
        raise CliError(f"labels fall outside 1..{args.n_classes}")
    tr, te = _split(data["fold_key"], args.test_repetition)
    fitted = data["meta"].get("scale_fit_repetitions")
    audit = {
        "scale_fit": "preprocess",
        "scale_fit_repetitions": fitted,
        "test_windows_in_fit": int(te.size) if fitted is None or args.test_repetition in fitted else 0,
    }
    if data["kind"] == "images":
        scale = _image_scale(x, tr)
        x = np.clip(x / scale, 0.0, 1.0).astype(np.float32)
        audit = {"image_scale_fit": "train", "image_scale": scale, "test_windows_in_fit": 0}
    if audit["test_windows_in_fit"]:
        log.warning("input scale was fitted on data that includes the test repetition")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = _job_result(data["subject_id"], args.test_repetition, tr, te, audit)
    train_cfg = _train_config(args, args.seed)
    run_cfg = {"command": "train", "model": args.model, "preset": args.preset, "input_sha256": sha256_file(args.input),
               "test_repetition": args.test_repetition, "n_classes": args.n_classes, "seed": args.seed,
               "optimizer": train_cfg.to_dict()}
    extra = {"trained_epochs": train_cfg.epochs, "input_sha256": run_cfg["input_sha256"],
             "test_repetition": args.test_repetition, "input_kind": data["kind"]}

    if args.model == "svm":
        feats = extract_features_batch(x)
        svm = train_svm(feats[tr], y[tr], SvmConfig(seed=args.seed))
        _record(result, "svm", svm.predict(feats[te]), y[te], accuracy(svm.predict(feats[tr]), y[tr]),
                svm.weights.size + svm.bias.size, args.n_classes)
        np.savez(out / "svm.npz", weights=svm.weights, bias=svm.bias, classes=svm.classes, mean=svm.mean, std=svm.std)
    elif args.model == "cnn3d":
        model = Cnn3d(Cnn3dConfig(input_shape=x.shape[1:], n_classes=args.n_classes), seed=args.seed)
        hist = train_classifier(model, x[tr], y[tr], train_cfg)
        _record(result, "cnn3d", predict(model, x[te]), y[te], hist.train_accuracy[-1] if hist.train_accuracy else 0,
                model.n_parameters(), args.n_classes)
        save_checkpoint(model, out / "model.ckpt", extra, kind="cnn3d")
    else:
        if data["kind"] == "images":
            if args.preset != "V3":
                raise CliError("MUAP image input needs --preset V3")
            cfg = preset("V3", x.shape[2] * 8, n_classes=args.n_classes)
            extra["image_scale"] = audit["image_scale"]
        else:
            if args.preset == "V3":
                raise CliError("--preset V3 expects MUAP image input")
            cfg = preset(args.preset, x.shape[2] * x.shape[3], x.shape[1], args.n_classes)
        if args.dropout:
            cfg = ModelConfig.from_dict({**cfg.to_dict(), "dropout": args.dropout})
        model = CTHGR(cfg, seed=args.seed)
        hist = train_classifier(model, x[tr], y[tr], train_cfg)
        _record(result, "ct-hgr", predict(model, x[te]), y[te], hist.train_accuracy[-1] if hist.train_accuracy else 0,
                model.n_parameters(), args.n_classes)
        result["cosine"] = positional_cosine_matrix(model).tolist()
        sha = save_checkpoint(model, out / "model.ckpt", extra)
        print(f"checkpoint {out / 'model.ckpt'} sha256 {sha}")
    path = _write_run(out, run_cfg, [result])
    acc = next(iter(result["accuracy"].values()))
    print(f"{path}: test accuracy {acc:.2f}% on repetition {args.test_repetition}")
    return EXIT_OK


# --- fusion --------------------------------------------------------------------


def _fusion_inputs(args):
    from .fusion import FusionError, load_backbone

    windows = _load_inputs(args.windows)
    images = _load_inputs(args.images)
    if windows["kind"] != "windows" or images["kind"] != "images":
        raise CliError("--windows takes a .emgw batch and --images a .muap file")
    if not np.array_equal(windows["starts"], images["starts"]):
        raise CliError("window batch and MUAP images are not aligned (different window starts)")
    macro, _ = load_backbone(args.macro)
    micro, micro_header = load_backbone(args.micro)
    scale = micro_header["extra"].get("image_scale")
    if scale is None:
        raise FusionError(f"{args.micro}: micro checkpoint lacks its image scale")
    img = np.clip(images["x"] / scale, 0.0, 1.0).astype(np.float32)
    return windows, img, macro, micro


def cmd_fuse_train(args) -> int:
    from .fusion import FusionConfig, predict_fusion, save_fusion, train_fusion
    from .training import predict

    windows, img, macro, micro = _fusion_inputs(args)
    x = windows["x"].astype(np.float32)
    y = windows["labels"] - 1
    tr, te = _split(windows["fold_key"], args.test_repetition)
    n_classes = macro.config.n_classes
    fcfg = FusionConfig(token_dims=(macro.config.d, micro.config.d), projection=args.projection,
                        hidden=tuple(args.hidden), n_classes=n_classes, dropout=args.dropout)
    train_cfg = _train_config(args, args.seed)
    model, hist = train_fusion(macro, micro, x[tr], img[tr], y[tr], train_cfg, fcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    macro_sha, micro_sha = sha256_file(args.macro), sha256_file(args.micro)
    save_fusion(model, out / "fusion.ckpt", macro_sha, micro_sha, {"trained_epochs": train_cfg.epochs})

    result = _job_result(windows["subject_id"], args.test_repetition, tr, te, {"test_windows_in_fit": 0})
    _record(result, "macro", predict(macro, x[te]), y[te], 0.0, macro.n_parameters(), n_classes)
    _record(result, "micro", predict(micro, img[te]), y[te], 0.0, micro.n_parameters(), n_classes)
    _record(result, "fused", predict_fusion(model, x[te], img[te]), y[te],
            hist.train_accuracy[-1] if hist.train_accuracy else 0.0,
            sum(p.size for p in model.head.parameters()), n_classes)
    run_cfg = {"command": "fuse train", "macro_checkpoint": macro_sha, "micro_checkpoint": micro_sha,
               "fusion": fcfg.to_dict(), "optimizer": train_cfg.to_dict(), "test_repetition": args.test_repetition,
               "seed": args.seed}
    path = _write_run(out, run_cfg, [result])
    print(f"{path}: " + ", ".join(f"{k} {v:.2f}%" for k, v in result["accuracy"].items()))
    return EXIT_OK


def cmd_fuse_eval(args) -> int:
    from .fusion import load_fusion, predict_fusion
    from .training import accuracy

    windows, img, _, _ = _fusion_inputs(args)
    model = load_fusion(args.fusion, args.macro, args.micro)
    idx = np.arange(len(windows["labels"]))
    if args.repetition is not None:
        idx = np.flatnonzero(windows["fold_key"] == args.repetition)
        if idx.size == 0:
            raise CliError(f"repetition {args.repetition} is absent from the input")
    pred = predict_fusion(model, windows["x"][idx].astype(np.float32), img[idx])
    print(f"fused accuracy {accuracy(pred, windows['labels'][idx] - 1):.2f}% on {idx.size} windows")
    return EXIT_OK


# --- experiments, models, statistics ---------------------------------------------


def cmd_run_experiment(args) -> int:
    from .evaluation.config import resolve
    from .evaluation.experiment import run_experiment

    raw = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = resolve(raw)
    report, path, skipped = run_experiment(cfg, out_dir=args.out, force=args.force, workers=args.workers)
    state = "unchanged (use --force to rerun)" if skipped else "written"
    print(f"{path}: {state}; config {report['config_hash'][:12]}")
    for name, res in report["results"].items():
        avg = res["average"]
        print(f"  {name:8s} {avg['accuracy_mean']:.2f}% (std over subjects {avg['std_over_subjects']:.2f})")
    return EXIT_OK


def cmd_count_params(args) -> int:
    from .model import REFERENCE_PARAM_COUNTS, count_parameters, preset

    cfg = preset(args.preset, args.channels, args.window, args.n_classes)
    n = count_parameters(cfg)
    ref = REFERENCE_PARAM_COUNTS.get((args.preset, args.channels, args.window)) if args.n_classes == 66 else None
    if ref is None:
        verdict = "no reference"
    elif ref == n:
        verdict = "match"
    else:
        verdict = f"mismatch (reference {ref:,})"
    print(f"{n:,} {verdict}")
    return EXIT_OK if ref is None or ref == n else EXIT_FAILED


def cmd_selftest(args) -> int:
    from .selftest import run_gradient_suite, run_oracle_suite

    results = list(run_gradient_suite(args.seed))
    if args.which == "all":
        results += run_oracle_suite(args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:24s} {r.max_rel_error:.3e} < {r.tolerance:g}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_FAILED


def _paired_values(path: str, which: str | None) -> tuple[list[str], list[float]]:
    from .evaluation.report import load_report

    report = load_report(path)
    which = which or report["paths"][0]
    if which not in report["results"]:
        raise CliError(f"{path}: no result path {which!r} (have {report['paths']})")
    keys, vals = [], []
    for row in report["results"][which]["folds"]:
        for sid, acc in sorted(row["per_subject"].items()):
            keys.append(f"{sid}/{row['fold']}")
            vals.append(acc)
    return keys, vals


def cmd_evaluate_compare(args) -> int:
    from .evaluation.stats import wilcoxon_signed_rank

    if args.values_a is not None or args.values_b is not None:
        if args.values_a is None or args.values_b is None:
            raise CliError("--values-a and --values-b go together")
        a, b = args.values_a, args.values_b
    else:
        if not (args.report_a and args.report_b):
            raise CliError("give two reports or --values-a/--values-b")
        ka, a = _paired_values(args.report_a, args.path_a)
        kb, b = _paired_values(args.report_b, args.path_b)
        if ka != kb:
            raise CliError("reports do not cover the same subject/fold pairs")
    if len(a) != len(b):
        raise CliError("paired samples differ in length")
    res = wilcoxon_signed_rank(a, b)
    print(f"W={res.statistic:g} (W+={res.w_plus:g}, W-={res.w_minus:g}) n={res.n} p={res.p_value:.6g} "
          f"[{res.method}] {res.annotation}")
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _add_train_options(p, epochs=20, batch_size=128, lr=1e-4) -> None:
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=batch_size)
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--weight-decay", type=float, default=1e-3)
    p.add_argument("--schedule", choices=["linear", "step", "constant"], default="linear")
    p.add_argument("--anneal-after", type=int, default=10, help="epochs before learning-rate annealing starts")
    p.add_argument("--test-repetition", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog="cthgr", description="HD-sEMG gesture recognition toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--log-file", help="also write the log to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="convert and validate recordings").add_subparsers(dest="action", required=True)
    p = ingest.add_parser("convert", parents=[common], help="convert a CSV or raw float32 dump")
    p.add_argument("signal")
    p.add_argument("--out", required=True)
    p.add_argument("--subject", required=True)
    p.add_argument("--n-channels", type=int)
    p.add_argument("--annotations")
    p.add_argument("--fs", type=float, default=2048.0)
    p.set_defaults(func=cmd_ingest_convert)
    p = ingest.add_parser("validate", parents=[common], help="check recordings or a manifest")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_ingest_validate)
    p = ingest.add_parser("synth", parents=[common], help="write seeded synthetic recordings and a manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--subjects", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.02)
    p.set_defaults(func=cmd_ingest_synth)

    p = sub.add_parser("preprocess", parents=[common], help="envelope, mu-law and window a recording")
    p.add_argument("recording")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--skip", type=int)
    p.add_argument("--channels", choices=["full", "half", "quarter"], default="full")
    p.add_argument("--mu", type=float, default=255.0)
    p.add_argument("--cutoff-hz", type=float, default=1.0)
    p.add_argument("--rectify", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--filter-mode", choices=["causal", "zero-phase"], default="causal")
    p.add_argument("--fit-repetitions", type=_csv_ints, help="repetitions used to fit the scale (default: all)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("decompose", parents=[common], help="MUAP peak-to-peak images per raw window")
    p.add_argument("recording")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--skip", type=int, default=256)
    p.add_argument("--channels", choices=["full", "half", "quarter"], default="full")
    p.add_argument("--max-sources", type=int, default=7)
    p.add_argument("--silhouette", type=float, default=0.92)
    p.add_argument("--extension-factor", type=int, default=8)
    p.add_argument("--max-components", type=int)
    p.add_argument("--aggregate", choices=["mean", "max"], default="mean")
    p.set_defaults(func=cmd_decompose)

    for name, models, help_text in (
        ("train", ["ct-hgr", "cnn3d", "svm"], "train on one repetition split"),
        ("baseline", ["svm", "cnn3d"], "train a baseline on one repetition split"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "baseline":
            p.add_argument("model", choices=models)
        else:
            p.add_argument("--model", choices=models, default="ct-hgr")
        p.add_argument("input", help=".emgw window batch or .muap image file")
        p.add_argument("--out", required=True)
        p.add_argument("--preset", choices=["V1", "V2", "V3"], default="V1")
        p.add_argument("--n-classes", type=int, default=66)
        p.add_argument("--dropout", type=float, default=0.0)
        _add_train_options(p)
        p.set_defaults(func=cmd_train)

    fuse = sub.add_parser("fuse", help="fused Macro/Micro model").add_subparsers(dest="action", required=True)
    for action in ("train", "eval"):
        p = fuse.add_parser(action, parents=[common])
        p.add_argument("--macro", required=True, help="trained V1 checkpoint")
        p.add_argument("--micro", required=True, help="trained V3 checkpoint")
        p.add_argument("--windows", required=True)
        p.add_argument("--images", required=True)
        if action == "train":
            p.add_argument("--out", required=True)
            p.add_argument("--projection", type=int, default=1024)
            p.add_argument("--hidden", type=_csv_ints, default=[512])
            p.add_argument("--dropout", type=float, default=0.2)
            _add_train_options(p, epochs=50, batch_size=64, lr=3e-4)
            p.set_defaults(func=cmd_fuse_train)
        else:
            p.add_argument("--fusion", required=True)
            p.add_argument("--repetition", type=int)
            p.set_defaults(func=cmd_fuse_eval)

    run = sub.add_parser("run", help="run a configured experiment").add_subparsers(dest="action", required=True)
    p = run.add_parser("experiment")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", help="output directory (default: <output_dir>/<name>-<hash>)")
    p.add_argument("--force", action="store_true", help="rerun even when a report for this config exists")
    p.add_argument("--workers", type=int, help="parallel fold jobs (default: $CTHGR_WORKERS or 1)")
    p.set_defaults(func=cmd_run_experiment)

    model = sub.add_parser("model", help="model utilities").add_subparsers(dest="action", required=True)
    p = model.add_parser("count-params", parents=[common])
    p.add_argument("--preset", choices=["V1", "V2", "V3"], default="V1")
    p.add_argument("--channels", type=int, default=128)
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--n-classes", type=int, default=66)
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("selftest", parents=[common], help="gradient and oracle self checks")
    p.add_argument("which", choices=["grad", "all"])
    p.set_defaults(func=cmd_selftest)

    ev = sub.add_parser("evaluate", help="statistics").add_subparsers(dest="action", required=True)
    p = ev.add_parser("compare", parents=[common], help="paired Wilcoxon signed-rank test")
    p.add_argument("report_a", nargs="?")
    p.add_argument("report_b", nargs="?")
    p.add_argument("--path-a")
    p.add_argument("--path-b")
    p.add_argument("--values-a", type=_csv_floats)
    p.add_argument("--values-b", type=_csv_floats)
    p.set_defaults(func=cmd_evaluate_compare)
    return parser


def _setup_logging(verbose: int, log_file: str | None) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s", handlers=handlers,
                        force=True)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose, args.log_file)
    try:
        return args.func(args)
    except (CliError, ConfigError, ContainerError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

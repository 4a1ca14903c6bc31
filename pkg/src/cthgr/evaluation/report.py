"""Run reports: deterministic JSON plus CSV exports for external plotting.

The report JSON carries no timestamps or durations; wall-clock figures go to a
separate ``timing.json`` so that identical runs produce byte-identical reports.
"""

from __future__ import annotations

import csv
import json
from itertools import combinations
from pathlib import Path

import numpy as np

from .config import canonical_json, config_hash
from .stats import aggregate_confusion, iqr_stats, wilcoxon_signed_rank

REPORT_SCHEMA = 1


def _std(values) -> float:
    return float(np.std(np.asarray(values, dtype=np.float64))) if len(values) else 0.0


def summarize_path(results: list[dict], path: str) -> dict:
    subjects = sorted({r["subject_id"] for r in results})
    folds = sorted({r["fold"] for r in results})
    acc = {(r["subject_id"], r["fold"]): r["accuracy"][path] for r in results}
    fold_rows = []
    for f in folds:
        per_subject = {s: acc[(s, f)] for s in subjects if (s, f) in acc}
        vals = list(per_subject.values())
        test_rep = next(r["test_repetition"] for r in results if r["fold"] == f)
        fold_rows.append({
            "fold": f,
            "test_repetition": test_rep,
            "accuracy_mean": float(np.mean(vals)),
            "accuracy_std": _std(vals),
            "per_subject": per_subject,
        })
    subject_means = {s: float(np.mean([acc[(s, f)] for f in folds if (s, f) in acc])) for s in subjects}
    matrices = []
    for s in subjects:
        matrices.append(np.sum([np.asarray(r["confusion"][path]) for r in results if r["subject_id"] == s], axis=0))
    conf, empty_rows = aggregate_confusion(matrices)
    return {
        "folds": fold_rows,
        "average": {
            "accuracy_mean": float(np.mean([row["accuracy_mean"] for row in fold_rows])),
            "std_over_subjects": _std(list(subject_means.values())),
            "std_over_subject_folds": _std(list(acc.values())),
        },
        "per_subject_mean": subject_means,
        "boxplot": iqr_stats(list(subject_means.values())).to_dict(),
        "train_accuracy_mean": float(np.mean([r["train_accuracy"][path] for r in results])),
        "n_parameters": results[0]["n_parameters"][path],
        "confusion": {"matrix": conf.tolist(), "zero_support_rows": empty_rows.tolist()},
    }


def compare_paths(results: list[dict], paths: list[str]) -> list[dict]:
    """Paired Wilcoxon tests between paths over (subject, fold) accuracies."""
    out = []
    for a, b in combinations(paths, 2):
        xa = [r["accuracy"][a] for r in results]
        xb = [r["accuracy"][b] for r in results]
        entry = {"a": a, "b": b, "n_pairs": len(xa)}
        try:
            w = wilcoxon_signed_rank(xa, xb)
            entry.update(statistic=w.statistic, p_value=w.p_value, method=w.method, annotation=w.annotation)
        except ValueError as exc:
            entry["error"] = str(exc)
        out.append(entry)
    return out


def build_report(resolved_cfg: dict, results: list[dict]) -> dict:
    if not results:
        raise ValueError("no fold results to report")
    paths = list(results[0]["accuracy"])
    return {
        "schema": REPORT_SCHEMA,
        "config_hash": config_hash(resolved_cfg),
        "config": resolved_cfg,
        "subjects": sorted({r["subject_id"] for r in results}),
        "paths": paths,
        "results": {p: summarize_path(results, p) for p in paths},
        "comparisons": compare_paths(results, paths),
        "audit": {
            "normalization_fit": "train-only",
            "test_statistics_used": any(r["audit"]["test_windows_in_fit"] for r in results),
            "jobs": [{"subject_id": r["subject_id"], "fold": r["fold"], **r["audit"]} for r in results],
        },
        "positional_cosine": results[0]["cosine"],
    }


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_report(report: dict, out_dir: str | Path, timing: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(report))
    (out / "config.resolved.json").write_text(json.dumps(report["config"], sort_keys=True, indent=1) + "\n")
    if timing is not None:
        (out / "timing.json").write_text(json.dumps(timing, sort_keys=True, indent=1) + "\n")
    export_csv(report, out)
    return out / "report.json"


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def export_csv(report: dict, out_dir: str | Path) -> None:
    out = Path(out_dir)
    with open(out / "folds.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "fold", "test_repetition", "subject_id", "accuracy"])
        for path, res in report["results"].items():
            for row in res["folds"]:
                for sid, acc in row["per_subject"].items():
                    w.writerow([path, row["fold"], row["test_repetition"], sid, repr(acc)])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "row", "accuracy_mean", "accuracy_std", "std_over_subject_folds"])
        for path, res in report["results"].items():
            for row in res["folds"]:
                w.writerow([path, f"fold{row['fold']}", repr(row["accuracy_mean"]), repr(row["accuracy_std"]), ""])
            avg = res["average"]
            w.writerow([path, "average", repr(avg["accuracy_mean"]), repr(avg["std_over_subjects"]),
                        repr(avg["std_over_subject_folds"])])
    with open(out / "boxplot.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "median", "q1", "q3", "whisker_low", "whisker_high", "outliers"])
        for path, res in report["results"].items():
            b = res["boxplot"]
            w.writerow([path, b["median"], b["q1"], b["q3"], b["whisker_low"], b["whisker_high"],
                        " ".join(map(repr, b["outliers"]))])
    for path, res in report["results"].items():
        np.savetxt(out / f"confusion_{path}.csv", np.asarray(res["confusion"]["matrix"]), delimiter=",", fmt="%.17g")
    if report.get("positional_cosine") is not None:
        np.savetxt(out / "positional_cosine.csv", np.asarray(report["positional_cosine"]), delimiter=",", fmt="%.17g")


def report_is_current(out_dir: str | Path, resolved_cfg: dict) -> bool:
    """True when ``out_dir`` already holds a report for exactly this resolved configuration."""
    path = Path(out_dir) / "report.json"
    if not path.exists():
        return False
    try:
        return load_report(path).get("config_hash") == config_hash(resolved_cfg)
    except (ValueError, OSError):
        return False


__all__ = [
    "REPORT_SCHEMA",
    "build_report",
    "canonical_json",
    "export_csv",
    "load_report",
    "report_is_current",
    "report_json",
    "summarize_path",
    "write_report",
]

"""One-call experiment runner used by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
import time
from pathlib import Path

from .config import config_hash, resolve
from .protocol import run_protocol
from .report import build_report, load_report, report_is_current, write_report

log = logging.getLogger(__name__)


def output_dir_for(cfg: dict) -> Path:
    return Path(cfg["output_dir"]) / f"{cfg['name']}-{config_hash(cfg)[:12]}"


def run_experiment(config: dict, out_dir: str | Path | None = None, force: bool = False,
                   workers: int | None = None) -> tuple[dict, Path | None, bool]:
    """Resolve, run and write an experiment.

    Returns ``(report, report_path, skipped)``. An existing report with the same
    resolved-config hash is reused unless ``force`` is set.
    """
    cfg = resolve(config)
    target = output_dir_for(cfg) if out_dir is None else Path(out_dir)
    if not force and report_is_current(target, cfg):
        log.info("report for config %s already present in %s; skipping", config_hash(cfg)[:12], target)
        return load_report(target / "report.json"), target / "report.json", True
    t0 = time.perf_counter()
    results = run_protocol(cfg, workers=workers)
    report = build_report(cfg, results)
    timing = {
        "config_hash": report["config_hash"],
        "total_seconds": time.perf_counter() - t0,
        "jobs": [{"subject_id": r["subject_id"], "fold": r["fold"], "seconds": r["_seconds"]} for r in results],
    }
    path = write_report(report, target, timing)
    return report, path, False

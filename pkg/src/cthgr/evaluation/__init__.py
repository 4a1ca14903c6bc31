from .config import CONFIG_VERSION, ConfigError, config_hash, load_config, resolve
from .experiment import run_experiment
from .folds import Fold, FoldPlan, make_folds
from .protocol import run_fold, run_protocol
from .report import build_report, load_report, report_json, write_report
from .stats import (
    BoxStats,
    WilcoxonResult,
    aggregate_confusion,
    annotate,
    confusion_matrix,
    iqr_stats,
    wilcoxon_signed_rank,
)

__all__ = [
    "BoxStats",
    "CONFIG_VERSION",
    "ConfigError",
    "Fold",
    "FoldPlan",
    "WilcoxonResult",
    "aggregate_confusion",
    "annotate",
    "build_report",
    "config_hash",
    "confusion_matrix",
    "iqr_stats",
    "load_config",
    "load_report",
    "make_folds",
    "report_json",
    "resolve",
    "run_experiment",
    "run_fold",
    "run_protocol",
    "wilcoxon_signed_rank",
    "write_report",
]

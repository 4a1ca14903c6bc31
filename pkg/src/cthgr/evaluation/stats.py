"""Wilcoxon signed-rank test, box-plot statistics and confusion-matrix aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

EXACT_MAX_N = 20

# Upper p bound -> annotation, checked in order.
ANNOTATION_BINS = ((1e-4, "****"), (1e-3, "***"), (1e-2, "**"), (5e-2, "*"))


def annotate(p: float) -> str:
    """ns: 0.05 < p <= 1; *: 0.01 < p <= 0.05; **: 1e-3 < p <= 0.01; ***: 1e-4 < p <= 1e-3; ****: p <= 1e-4."""
    for bound, mark in ANNOTATION_BINS:
        if p <= bound:
            return mark
    return "ns"


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    w_plus: float
    w_minus: float
    p_value: float
    n: int
    method: str
    annotation: str


def signed_ranks(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |a - b| over non-zero differences, and the difference signs."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    d = d[d != 0]
    return rankdata(np.abs(d)), np.sign(d)


def exact_lower_tail_count(ranks: np.ndarray, t: float) -> int:
    """Number of the 2^n sign assignments whose positive rank sum is <= t.

    Ranks may be half-integers (ties); the count runs over doubled ranks so the
    subset-sum table stays integral.
    """
    r2 = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in r2:
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    return int(sum(counts[: int(math.floor(2 * t + 1e-9)) + 1]))


def wilcoxon_signed_rank(a, b, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    ranks, signs = signed_ranks(a, b)
    n = ranks.size
    if n == 0:
        raise ValueError("all paired differences are zero")
    w_plus = float(ranks[signs > 0].sum())
    w_minus = float(ranks[signs < 0].sum())
    t = min(w_plus, w_minus)
    if n <= exact_max_n:
        count = exact_lower_tail_count(ranks, t)
        p = min(1.0, 2.0 * count / 2**n)
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
        z = (t - mean) / math.sqrt(var) if var > 0 else 0.0
        p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
        method = "normal"
    return WilcoxonResult(t, w_plus, w_minus, p, n, method, annotate(p))


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "median": self.median,
            "q1": self.q1,
            "q3": self.q3,
            "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high,
            "outliers": list(self.outliers),
        }


def iqr_stats(values, method: str = "linear") -> BoxStats:
    """Tukey box-plot statistics. ``method`` is a ``numpy.quantile`` method; ``linear`` is type 7."""
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("iqr_stats needs at least one value")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method=method)
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo) & (x <= hi)]
    outliers = tuple(float(v) for v in x[(x < lo) | (x > hi)])
    return BoxStats(float(med), float(q1), float(q3), float(inside.min()), float(inside.max()), outliers)


def confusion_matrix(truth, pred, n_classes: int) -> np.ndarray:
    """Counts ``[n_classes x n_classes]``; rows are true class indices."""
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (np.asarray(truth, np.int64), np.asarray(pred, np.int64)), 1)
    return m


def aggregate_confusion(matrices) -> tuple[np.ndarray, np.ndarray]:
    """Sum per-subject matrices and normalise rows.

    Returns the row-normalised matrix and the indices of rows with no support
    (left as zeros).
    """
    mats = [np.asarray(m, dtype=np.float64) for m in matrices]
    if not mats:
        raise ValueError("no confusion matrices to aggregate")
    shape = mats[0].shape
    if any(m.shape != shape for m in mats) or len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError("confusion matrices must be square and share one shape")
    total = np.sum(mats, axis=0)
    support = total.sum(axis=1)
    out = np.zeros_like(total)
    nz = support > 0
    out[nz] = total[nz] / support[nz, None]
    return out, np.flatnonzero(~nz)

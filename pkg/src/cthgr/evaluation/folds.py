"""Train/test splits: leave-one-repetition-out CV and a stratified shuffled split."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

MODES = ("repetition-cv", "shuffled")


@dataclass(frozen=True)
class FoldPlan:
    mode: str = "repetition-cv"
    n_repetitions: int = 5
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown fold mode {self.mode!r}")
        if self.n_repetitions < 1:
            raise ValueError("n_repetitions must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Fold:
    index: int
    train: np.ndarray
    test: np.ndarray
    test_repetition: int | None = None


def make_folds(fold_key: np.ndarray, labels: np.ndarray, plan: FoldPlan) -> list[Fold]:
    fold_key = np.asarray(fold_key)
    labels = np.asarray(labels)
    if fold_key.shape != labels.shape:
        raise ValueError("fold_key and labels differ in length")
    if plan.mode == "repetition-cv":
        present = set(np.unique(fold_key).tolist())
        folds = []
        for r in range(1, plan.n_repetitions + 1):
            if r not in present:
                raise ValueError(f"repetition {r} is absent from the data")
            test = np.flatnonzero(fold_key == r)
            train = np.flatnonzero(fold_key != r)
            folds.append(Fold(index=r, train=train, test=test, test_repetition=r))
        return folds

    rng = np.random.default_rng(plan.seed)
    test_parts = []
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        n_test = int(round(plan.test_fraction * members.size))
        test_parts.append(members[:n_test])
    test = np.sort(np.concatenate(test_parts)) if test_parts else np.zeros(0, np.int64)
    mask = np.ones(labels.size, bool)
    mask[test] = False
    return [Fold(index=1, train=np.flatnonzero(mask), test=test)]

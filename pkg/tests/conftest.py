import numpy as np
import pytest

from cthgr.synthetic import SynthSpec, synthesize_dataset

# Lines appended by test_acceptance.py; echoed in the terminal summary so they
# survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_recording():
    """128-channel, 4-class, 5-repetition recording with 0.25 s gestures."""
    return synthesize_dataset(SynthSpec(n_classes=4, gesture_s=0.25, rest_s=0.05, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_experiment(**over) -> dict:
    """Fast experiment config used by eval and CLI tests."""
    cfg = {
        "version": 1,
        "name": "tiny",
        "seed": 0,
        "dataset": {"synthetic": {"n_classes": 3, "gesture_s": 0.3, "rest_s": 0.05, "seed": 11}},
        "channels": "quarter",
        "window": {"length": 64, "skip": 64},
        "model": {"kind": "ct-hgr", "preset": "V1", "overrides": {"n_classes": 3}},
        "optimizer": {"epochs": 2, "lr": 1e-3, "batch_size": 32},
    }
    for k, v in over.items():
        cfg[k] = v
    return cfg

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from cthgr.evaluation import (
    ConfigError,
    FoldPlan,
    aggregate_confusion,
    annotate,
    config_hash,
    confusion_matrix,
    iqr_stats,
    load_config,
    make_folds,
    resolve,
    run_experiment,
    wilcoxon_signed_rank,
)
from cthgr.evaluation.protocol import job_seed, prepare_subject, load_recordings, run_protocol
from cthgr.evaluation.report import build_report, report_json

from conftest import tiny_experiment
from oracles import wilcoxon_brute_force

# --- folds ----------------------------------------------------------------------


def test_repetition_folds_partition():
    key = np.repeat([1, 2, 3, 4, 5], 7)
    labels = np.tile(np.arange(7), 5)
    folds = make_folds(key, labels, FoldPlan())
    assert [f.index for f in folds] == [1, 2, 3, 4, 5]
    assert not np.any(key[folds[0].train] == 1)
    tests = np.concatenate([f.test for f in folds])
    np.testing.assert_array_equal(np.sort(tests), np.arange(key.size))
    for f in folds:
        assert np.intersect1d(f.train, f.test).size == 0
        assert f.train.size + f.test.size == key.size


@settings(max_examples=40)
@given(st.lists(st.integers(1, 5), min_size=5, max_size=80))
def test_partition_property(keys):
    key = np.array(keys + [1, 2, 3, 4, 5])
    folds = make_folds(key, np.zeros_like(key), FoldPlan())
    seen = np.concatenate([f.test for f in folds])
    assert np.array_equal(np.sort(seen), np.arange(key.size))


def test_missing_repetition():
    with pytest.raises(ValueError, match="absent"):
        make_folds(np.array([1, 2, 3, 4]), np.zeros(4), FoldPlan())


def test_shuffled_split_is_seeded_and_stratified():
    labels = np.repeat([1, 2, 3], [50, 30, 20])
    key = np.ones(100, int)
    plan = FoldPlan(mode="shuffled", seed=4)
    a, b = make_folds(key, labels, plan), make_folds(key, labels, plan)
    np.testing.assert_array_equal(a[0].test, b[0].test)
    assert len(a) == 1 and a[0].test.size == 20
    assert [int(np.sum(labels[a[0].test] == c)) for c in (1, 2, 3)] == [10, 6, 4]
    other = make_folds(key, labels, FoldPlan(mode="shuffled", seed=5))
    assert not np.array_equal(other[0].test, a[0].test)


# --- Wilcoxon -------------------------------------------------------------------


def test_wilcoxon_n3_all_positive():
    r = wilcoxon_signed_rank([2, 3, 4], [1, 1, 1])
    assert r.w_minus == 0 and r.p_value == 0.25 and r.annotation == "ns" and r.method == "exact"


def test_wilcoxon_n19_all_positive():
    r = wilcoxon_signed_rank(np.arange(1, 20) + 0.5, np.zeros(19))
    assert r.p_value == 2 / 2**19
    assert r.p_value == pytest.approx(3.81e-6, abs=1e-8) and r.annotation == "****"


def test_wilcoxon_all_zero_differences():
    with pytest.raises(ValueError, match="zero"):
        wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0])


def test_wilcoxon_length_mismatch():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1.0, 2.0], [1.0])


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31 - 1), st.booleans())
def test_exact_wilcoxon_equals_enumeration(n, seed, ties):
    rng = np.random.default_rng(seed)
    a = rng.integers(-4, 5, n).astype(float) if ties else rng.standard_normal(n)
    b = np.zeros(n)
    if not np.any(a != b):
        a[0] = 1.0
    r = wilcoxon_signed_rank(a, b)
    t, p = wilcoxon_brute_force(a, b)
    assert r.statistic == t and r.p_value == p


def test_exact_p_agrees_with_scipy_without_ties():
    rng = np.random.default_rng(3)
    for n in (5, 9, 14, 20):
        a, b = rng.standard_normal(n), rng.standard_normal(n)
        ref = sps.wilcoxon(a, b, method="exact").pvalue
        assert wilcoxon_signed_rank(a, b).p_value == pytest.approx(ref, rel=1e-12)


def test_normal_approximation_matches_scipy():
    rng = np.random.default_rng(4)
    a = np.round(rng.normal(0.3, 1, 40), 1)
    b = np.zeros(40)
    r = wilcoxon_signed_rank(a, b)
    ref = sps.wilcoxon(a, b, method="approx", correction=False, zero_method="wilcox")
    assert r.method == "normal" and r.p_value == pytest.approx(ref.pvalue, rel=1e-9)


@pytest.mark.parametrize(
    "p,mark",
    [(1.0, "ns"), (0.0500001, "ns"), (0.05, "*"), (0.0100001, "*"), (0.01, "**"), (0.0010001, "**"),
     (1e-3, "***"), (1.00001e-4, "***"), (1e-4, "****"), (0.0, "****")],
)
def test_annotation_bins(p, mark):
    assert annotate(p) == mark


# --- IQR and confusion ------------------------------------------------------------


def test_iqr_one_to_nine():
    b = iqr_stats(range(1, 10))
    assert (b.median, b.q1, b.q3) == (5.0, 3.0, 7.0)  # type 7
    w = iqr_stats(range(1, 10), method="weibull")
    assert (w.median, w.q1, w.q3) == (5.0, 2.5, 7.5)
    assert b.whisker_low == 1 and b.whisker_high == 9 and b.outliers == ()


def test_iqr_single_and_outliers():
    b = iqr_stats([42.0])
    assert b.median == b.q1 == b.q3 == b.whisker_low == b.whisker_high == 42.0
    c = iqr_stats([10, 11, 12, 13, 14, 100])
    assert c.outliers == (100.0,) and c.whisker_high == 14


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=20))
def test_iqr_symmetric_median_is_mean(half):
    vals = np.array(half + [-v for v in half])
    assert iqr_stats(vals).median == pytest.approx(np.mean(vals), abs=1e-9)


def test_confusion_identity():
    m = confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2], 4)
    agg, empty = aggregate_confusion([m])
    np.testing.assert_array_equal(agg[:3, :3], np.eye(3))
    np.testing.assert_array_equal(empty, [3])


def test_confusion_blend_of_complementary_subjects():
    a = np.array([[3, 1], [0, 4]])
    b = np.array([[4, 0], [2, 2]])
    agg, _ = aggregate_confusion([a, b])
    np.testing.assert_allclose(agg, [[7 / 8, 1 / 8], [2 / 8, 6 / 8]])


def test_confusion_shape_mismatch():
    with pytest.raises(ValueError):
        aggregate_confusion([np.eye(2), np.eye(3)])


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.integers(2, 8))
def test_confusion_rows_sum_to_one(seed, k):
    rng = np.random.default_rng(seed)
    mats = [confusion_matrix(rng.integers(0, k, 30), rng.integers(0, k, 30), k) for _ in range(3)]
    agg, empty = aggregate_confusion(mats)
    rows = np.setdiff1d(np.arange(k), empty)
    assert np.max(np.abs(agg[rows].sum(axis=1) - 1)) <= 1e-9


# --- configuration ----------------------------------------------------------------


def test_resolve_materialises_defaults():
    cfg = resolve(tiny_experiment())
    assert cfg["window"] == {"length": 64, "skip": 64}
    assert cfg["optimizer"]["weight_decay"] == 1e-3 and cfg["optimizer"]["anneal_after"] == 10
    assert cfg["preprocessing"]["mu"] == 255.0
    assert resolve(cfg) == cfg


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        resolve(tiny_experiment(optimiser={}))
    bad = tiny_experiment()
    bad["optimizer"]["momentum"] = 0.9
    with pytest.raises(ConfigError, match="optimizer"):
        resolve(bad)


def test_version_and_source_checks(tmp_path):
    with pytest.raises(ConfigError, match="version"):
        resolve({**tiny_experiment(), "version": 2})
    with pytest.raises(ConfigError, match="exactly one"):
        resolve(tiny_experiment(dataset={"synthetic": None}))
    (tmp_path / "c.json").write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(tmp_path / "c.json")


def test_shape_errors_surface_at_resolve():
    with pytest.raises(ConfigError, match="underflow"):
        resolve(tiny_experiment(model={"kind": "cnn3d", "overrides": {"n_classes": 3}}))
    with pytest.raises(ConfigError, match="model"):
        resolve(tiny_experiment(window={"length": 12}))


def test_config_hash_tracks_content():
    a = resolve(tiny_experiment())
    b = resolve(tiny_experiment(seed=1))
    assert config_hash(a) != config_hash(b) and config_hash(a) == config_hash(resolve(tiny_experiment()))


# --- protocol and reports -----------------------------------------------------------


def test_job_seeds_are_distinct():
    seeds = {job_seed(0, s, f) for s in range(3) for f in range(1, 6)}
    assert len(seeds) == 15


def test_report_schema_and_audit(tmp_path):
    report, path, skipped = run_experiment(tiny_experiment(), out_dir=tmp_path)
    assert not skipped and path.exists()
    res = report["results"]["ct-hgr"]
    assert len(res["folds"]) == 5 and [f["test_repetition"] for f in res["folds"]] == [1, 2, 3, 4, 5]
    assert 0 <= res["average"]["accuracy_mean"] <= 100
    assert set(res["average"]) == {"accuracy_mean", "std_over_subjects", "std_over_subject_folds"}
    assert report["audit"]["test_statistics_used"] is False
    assert all(j["test_windows_in_fit"] == 0 for j in report["audit"]["jobs"])
    conf = np.array(res["confusion"]["matrix"])
    assert conf.shape == (3, 3) and np.allclose(conf.sum(axis=1), 1, atol=1e-9)
    cos = np.array(report["positional_cosine"])
    assert np.allclose(np.diag(cos), 1, atol=1e-12) and np.allclose(cos, cos.T, atol=1e-12)
    for name in ("config.resolved.json", "timing.json", "folds.csv", "summary.csv", "boxplot.csv",
                 "confusion_ct-hgr.csv", "positional_cosine.csv"):
        assert (tmp_path / name).exists(), name
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[-1][1] == "average" and len(rows) == 7
    assert "seconds" not in (tmp_path / "report.json").read_text()


def test_report_json_round_trip(tmp_path):
    report, path, _ = run_experiment(tiny_experiment(), out_dir=tmp_path)
    loaded = json.loads(path.read_text())
    assert loaded == report
    assert report_json(loaded) == path.read_text()


def test_rerun_is_byte_identical_and_skips(tmp_path):
    cfg = tiny_experiment(model={"kind": "svm", "overrides": {"n_classes": 3}})
    _, p1, _ = run_experiment(cfg, out_dir=tmp_path / "a")
    _, p2, _ = run_experiment(cfg, out_dir=tmp_path / "b")
    assert p1.read_bytes() == p2.read_bytes()
    _, _, skipped = run_experiment(cfg, out_dir=tmp_path / "a")
    assert skipped
    _, _, skipped = run_experiment(cfg, out_dir=tmp_path / "a", force=True)
    assert not skipped


def test_parallel_matches_serial():
    cfg = resolve(tiny_experiment())
    subjects = [prepare_subject(r, cfg) for r in load_recordings(cfg)]
    serial = report_json(build_report(cfg, run_protocol(cfg, subjects, workers=1)))
    parallel = report_json(build_report(cfg, run_protocol(cfg, subjects, workers=2)))
    assert serial == parallel


def test_two_subjects_and_comparisons(tmp_path):
    cfg = tiny_experiment(dataset={"synthetic": {"n_classes": 3, "gesture_s": 0.3, "rest_s": 0.05, "seed": 11},
                                   "n_subjects": 2},
                          model={"kind": "fusion", "overrides": {"n_classes": 3}},
                          fusion={"micro_optimizer": {"epochs": 2, "lr": 1e-3},
                                  "head_optimizer": {"epochs": 2, "lr": 1e-3},
                                  "projection": 32, "hidden": [16], "decomposition": {"extension_factor": 2}})
    report, _, _ = run_experiment(cfg, out_dir=tmp_path)
    assert report["subjects"] == ["synth01", "synth02"]
    assert report["paths"] == ["macro", "micro", "fused"]
    fold = report["results"]["macro"]["folds"][0]
    assert set(fold["per_subject"]) == {"synth01", "synth02"}
    assert fold["accuracy_std"] == pytest.approx(np.std(list(fold["per_subject"].values())))
    pairs = {(c["a"], c["b"]) for c in report["comparisons"]}
    assert pairs == {("macro", "micro"), ("macro", "fused"), ("micro", "fused")}
    for c in report["comparisons"]:
        assert c["n_pairs"] == 10
        assert "annotation" in c or "error" in c
    assert report["audit"]["jobs"][0]["image_scale_fit"] == "train"


def test_empty_training_fold_is_an_error():
    from cthgr.evaluation.folds import Fold
    from cthgr.evaluation.protocol import run_fold

    cfg = resolve(tiny_experiment())
    subject = prepare_subject(load_recordings(cfg)[0], cfg)
    with pytest.raises(ValueError, match="empty training"):
        run_fold(cfg, subject, Fold(1, np.zeros(0, np.int64), np.arange(3)), 0)


def test_std_conventions():
    from cthgr.evaluation.report import summarize_path

    results = []
    for s, accs in (("a", [80.0, 90.0]), ("b", [70.0, 100.0])):
        for f, acc in zip((1, 2), accs):
            results.append({"subject_id": s, "fold": f, "test_repetition": f, "accuracy": {"m": acc},
                            "train_accuracy": {"m": 100.0}, "confusion": {"m": [[1, 0], [0, 1]]},
                            "n_parameters": {"m": 5}})
    out = summarize_path(results, "m")
    assert out["average"]["accuracy_mean"] == 85.0
    assert out["average"]["std_over_subjects"] == 0.0
    assert out["average"]["std_over_subject_folds"] == pytest.approx(math.sqrt(125.0))
    assert out["folds"][0]["accuracy_std"] == 5.0

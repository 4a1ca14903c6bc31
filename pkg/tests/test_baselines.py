import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cthgr.autodiff import grad_check, softmax
from cthgr.baselines import (
    Cnn3d,
    Cnn3dConfig,
    SvmConfig,
    extract_features,
    extract_features_batch,
    train_svm,
)
from cthgr.baselines.cnn3d import REFERENCE_CNN3D_COUNTS, count_parameters
from cthgr.baselines.features import rms, slope_sign_changes, waveform_length, zero_crossings
from cthgr.baselines.svm import hinge_objective
from cthgr.dsp import PreprocessConfig, WindowSpec, preprocess_to_batch
from cthgr.ingest import select_channels
from cthgr.selftest import model_case, tiny_cnn3d
from cthgr.synthetic import SynthSpec, synthesize_dataset

from oracles import svm_qp_one_vs_rest


def test_feature_examples():
    x = np.array([1.0, -1.0, 1.0, -1.0])
    assert zero_crossings(x) == 3
    assert waveform_length(x) == 6
    assert slope_sign_changes(np.array([0.0, 1.0, 0.0, 1.0])) == 2
    assert rms(np.array([3.0, 4.0])) == pytest.approx(math.sqrt(12.5))
    assert rms(np.array([3.0, 4.0])) == pytest.approx(3.53553, abs=1e-5)


def test_feature_layout():
    w = np.column_stack([[1.0, -1.0, 1.0, -1.0], [0.0, 1.0, 0.0, 1.0]])
    f = extract_features(w)
    np.testing.assert_allclose(f[:4], [1.0, 3, 2, 6])
    np.testing.assert_allclose(f[4:], [math.sqrt(0.5), 0, 2, 3])
    batch = extract_features_batch(np.stack([w, 2 * w]))
    np.testing.assert_allclose(batch[0], f)


def test_short_window_rejected():
    with pytest.raises(ValueError):
        extract_features(np.zeros((2, 3)))


def test_deadband():
    x = np.array([0.1, -0.1, 0.1])
    assert zero_crossings(x) == 2
    assert zero_crossings(x, deadband=0.5) == 0


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1), st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
def test_shift_behaviour(seed, c):
    x = np.random.default_rng(seed).standard_normal((20, 3))
    f, g = extract_features(x).reshape(3, 4), extract_features(x + c).reshape(3, 4)
    np.testing.assert_allclose(g[:, 3], f[:, 3], rtol=1e-12)  # WL
    np.testing.assert_array_equal(g[:, 2], f[:, 2])  # SSC
    assert not np.allclose(g[:, 0], f[:, 0])  # RMS moves with the offset


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.integers(3, 40))
def test_feature_ranges(seed, w):
    x = np.random.default_rng(seed).standard_normal((w, 2))
    f = extract_features(x).reshape(2, 4)
    assert np.all(f[:, 0] >= 0) and np.all(f[:, 3] >= 0)
    assert np.all(f[:, 1] <= w - 1) and np.all(f[:, 2] <= w - 2)


def test_svm_separable_toy():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(-3, 0.5, (30, 2)), rng.normal(3, 0.5, (30, 2))])
    y = np.repeat([4, 9], 30)
    svm = train_svm(x, y)
    assert np.array_equal(svm.predict(x), y)
    assert set(svm.classes) == {4, 9}


def test_svm_contradictory_labels():
    x = np.repeat(np.random.default_rng(1).standard_normal((20, 3)), 2, axis=0)
    y = np.tile([0, 1], 20)
    svm = train_svm(x, y, SvmConfig(epochs=10))
    assert np.mean(svm.predict(x) == y) <= 0.5


def test_svm_needs_two_classes():
    with pytest.raises(ValueError):
        train_svm(np.zeros((4, 2)), np.zeros(4))


def test_svm_matches_qp_oracle():
    rec = select_channels(synthesize_dataset(SynthSpec(n_classes=4, gesture_s=0.3, noise_level=0.3, seed=21)),
                          "quarter")
    batch, _ = preprocess_to_batch(rec, PreprocessConfig(), WindowSpec(64, 64))
    feats = extract_features_batch(batch.samples)
    train, test = batch.fold_key != 5, batch.fold_key == 5
    assert feats.shape[0] <= 200
    lam = 1e-2
    cfg = SvmConfig(lam=lam, epochs=400, seed=0)
    svm = train_svm(feats[train], batch.labels[train], cfg)
    W, b = svm_qp_one_vs_rest(svm.standardize(feats[train]), batch.labels[train], svm.classes, lam)

    def acc(weights, bias, idx):
        pred = svm.classes[np.argmax(svm.standardize(feats[idx]) @ weights + bias, axis=1)]
        return 100 * np.mean(pred == batch.labels[idx])

    for idx in (train, test):
        assert abs(acc(svm.weights, svm.bias, idx) - acc(W, b, idx)) <= 2.0
    # the SGD solution is near the QP optimum of the same objective
    qp = type(svm)(W, b, svm.classes, svm.mean, svm.std)
    obj_sgd = hinge_objective(svm, feats[train], batch.labels[train], lam)
    obj_qp = hinge_objective(qp, feats[train], batch.labels[train], lam)
    assert obj_qp <= obj_sgd + 1e-6 and obj_sgd <= 1.5 * obj_qp + 1e-3


def test_cnn_shape_chain():
    cfg = Cnn3dConfig(input_shape=(64, 8, 8))
    assert cfg.stage_shapes() == [(60, 6, 6), (30, 3, 3), (26, 1, 1), (13, 1, 1)]
    assert cfg.flat_dim == 416
    model = Cnn3d(cfg)
    assert model.forward(np.zeros((2, 64, 8, 8))).shape == (2, 66)


def test_cnn_count_is_stable_and_reported():
    cfg = Cnn3dConfig(input_shape=(64, 8, 8))
    assert count_parameters(cfg) == Cnn3d(cfg, seed=1).n_parameters() == Cnn3d(cfg, seed=2).n_parameters()
    assert count_parameters(cfg) == 171_970
    assert set(REFERENCE_CNN3D_COUNTS) == {64, 128, 256}


def test_cnn_underflow():
    with pytest.raises(ValueError, match="underflow"):
        Cnn3dConfig(input_shape=(8, 4, 4))


def test_cnn_zero_weights_uniform_output():
    cfg = Cnn3dConfig(input_shape=(64, 8, 8))
    params = {k: np.zeros(v.shape) for k, v in Cnn3d(cfg).params.items()}
    logits = Cnn3d(cfg, params).forward(np.random.default_rng(0).standard_normal((3, 64, 8, 8)))
    np.testing.assert_allclose(softmax(logits).data, 1 / 66, atol=1e-7)


def test_cnn_gradient_check():
    model = tiny_cnn3d(0)
    x = np.random.default_rng(0).standard_normal((3, 12, 5, 5))
    f, params = model_case(model, x, np.array([0, 1, 2]))
    assert grad_check(f, params, tolerance=1e-4).passed

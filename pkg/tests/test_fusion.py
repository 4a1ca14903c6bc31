import numpy as np
import pytest

from cthgr.fusion import (
    FusionConfig,
    FusionError,
    FusionHead,
    FusionModel,
    fuse_forward,
    load_backbone,
    load_fusion,
    predict_fusion,
    save_fusion,
    train_fusion,
)
from cthgr.model import CTHGR, ModelConfig, PatchSpec, params_digest, save_checkpoint
from cthgr.training import TrainConfig, accuracy, predict, train_classifier

from oracles import fusion_logits


def _tiny(kind, seed, input_shape, patch, d=4):
    cfg = ModelConfig(d=d, heads=2, layers=1, mlp_hidden=6, n_classes=3, input_shape=input_shape,
                      patch=PatchSpec(*patch), input_kind=kind)
    model = CTHGR(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    for p in model.parameters():
        p.data = 0.4 * rng.standard_normal(p.shape)
    return model


def tiny_pair(seed=0):
    macro = _tiny("window", seed, (4, 2, 2), (2, 2))
    micro = _tiny("image", seed + 1, (2, 4, 1), (2, 2), d=6)
    return macro, micro


def tiny_head(seed=0):
    return FusionHead(FusionConfig(token_dims=(4, 6), projection=8, hidden=(5,), n_classes=3), seed=seed,
                      dtype=np.float64)


def np_params(obj):
    return {k: v.data.astype(np.float64) for k, v in obj.params.items()}


def test_fused_forward_matches_oracle():
    macro, micro = tiny_pair(0)
    head = tiny_head(0)
    rng = np.random.default_rng(5)
    for p in head.parameters():
        p.data = p.data + 0.3 * rng.standard_normal(p.shape)
    model = FusionModel(macro, micro, head)
    w = rng.standard_normal((4, 4, 2, 2))
    img = rng.uniform(0, 1, (4, 2, 4, 1))
    ref = fusion_logits(w, img, np_params(macro), macro.config, np_params(micro), micro.config, np_params(head))
    assert np.max(np.abs(fuse_forward(w, img, model) - ref)) < 1e-10


def test_zero_image_uses_micro_response():
    macro, micro = tiny_pair(1)
    model = FusionModel(macro, micro, tiny_head(1))
    w = np.random.default_rng(0).standard_normal((3, 4, 2, 2))
    zero = np.zeros((3, 2, 4, 1))
    logits = fuse_forward(w, zero, model)
    tokens = np.concatenate([macro.class_token(w).data, micro.class_token(zero).data], axis=1)
    assert np.all(np.isfinite(logits))
    np.testing.assert_array_equal(logits, model.head.forward(tokens).data)


def test_forward_is_deterministic_and_per_sample():
    macro, micro = tiny_pair(2)
    model = FusionModel(macro, micro, tiny_head(2))
    rng = np.random.default_rng(1)
    w, img = rng.standard_normal((5, 4, 2, 2)), rng.uniform(0, 1, (5, 2, 4, 1))
    a, b = fuse_forward(w, img, model), fuse_forward(w, img, model)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(fuse_forward(w[2:3], img[2:3], model)[0], a[2], atol=1e-13)


def test_dimension_mismatch():
    macro, micro = tiny_pair(0)
    with pytest.raises(FusionError):
        FusionModel(macro, micro, FusionHead(FusionConfig(token_dims=(4, 4), n_classes=3)))
    model = FusionModel(macro, micro, tiny_head())
    with pytest.raises(FusionError):
        model.tokens(np.zeros((2, 4, 2, 2)), np.zeros((3, 2, 4, 1)))


def test_default_head_widths():
    cfg = FusionConfig()
    assert cfg.widths() == [128, 1024, 512, 66]


def _separable(n=60, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 3
    w = rng.standard_normal((n, 4, 2, 2)) * 0.3 + y[:, None, None, None]
    img = rng.uniform(0, 0.2, (n, 2, 4, 1)) + 0.3 * y[:, None, None, None]
    return w, img, y


def test_training_keeps_backbones_and_learns():
    w, img, y = _separable()
    macro, micro = tiny_pair(3)
    cfg = TrainConfig(epochs=30, batch_size=16, lr=1e-2, seed=0)
    train_classifier(macro, w, y, cfg)
    train_classifier(micro, img, y, cfg)
    acc_macro, acc_micro = accuracy(predict(macro, w), y), accuracy(predict(micro, img), y)
    before = (params_digest(macro), params_digest(micro))
    fused, hist = train_fusion(macro, micro, w, img, y, TrainConfig(epochs=40, batch_size=16, lr=3e-3, seed=0),
                               FusionConfig(token_dims=(4, 6), projection=16, hidden=(8,), n_classes=3))
    assert (params_digest(macro), params_digest(micro)) == before
    assert accuracy(predict_fusion(fused, w, img), y) >= max(acc_macro, acc_micro) - 1.0
    assert len(hist.loss) == 40


def test_zero_epochs_leave_head_at_init():
    w, img, y = _separable(12)
    macro, micro = tiny_pair(4)
    fcfg = FusionConfig(token_dims=(4, 6), projection=8, hidden=(5,), n_classes=3)
    fused, _ = train_fusion(macro, micro, w, img, y, TrainConfig(epochs=0, seed=7), fcfg)
    init = FusionHead(fcfg, seed=7)
    for k, v in fused.head.state().items():
        np.testing.assert_array_equal(v, init.params[k].data)


def test_gradient_into_frozen_backbone_is_caught():
    macro, micro = tiny_pair(5)
    model = FusionModel(macro, micro, tiny_head())
    model.check_frozen()
    macro.params["E"].grad = np.ones_like(macro.params["E"].data)
    with pytest.raises(AssertionError, match="frozen"):
        model.check_frozen()


def test_checkpoints(tmp_path):
    macro, micro = tiny_pair(6)
    save_checkpoint(macro, tmp_path / "untrained.ckpt", extra={"trained_epochs": 0})
    with pytest.raises(FusionError, match="untrained"):
        load_backbone(tmp_path / "untrained.ckpt")
    ma = save_checkpoint(macro, tmp_path / "macro.ckpt", extra={"trained_epochs": 3})
    mi = save_checkpoint(micro, tmp_path / "micro.ckpt", extra={"trained_epochs": 3})
    model = FusionModel(macro, micro, tiny_head(6))
    save_fusion(model, tmp_path / "fused.ckpt", ma, mi)
    back = load_fusion(tmp_path / "fused.ckpt", tmp_path / "macro.ckpt", tmp_path / "micro.ckpt")
    w, img = np.ones((2, 4, 2, 2)), np.ones((2, 2, 4, 1))
    np.testing.assert_allclose(fuse_forward(w, img, back), fuse_forward(w, img, model), atol=1e-5)
    with pytest.raises(FusionError, match="hash"):
        load_fusion(tmp_path / "fused.ckpt", tmp_path / "micro.ckpt", tmp_path / "macro.ckpt")

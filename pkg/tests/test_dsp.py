import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal as sps

from cthgr.dsp import (
    PreprocessConfig,
    WindowSpec,
    butterworth_coefficients,
    butterworth_lowpass,
    count_windows,
    default_skip,
    envelope,
    fit_scale,
    load_window_batch,
    mu_law,
    normalize,
    preprocess_to_batch,
    segment,
    window_starts,
    write_window_batch,
)
from cthgr.ingest import GridLayout, Recording, select_channels

FS = 2048.0


def test_coefficients_match_scipy_butter():
    b0, b1, a1 = butterworth_coefficients(1.0, FS)
    b, a = sps.butter(1, 1.0, btype="low", fs=FS)
    np.testing.assert_allclose([b0, b1], b, rtol=1e-12)
    np.testing.assert_allclose([1.0, a1], a, rtol=1e-12)
    assert b0 == pytest.approx(1.53163e-3, rel=1e-5)
    assert a1 == pytest.approx(-0.996937, abs=1e-6)


@pytest.mark.parametrize("fc,f", [(1.0, 10.0), (1.0, 0.5), (20.0, 300.0)])
def test_magnitude_response_closed_form(fc, f):
    b0, b1, a1 = butterworth_coefficients(fc, FS)
    w = 2 * math.pi * f / FS
    z = np.exp(-1j * w)
    h = abs((b0 + b1 * z) / (1 + a1 * z))
    # first-order bilinear Butterworth: |H|^2 = 1 / (1 + (tan(w/2) / tan(wc/2))^2)
    ref = 1.0 / math.sqrt(1.0 + (math.tan(w / 2) / math.tan(math.pi * fc / FS)) ** 2)
    assert abs(h - ref) < 1e-9
    _, hz = sps.freqz([b0, b1], [1.0, a1], worN=[f], fs=FS)
    assert abs(abs(hz[0]) - ref) < 1e-9


def test_constant_input_reaches_constant():
    y = butterworth_lowpass(np.full(40000, 3.5), 1.0, FS)
    assert abs(y[-1] - 3.5) < 1e-9


def test_nyquist_input_vanishes():
    x = np.tile([1.0, -1.0], 20000)
    y = butterworth_lowpass(x, 1.0, FS)
    # only the start-up transient remains, decaying by -a1 per sample
    assert np.max(np.abs(y[-100:])) < 1e-9


def test_zero_envelope():
    assert np.all(envelope(np.zeros(100), PreprocessConfig(), FS) == 0)


def test_impulse_envelope_decays_geometrically():
    x = np.zeros(200)
    x[0] = 1.0
    y = envelope(x, PreprocessConfig(), FS)
    _, _, a1 = butterworth_coefficients(1.0, FS)
    np.testing.assert_allclose(y[2:] / y[1:-1], -a1, rtol=1e-12)
    assert y[1] / y[0] == pytest.approx(1 - a1)  # b1 + (-a1) b0 with b0 == b1


def test_rectify_flag():
    x = np.tile([1.0, -1.0], 300)
    on = envelope(x, PreprocessConfig(rectify=True), FS)
    off = envelope(x, PreprocessConfig(rectify=False), FS)
    assert on[-1] > 0.1 and abs(off[-1]) < 1e-3


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31 - 1))
def test_filter_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(300), rng.standard_normal(300)
    lhs = butterworth_lowpass(a * x + b * y, 1.0, FS)
    rhs = a * butterworth_lowpass(x, 1.0, FS) + b * butterworth_lowpass(y, 1.0, FS)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_zero_phase_is_symmetric_in_time():
    x = np.zeros(4001)
    x[2000] = 1.0
    y = butterworth_lowpass(x, 20.0, FS, "zero-phase")
    np.testing.assert_allclose(y[:2000], y[2001:][::-1], atol=1e-12)


def test_bad_cutoff():
    with pytest.raises(ValueError):
        butterworth_coefficients(1100.0, FS)


def test_mu_law_examples():
    assert mu_law(np.array([0.0]))[0] == 0.0
    np.testing.assert_array_equal(mu_law(np.array([1.0, -1.0])), [1.0, -1.0])
    assert abs(mu_law(np.array([0.5]))[0] - math.log(128.5) / math.log(256)) < 1e-15
    assert abs(mu_law(np.array([0.5]))[0] - 0.875703) < 1e-6


def test_mu_law_domain():
    with pytest.raises(ValueError):
        mu_law(np.array([1.0001]))


@settings(max_examples=50)
@given(st.floats(1.0, 1000.0), st.integers(0, 2**31 - 1))
def test_mu_law_odd_increasing_onto(mu, seed):
    x = np.sort(np.random.default_rng(seed).uniform(-1, 1, 200))
    y = mu_law(x, mu)
    assert np.max(np.abs(mu_law(-x, mu) + y)) <= 1e-12
    assert np.all(np.diff(y) > 0) or np.all(np.diff(x) == 0)
    assert np.all(np.abs(y) <= 1.0)
    np.testing.assert_allclose(mu_law(np.array([-1.0, 1.0]), mu), [-1.0, 1.0], atol=1e-12)


def test_normalize_clips_values_beyond_train_scale():
    out = normalize(np.array([[2.0, -0.5]]), np.array([1.0, 1.0]), 255.0)
    assert out[0, 0] == 1.0 and -1 < out[0, 1] < 0


def test_fit_scale_handles_silent_channels():
    np.testing.assert_array_equal(fit_scale(np.array([[0.0, -2.0], [0.0, 1.0]])), [1.0, 2.0])


def test_window_count_examples():
    assert count_windows(2048, 256, 32) == 57
    assert count_windows(100, 256, 32) == 0
    assert count_windows(10, 1, 1) == 10


@given(st.integers(0, 3000), st.integers(1, 600), st.integers(1, 300))
def test_window_count_matches_enumeration(n, w, s):
    assert count_windows(n, w, s) == len(range(0, n - w + 1, s))


def test_default_skips():
    assert [default_skip(w) for w in (64, 128, 256, 512, 1)] == [32, 32, 32, 64, 1]
    assert WindowSpec(512).skip == 64
    with pytest.raises(ValueError):
        WindowSpec(0)


def _grid_rec(labels, reps, n_h=4):
    t = len(labels)
    sig = np.arange(t * n_h * 8, dtype=float).reshape(t, n_h * 8)
    return Recording(sig, labels, reps, "x", GridLayout(n_horizontal=n_h))


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.tuples(st.integers(1, 4), st.integers(1, 5), st.integers(1, 40)), min_size=1, max_size=12),
    st.integers(1, 16),
    st.integers(1, 8),
)
def test_segment_never_crosses_boundaries(runs, w, s):
    labels = np.concatenate([[l] * n for l, _, n in runs])
    reps = np.concatenate([[r] * n for _, r, n in runs])
    batch = segment(_grid_rec(labels, reps), WindowSpec(w, s))
    for start in batch.starts:
        assert len(set(labels[start : start + w])) == 1
        assert len(set(reps[start : start + w])) == 1
    # every window from a per-run enumeration is present
    expected, pos = 0, 0
    while pos < len(labels):
        end = pos
        while end < len(labels) and labels[end] == labels[pos] and reps[end] == reps[pos]:
            end += 1
        expected += count_windows(end - pos, w, s)
        pos = end
    assert len(batch) == expected


def test_segment_shapes_and_keys():
    labels = np.array([1] * 20 + [2] * 20)
    reps = np.array([1] * 20 + [3] * 20)
    batch = segment(_grid_rec(labels, reps), WindowSpec(8, 4))
    assert batch.samples.shape == (8, 8, 4, 8)
    np.testing.assert_array_equal(batch.labels, [1] * 4 + [2] * 4)
    np.testing.assert_array_equal(batch.fold_key, [1] * 4 + [3] * 4)
    np.testing.assert_array_equal(batch.samples[1, 0].ravel(), np.arange(4 * 32, 5 * 32))


def test_instantaneous_windows():
    labels = np.ones(10, int)
    batch = segment(_grid_rec(labels, labels), WindowSpec(1, 1))
    assert len(batch) == 10 and batch.samples.shape[1] == 1


def test_window_starts_empty():
    assert window_starts(np.array([1] * 5), np.array([1] * 5), WindowSpec(8)).size == 0


def test_preprocess_fit_repetitions(small_recording, tmp_path):
    rec = select_channels(small_recording, "quarter")
    spec = WindowSpec(64)
    cfg = PreprocessConfig()
    all_batch, man = preprocess_to_batch(rec, cfg, spec)
    part, man_part = preprocess_to_batch(rec, cfg, spec, fit_repetitions=[1, 2, 3, 4])
    assert man["scale_fit_repetitions"] == [1, 2, 3, 4, 5]
    assert man_part["scale_fit_repetitions"] == [1, 2, 3, 4]
    assert all_batch.samples.shape == part.samples.shape
    assert np.all(np.abs(all_batch.samples) <= 1)
    write_window_batch(part, tmp_path / "w.emgw", man_part)
    back, man_back = load_window_batch(tmp_path / "w.emgw")
    np.testing.assert_array_equal(back.samples, part.samples.astype(np.float32))
    np.testing.assert_array_equal(back.fold_key, part.fold_key)
    assert man_back == man_part

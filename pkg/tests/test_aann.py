import numpy as np
import pytest
from scipy.stats import kurtosis

from conftest import grid
from wtsentinel.aann import (
    AannModel,
    backprop,
    fast_mse,
    gradient_check,
    init_aann,
    layer_sizes,
    mse,
    reconstruct,
    reconstruct_batch,
    residuals,
    sgd_epoch,
    train_aann,
)
from wtsentinel.domain import SampleMatrix
from wtsentinel.errors import DataError, TrainingDivergedError
from wtsentinel.preprocess import apply_seasonal_adjustment, power_curve_inliers
from wtsentinel.settings import TrainSettings


def test_default_layers():
    assert init_aann(4, TrainSettings(seed=0)).sizes == (4, 8, 2, 8, 4)
    assert layer_sizes(5) == (5, 10, 3, 10, 5)
    assert layer_sizes(2) == (2, 4, 1, 4, 2)
    with pytest.raises(ValueError):
        layer_sizes(4, bottleneck=4)


def test_init_deterministic_glorot():
    a, b = init_aann(6, TrainSettings(seed=3)), init_aann(6, TrainSettings(seed=3))
    assert a.equals(b)
    assert not a.equals(init_aann(6, TrainSettings(seed=4)))
    for w, bias in zip(a.weights, a.biases):
        limit = np.sqrt(6.0 / sum(w.shape))
        assert np.abs(w).max() <= limit and not bias.any()


def test_p1_rejected():
    with pytest.raises(ValueError):
        init_aann(1)


def _curve_data(n=20_000, seed=0):
    t = np.random.default_rng(seed).uniform(-1, 1, n)
    x = np.column_stack([t, 0.5 * t ** 2, np.tanh(t), t ** 3])
    return (x - x.mean(0)) / x.std(0, ddof=1)


def test_zero_epochs_returns_init():
    s = TrainSettings(seed=0, epochs=0)
    model = init_aann(4, s)
    trained, history = train_aann(model, _curve_data(200), s)
    assert trained.equals(model) and history == []


def test_one_dimensional_curve_learned():
    s = TrainSettings(seed=0, bottleneck=1)
    trained, history = train_aann(init_aann(4, s), _curve_data(), s)
    assert trained.sizes == (4, 8, 1, 8, 4)
    assert trained.final_loss < 0.02
    assert all(np.isfinite(history).ravel())
    assert min(v for _, v in history) <= history[0][1]


def test_training_deterministic():
    s = TrainSettings(seed=5, epochs=15)
    x = _curve_data(3000)
    a, ha = train_aann(init_aann(4, s), x, s)
    b, hb = train_aann(init_aann(4, s), x, s)
    assert ha == hb and a.equals(b)


def test_training_preconditions():
    s = TrainSettings(seed=0, epochs=2)
    with pytest.raises(DataError):
        train_aann(init_aann(4, s), _curve_data(39), s)
    with pytest.raises(DataError):
        train_aann(init_aann(3, s), _curve_data(100), s)
    with pytest.raises(TrainingDivergedError, match="learning_rate"):
        big = np.random.default_rng(0).normal(size=(500, 4)) * 100
        hot = TrainSettings(seed=0, epochs=20, learning_rate=100.0)
        train_aann(init_aann(4, hot), big, hot)


def _zero_model(p=4):
    m = init_aann(p, TrainSettings(seed=0))
    return AannModel(m.sizes, tuple(np.zeros_like(w) for w in m.weights), tuple(np.zeros_like(b) for b in m.biases))


def test_zero_model_outputs_zero_and_residual_is_input():
    m = _zero_model()
    assert (reconstruct(m, [1.0, -2.0, 3.0, 4.0]) == 0).all()
    x = np.random.default_rng(0).normal(size=(10, 4))
    r = residuals(m, SampleMatrix.from_arrays(grid(10), "abcd", x))
    np.testing.assert_array_equal(r.values, x)


def test_length_mismatch():
    with pytest.raises(DataError):
        reconstruct(init_aann(4), [1.0, 2.0, 3.0])
    with pytest.raises(DataError):
        reconstruct(init_aann(4), [1.0, 2.0, 3.0, np.nan])


def test_bounded_inputs_do_not_overflow():
    m = init_aann(8, TrainSettings(seed=1))
    x = np.random.default_rng(1).uniform(-10, 10, (1000, 8))
    y = reconstruct_batch(m, x)
    bound = np.abs(m.weights[-1]).sum(0) + np.abs(m.biases[-1])
    assert np.isfinite(y).all() and (np.abs(y) <= bound + 1e-12).all()


def test_invalid_rows_propagate():
    x = np.random.default_rng(0).normal(size=(4, 4))
    x[2, 1] = np.nan
    r = residuals(init_aann(4), SampleMatrix.from_arrays(grid(4), "abcd", x))
    assert r.values.shape == x.shape
    assert not r.valid[2].any() and r.valid[[0, 1, 3]].all()


def test_perfect_reconstruction_gives_zero_residual():
    # points the network maps to themselves: the output of a model whose last layer
    # ignores its input is a fixed point
    m = _zero_model()
    m = AannModel(m.sizes, m.weights, m.biases[:-1] + (np.array([0.5, -1.0, 2.0, 0.0]),))
    fixed = np.tile(m.biases[-1], (6, 1))
    r = residuals(m, SampleMatrix.from_arrays(grid(6), "abcd", fixed))
    assert (r.values == 0).all()


@pytest.mark.parametrize("p", [2, 3, 4, 8])
def test_gradient_check_fresh_models(p):
    for seed in range(3):
        model = init_aann(p, TrainSettings(seed=seed))
        sample = np.random.default_rng(seed).normal(size=p)
        assert gradient_check(model, sample) < 1e-6
        assert gradient_check(model, sample, epsilon=1e-6) < 1e-6


def test_gradient_check_step_size_ratio():
    model = init_aann(3, TrainSettings(seed=0))
    sample = np.random.default_rng(0).normal(size=3)
    a = gradient_check(model, sample, epsilon=1e-5)
    b = gradient_check(model, sample, epsilon=1e-6)
    print(f"gradient check eps=1e-5: {a:.3e}, eps=1e-6: {b:.3e}, ratio {max(a, b) / min(a, b):.1f}")
    assert max(a, b) / min(a, b) < 10


def _sign_flipped(weights, biases, x):
    loss, gw, gb = backprop(weights, biases, x)
    gw = list(gw)
    gw[1] = -gw[1]
    return loss, gw, gb


def test_mutated_backprop_caught():
    model = init_aann(4, TrainSettings(seed=0))
    assert gradient_check(model, np.random.default_rng(0).normal(size=4), grad_fn=_sign_flipped) > 1e-2


def test_compiled_epoch_matches_reference():
    s = TrainSettings(seed=0)
    model = init_aann(5, s)
    x = np.random.default_rng(3).normal(size=(40, 5))
    w = [w.copy() for w in model.weights]
    b = [b.copy() for b in model.biases]
    vw = [np.zeros_like(a) for a in w]
    vb = [np.zeros_like(a) for a in b]
    loss = sgd_epoch(w, b, vw, vb, x, np.arange(40, dtype=np.int64), 40, 0.1, 0.0)
    ref_loss, gw, gb = backprop(model.weights, model.biases, x)
    assert abs(loss - ref_loss) < 1e-14
    for got, w0, g in zip(w, model.weights, gw):
        np.testing.assert_allclose(got, w0 - 0.1 * g, rtol=0, atol=1e-14)
    for got, b0, g in zip(b, model.biases, gb):
        np.testing.assert_allclose(got, b0 - 0.1 * g, rtol=0, atol=1e-14)
    assert abs(fast_mse(w, b, x) - mse(w, b, x)) < 1e-14


def test_blob_centroid_reconstructed():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5000, 4)) @ np.diag([1.0, 0.5, 0.3, 0.2])
    x = (x - x.mean(0)) / x.std(0, ddof=1)
    s = TrainSettings(seed=0, epochs=60)
    model, _ = train_aann(init_aann(4, s), x, s)
    centroid = x.mean(0)
    assert np.abs(reconstruct(model, centroid) - centroid).max() < 0.5


def _held_out_standardized(run):
    art, held = run["artifact"], run["held_out"]
    m = held.project(art.input_columns)
    m = m.rows(power_curve_inliers(m.column(art.wind_tag), m.column(art.power_tag), art.power_curve))
    m = apply_seasonal_adjustment(m, art.seasonal).project(art.tag_list)
    return m.with_values(art.standardizer.transform(m.values))


def test_held_out_residual_mean(gearbox_run):
    z = _held_out_standardized(gearbox_run)
    r = residuals(gearbox_run["artifact"].aann, z)
    assert z.n_rows > 4000
    assert np.abs(r.values.mean(0)).max() < 0.05


def test_residuals_closer_to_normal_than_raw(gearbox_run):
    z = _held_out_standardized(gearbox_run)
    r = residuals(gearbox_run["artifact"].aann, z)
    raw_k = kurtosis(z.values, axis=0)
    res_k = kurtosis(r.values, axis=0)
    print("excess kurtosis raw", np.round(raw_k, 3), "residual", np.round(res_k, 3))
    assert (np.abs(res_k) < np.abs(raw_k)).all()

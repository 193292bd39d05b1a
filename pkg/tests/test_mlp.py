import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from prach_hybrid.errors import ModelFormatError, ModelVersionError, TrainingError
from prach_hybrid.mlp import (MlpModel, TrainConfig, count_flops, correlation_flops, forward,
                              gradient_check, load_model, loss_and_grads, receiver_flops,
                              save_model, train_arrays)


@pytest.fixture(scope="module")
def model():
    return MlpModel.init(13, seed=3)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 13, elements=st.floats(-1e3, 1e3)))
def test_probabilities_sum_to_one(x):
    p = forward(MlpModel.init(13, seed=0), x)
    assert p.shape == (2,)
    assert abs(p.sum() - 1) < 1e-9
    assert np.all((p >= 0) & (p <= 1))


def test_zero_model_is_undecided():
    assert np.array_equal(forward(MlpModel.zeros(13), np.arange(13.0)), [0.5, 0.5])


def test_forward_rejects_bad_input(model):
    with pytest.raises(ValueError):
        forward(model, np.ones(12))
    with pytest.raises(ValueError):
        forward(model, np.full(13, np.nan))


def test_layer_shapes(model):
    assert model.shapes == [(13, 128), (128, 64), (64, 64), (64, 2)]


def test_gradient_check_random_point(model, rng):
    x = rng.standard_normal(13)
    assert gradient_check(model, x, 1) < 1e-4
    assert gradient_check(model, x, 0) < 1e-4


def test_gradient_zero_model_output_bias():
    m = MlpModel.zeros(13)
    _, grads = loss_and_grads(m, np.zeros((1, 13)), np.array([1]))
    assert np.all(np.isfinite(grads[-1]))
    assert np.allclose(grads[-1], [0.5, -0.5])
    assert gradient_check(m, np.zeros(13), 1) < 1e-6


def _away_from_kinks(m, x, margin=0.2):
    """Shift biases so every hidden pre-activation sits at least ``margin`` from zero."""
    h = x
    for i, (w, b) in enumerate(zip(m.weights[:-1], m.biases[:-1])):
        z = h @ w + b
        shift = np.where(np.abs(z) < margin, np.where(z >= 0, margin, -margin) - z, 0.0)
        b += shift
        h = np.maximum(h @ w + b, 0.0)
    return m


def test_gradient_check_away_from_kinks(rng):
    x = rng.standard_normal(13)
    m = _away_from_kinks(MlpModel.init(13, seed=8), x)
    assert gradient_check(m, x, 1, max_params=2000) < 1e-6


def _toy(n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = np.abs(rng.standard_normal((n, 13)))
    y = np.arange(n) % 2
    peaks = rng.integers(0, 13, n)
    x[y == 1, peaks[y == 1]] += 10.0
    return x, y


def test_separable_toy_reaches_full_accuracy():
    x, y = _toy()
    m = train_arrays(x, y, TrainConfig(max_epochs=50, batch_size=32, seed=1))
    assert m.train_meta["epochs"] <= 50
    pred = np.argmax(forward(m, x), axis=1)
    assert np.mean(pred == y) == 1.0


def test_training_loss_decreases():
    x, y = _toy(seed=2)
    m = train_arrays(x, y, TrainConfig(max_epochs=30, batch_size=64, seed=2))
    losses = m.train_meta["train_loss"]
    assert losses[-1] < losses[0]
    # lr halving keeps late-stage increases small relative to the starting loss
    assert max(np.diff(losses)) < 0.1 * losses[0]


def test_training_deterministic():
    x, y = _toy(seed=3)
    cfg = TrainConfig(max_epochs=5, seed=4)
    a, b = train_arrays(x, y, cfg), train_arrays(x, y, cfg)
    for p, q in zip(a.params(), b.params()):
        assert p.tobytes() == q.tobytes()


def test_single_class_rejected():
    with pytest.raises(TrainingError):
        train_arrays(np.ones((10, 13)), np.zeros(10, dtype=int))


def test_nan_loss_reported():
    x, y = _toy()
    with pytest.raises(TrainingError, match="loss|overflow"):
        train_arrays(x * 1e300, y, TrainConfig(max_epochs=2))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_flops():
    assert count_flops(MlpModel.zeros(13)) == 28160
    assert count_flops(MlpModel.zeros(26)) == 31488
    assert count_flops(MlpModel.zeros(1, hidden=(), n_out=1)) == 2
    assert count_flops(MlpModel.zeros(13), include_activations=True) == 28160 + 256 + 8


def test_receiver_cost_order_of_magnitude():
    # 64 windows x 28160 plus 7 correlations lands near 1.8 million
    total = receiver_flops(MlpModel.zeros(13))
    assert 1.75e6 < total < 1.9e6
    assert 5000 < correlation_flops(139) < 6500


def test_save_load_round_trip(tmp_path, model, rng):
    path = tmp_path / "m.json"
    model.train_meta = {"seed": 3, "note": "x"}
    save_model(model, path)
    loaded = load_model(path)
    x = rng.standard_normal((100, 13))
    assert forward(model, x).tobytes() == forward(loaded, x).tobytes()
    assert loaded.train_meta == model.train_meta
    doc = json.loads(path.read_text())
    assert doc["format_version"] == 1 and doc["input_kind"] == "pdp"


def test_truncated_file_rejected(tmp_path, model):
    path = tmp_path / "m.json"
    save_model(model, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_unknown_version_rejected(tmp_path, model):
    path = tmp_path / "m.json"
    save_model(model, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelVersionError):
        load_model(path)


def test_shape_corruption_rejected(tmp_path, model):
    path = tmp_path / "m.json"
    save_model(model, path)
    doc = json.loads(path.read_text())
    doc["layers"][1]["weights"] = doc["layers"][1]["weights"][:-1]
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(path)

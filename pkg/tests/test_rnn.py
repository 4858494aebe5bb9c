"""
Unit tests for the numpy LSTM: cell, forward pass, gradients, training and
checkpoints.
"""
import math

import numpy as np
import pytest

from src.shared.exceptions import ChecksumError, TrainingError, ValidationError
from src.shared.schemas import INF
from src.services.trace_io.synthetic import cyclic_trace
from src.services.dataset.schemas import ScalerParams
from src.services.dataset.service import build_dataset, split
from src.services.rnn import repository
from src.services.rnn.schemas import LstmLayerParams, ModelParams, TrainConfig
from src.services.rnn.service import (
    Adam,
    backward,
    batch_loss,
    clip_gradients,
    decode_frd,
    dropout_masks,
    evaluate,
    init_params,
    loss,
    lstm_cell_forward,
    model_forward,
    predict_batch,
    predict_frd,
    predict_raw,
    train,
)
from tests.conftest import random_dataset


def zero_layer(in_dim: int = 6, width: int = 2) -> LstmLayerParams:
    return LstmLayerParams(
        weights=np.zeros((4 * width, in_dim + width)),
        bias=np.zeros(4 * width),
        in_dim=in_dim,
        width=width,
    )


def scalar_cell(layer, x, h, c):
    """Element-by-element LSTM step in plain float arithmetic."""
    w = layer.width
    xh = list(x) + list(h)

    def pre(row):
        return sum(layer.weights[row][j] * xh[j] for j in range(len(xh))) + layer.bias[row]

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    i = [sig(pre(k)) for k in range(w)]
    f = [sig(pre(w + k)) for k in range(w)]
    o = [sig(pre(2 * w + k)) for k in range(w)]
    g = [math.tanh(pre(3 * w + k)) for k in range(w)]
    c_new = [f[k] * c[k] + i[k] * g[k] for k in range(w)]
    h_new = [o[k] * math.tanh(c_new[k]) for k in range(w)]
    return h_new, c_new


def numeric_gradient(params, x, y, flat_index, masks=None, eps=1e-5):
    for array in params.arrays():
        if flat_index < array.size:
            break
        flat_index -= array.size
    old = array.flat[flat_index]
    array.flat[flat_index] = old + eps
    plus = backward(params, x, y, masks)[0]
    array.flat[flat_index] = old - eps
    minus = backward(params, x, y, masks)[0]
    array.flat[flat_index] = old
    return (plus - minus) / (2 * eps)


def target_scaler(high: float = 10.0) -> ScalerParams:
    return ScalerParams(mins=[0.0] * 7, maxs=[1.0] * 6 + [high])


@pytest.mark.unit
class TestCell:
    """Test one LSTM step."""

    def test_all_zero(self):
        h, c = lstm_cell_forward(zero_layer(), np.zeros(6), np.zeros(2), np.zeros(2))

        assert h.tolist() == [0.0, 0.0]
        assert c.tolist() == [0.0, 0.0]

    def test_zero_weights_carry_half_the_cell(self):
        h, c = lstm_cell_forward(zero_layer(), np.ones(6), np.zeros(2), np.full(2, 2.0))

        assert c == pytest.approx([1.0, 1.0])
        assert h == pytest.approx([0.5 * math.tanh(1.0)] * 2)

    def test_matches_scalar_arithmetic(self):
        rng = np.random.default_rng(42)
        layer = LstmLayerParams(
            weights=rng.normal(size=(8, 8)), bias=rng.normal(size=8), in_dim=6, width=2
        )
        x, h_prev, c_prev = rng.normal(size=6), rng.normal(size=2), rng.normal(size=2)

        h, c = lstm_cell_forward(layer, x, h_prev, c_prev)
        h_ref, c_ref = scalar_cell(layer, x, h_prev, c_prev)

        assert np.allclose(h, h_ref, rtol=0, atol=1e-12)
        assert np.allclose(c, c_ref, rtol=0, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            lstm_cell_forward(zero_layer(), np.zeros(5), np.zeros(2), np.zeros(2))
        with pytest.raises(ValidationError):
            lstm_cell_forward(zero_layer(), np.zeros(6), np.zeros(3), np.zeros(2))

    def test_gate_views(self):
        layer = zero_layer()
        weights, bias = layer.gate("f")

        assert weights.shape == (2, 8)
        assert bias.shape == (2,)


@pytest.mark.unit
class TestForward:
    """Test the stacked model forward pass."""

    def test_zero_params_return_dense_bias(self):
        params = ModelParams(
            layers=[zero_layer(6, 3), zero_layer(3, 3)],
            dense_w=np.zeros((1, 3)),
            dense_b=np.array([0.25]),
            width=3,
            seq_len=4,
        )

        assert model_forward(params, np.ones((4, 6))) == 0.25

    def test_order_sensitive(self, tiny_params):
        sample = np.random.default_rng(1).uniform(-1, 1, size=(3, 6))
        swapped = sample[[1, 0, 2]]

        assert model_forward(tiny_params, sample) != model_forward(tiny_params, swapped)

    def test_single_step_is_one_cell(self):
        params = init_params(width=3, layers=1, seq_len=1, rng=np.random.default_rng(5))
        x = np.random.default_rng(6).uniform(-1, 1, size=6)
        h, _ = lstm_cell_forward(params.layers[0], x, np.zeros(3), np.zeros(3))

        expected = float(h @ params.dense_w[0] + params.dense_b[0])
        assert model_forward(params, x[None, :]) == pytest.approx(expected, abs=1e-14)

    def test_wrong_sample_shape(self, tiny_params):
        with pytest.raises(ValidationError):
            model_forward(tiny_params, np.zeros((4, 6)))

    def test_batch_matches_single(self, tiny_params):
        samples = np.random.default_rng(2).uniform(-1, 1, size=(7, 3, 6))
        batch = predict_raw(tiny_params, samples)

        assert batch == pytest.approx([model_forward(tiny_params, s) for s in samples], abs=1e-12)

    def test_init(self):
        params = init_params(width=5, layers=2, seq_len=8, rng=np.random.default_rng(0))

        assert params.layers[0].weights.shape == (20, 11)
        assert params.layers[1].weights.shape == (20, 10)
        assert np.abs(params.layers[0].weights).max() <= 1 / math.sqrt(11)
        assert params.layers[0].bias[5:10].tolist() == [1.0] * 5
        assert params.dense_b.tolist() == [0.0]


@pytest.mark.unit
class TestLoss:
    """Test the squared-error loss."""

    def test_values(self):
        assert loss(0.3, 0.3) == 0.0
        assert loss(1.0, 0.5) == 0.25

    def test_batch(self):
        preds = np.array([0.0, 1.0, -1.0])
        targets = np.array([0.5, 1.0, 1.0])

        assert batch_loss(preds, targets) == pytest.approx((0.25 + 0.0 + 4.0) / 3)


@pytest.mark.unit
class TestGradients:
    """Test backpropagation through time against finite differences."""

    @pytest.fixture
    def batch(self):
        rng = np.random.default_rng(3)
        return rng.uniform(-1, 1, size=(5, 3, 6)), rng.uniform(-1, 1, size=5)

    def test_zero_loss_zero_gradients(self, tiny_params, batch):
        x, _ = batch
        y = predict_raw(tiny_params, x)
        value, grads = backward(tiny_params, x, y)

        assert value == 0.0
        assert all(not g.any() for g in grads)

    def test_dense_bias_gradient(self, tiny_params, batch):
        x, y = batch
        _, grads = backward(tiny_params, x, y)

        expected = np.mean(2 * (predict_raw(tiny_params, x) - y))
        assert grads[-1][0] == pytest.approx(expected, abs=1e-12)

    def test_gradient_shapes(self, tiny_params, batch):
        x, y = batch
        _, grads = backward(tiny_params, x, y)

        assert [g.shape for g in grads] == [a.shape for a in tiny_params.arrays()]

    def test_finite_differences(self, tiny_params, batch):
        x, y = batch
        _, grads = backward(tiny_params, x, y)
        analytic = np.concatenate([g.ravel() for g in grads])
        total = analytic.size
        rng = np.random.default_rng(11)
        picks = set(rng.choice(total, size=199, replace=False).tolist()) | {total - 1}

        for index in sorted(picks):
            numeric = numeric_gradient(tiny_params, x, y, index)
            a = analytic[index]
            assert abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6) < 1e-4, index

    def test_finite_differences_with_dropout_masks(self, tiny_params, batch):
        x, y = batch
        masks = dropout_masks(np.random.default_rng(4), 0.3, tiny_params, len(y))
        _, grads = backward(tiny_params, x, y, masks)
        analytic = np.concatenate([g.ravel() for g in grads])

        for index in np.random.default_rng(12).choice(analytic.size, size=40, replace=False):
            numeric = numeric_gradient(tiny_params, x, y, int(index), masks)
            a = analytic[index]
            assert abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6) < 1e-4, index

    def test_clip(self):
        grads = [np.array([3.0, 0.0]), np.array([4.0])]
        norm = clip_gradients(grads, 1.0)

        assert norm == pytest.approx(5.0)
        assert grads[0] == pytest.approx([0.6, 0.0])
        assert grads[1] == pytest.approx([0.8])

    def test_adam_decreases_loss_on_repeated_batch(self, batch):
        x, y = batch
        params = init_params(width=4, layers=2, seq_len=3, rng=np.random.default_rng(8))
        optimizer = Adam(params.arrays(), learning_rate=1e-4)
        losses = []
        for _ in range(10):
            value, grads = backward(params, x, y)
            losses.append(value)
            optimizer.step(grads)

        assert all(b <= a for a, b in zip(losses, losses[1:]))


@pytest.mark.unit
class TestTraining:
    """Test the training loop."""

    def test_learns_cyclic_trace(self):
        dataset = build_dataset(cyclic_trace(300, period=3), sequence_length=8, seed=0)
        train_set, val_set = split(dataset, 0.8, val_take=40)
        config = TrainConfig(
            epochs=60,
            learning_rate=0.01,
            batch_size=32,
            dropout=0.2,
            seed=1,
            patience=60,
            lstm_width=8,
            lstm_layers=2,
        )
        checkpoint = train(train_set, val_set, config)
        report, frame = evaluate(checkpoint, val_set)

        assert checkpoint.best_val_mse < 0.05
        assert report.accuracy >= 0.9
        assert list(frame.columns) == ["origin_time", "truth_scaled", "pred_scaled", "truth_frd", "pred_frd"]
        assert (frame["truth_frd"] == 3).all()

    def test_zero_learning_rate_keeps_init(self, small_train_config):
        data = random_dataset(40, 3, seed=2)
        config = small_train_config.model_copy(update={"learning_rate": 0.0, "epochs": 3})
        checkpoint = train(data.slice(0, 30), data.slice(30, 40), config)
        initial = init_params(config.lstm_width, config.lstm_layers, 3, np.random.default_rng(config.seed))

        for trained, start in zip(checkpoint.params.arrays(), initial.arrays()):
            assert np.array_equal(trained, start)

    def test_same_seed_same_checkpoint(self, small_train_config):
        data = random_dataset(60, 3, seed=4)
        first = train(data.slice(0, 48), data.slice(48, 60), small_train_config)
        second = train(data.slice(0, 48), data.slice(48, 60), small_train_config)

        assert repository.dumps(first) == repository.dumps(second)
        assert first.history == second.history

    def test_early_stopping_keeps_best_epoch(self, small_train_config):
        data = random_dataset(60, 3, seed=4)
        config = small_train_config.model_copy(update={"epochs": 30, "patience": 2})
        checkpoint = train(data.slice(0, 48), data.slice(48, 60), config)

        best = min(record.val_mse for record in checkpoint.history)
        assert checkpoint.best_val_mse == best
        assert len(checkpoint.history) <= 30
        assert len(checkpoint.history) - checkpoint.best_epoch <= 2

    def test_nan_loss_aborts(self, small_train_config):
        data = random_dataset(20, 3)
        data.features[0, 0, 0] = np.nan

        with pytest.raises(TrainingError):
            train(data.slice(0, 16), data.slice(16, 20), small_train_config)

    def test_empty_split(self, small_train_config):
        data = random_dataset(10, 3)

        with pytest.raises(TrainingError):
            train(data.slice(0, 10), data.slice(10, 10), small_train_config)

    @pytest.mark.slow
    def test_full_size_cyclic_trace(self):
        dataset = build_dataset(cyclic_trace(3000, period=3), sequence_length=8, seed=42)
        train_set, val_set = split(dataset, 0.8)
        checkpoint = train(train_set, val_set, TrainConfig(epochs=200))
        report, frame = evaluate(checkpoint, val_set)

        assert checkpoint.best_val_mse < 0.05
        finite = frame[frame["truth_frd"] == 3]
        assert (finite["pred_frd"] == 3).mean() >= 0.9


@pytest.mark.unit
class TestDecode:
    """Test turning raw outputs into forward reuse distances."""

    def test_minus_one_is_inf(self):
        assert decode_frd(-1.0, target_scaler()) == INF

    @pytest.mark.parametrize(
        "decoded, expected",
        [(2.4, 2), (2.6, 3), (0.49, INF), (0.51, 1), (10.0, 10)],
    )
    def test_rounding(self, decoded, expected):
        raw = decoded / 5.0 - 1.0

        assert decode_frd(raw, target_scaler()) == expected

    def test_output_is_clamped(self):
        assert decode_frd(7.0, target_scaler()) == 10


@pytest.mark.unit
class TestCheckpointFile:
    """Test the binary checkpoint container."""

    @pytest.fixture
    def checkpoint(self, small_train_config):
        data = random_dataset(30, 3, seed=5)
        return train(data.slice(0, 24), data.slice(24, 30), small_train_config)

    def test_round_trip_restores_predictions(self, checkpoint, tmp_path):
        path = tmp_path / "model.rlck"
        repository.save_checkpoint(checkpoint, path)
        restored = repository.load_checkpoint(path)
        samples = random_dataset(5, 3, seed=9).features

        assert repository.dumps(restored) == repository.dumps(checkpoint)
        assert predict_batch(restored, samples) == predict_batch(checkpoint, samples)
        assert predict_frd(restored, samples[0]) == predict_batch(checkpoint, samples)[0]

    def test_corrupt_tail(self, checkpoint):
        data = repository.dumps(checkpoint)

        with pytest.raises(ChecksumError):
            repository.loads(data[:-1] + bytes([data[-1] ^ 0x01]))

    def test_history_csv(self, checkpoint, tmp_path):
        path = tmp_path / "log.csv"
        repository.write_history_csv(checkpoint.history, path)

        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,train_mse,val_mse"
        assert len(lines) == len(checkpoint.history) + 1

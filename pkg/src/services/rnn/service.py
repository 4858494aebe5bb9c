"""
Stacked LSTM regressor written directly in numpy.

All arithmetic is float64. Batches are (B, seq_len, 6) arrays; every layer
starts from zero states, non-final layers hand their full output sequence to
the next layer, and the last hidden state of the final layer feeds a linear
dense head.
"""
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.shared.exceptions import TrainingError, ValidationError
from src.shared.logging import get_logger
from src.shared.schemas import INF, NUM_FEATURES
from src.services.dataset.schemas import Dataset, ScalerParams
from src.services.dataset.service import unscale_targets
from src.services.locality.schemas import FeatureParams
from .schemas import (
    Checkpoint,
    EpochRecord,
    EvaluationReport,
    LstmLayerParams,
    ModelParams,
    TrainConfig,
)

logger = get_logger(__name__)

# Decoded distances below this are INF (INF encodes as 0, finite RDs are >= 1)
INF_THRESHOLD = 0.5
PREDICT_CHUNK = 1024

StepCache = Tuple[np.ndarray, ...]


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def init_params(
    width: int,
    layers: int,
    seq_len: int,
    rng: np.random.Generator,
) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget bias 1."""
    lstm_layers = []
    for index in range(layers):
        in_dim = NUM_FEATURES if index == 0 else width
        bound = 1.0 / math.sqrt(in_dim + width)
        weights = rng.uniform(-bound, bound, size=(4 * width, in_dim + width))
        bias = np.zeros(4 * width)
        bias[width:2 * width] = 1.0
        lstm_layers.append(LstmLayerParams(weights=weights, bias=bias, in_dim=in_dim, width=width))

    bound = 1.0 / math.sqrt(width)
    return ModelParams(
        layers=lstm_layers,
        dense_w=rng.uniform(-bound, bound, size=(1, width)),
        dense_b=np.zeros(1),
        width=width,
        seq_len=seq_len,
    )


def _cell(
    layer: LstmLayerParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, StepCache]:
    w = layer.width
    xh = np.concatenate([x, h_prev], axis=-1)
    z = xh @ layer.weights.T + layer.bias
    i = sigmoid(z[..., :w])
    f = sigmoid(z[..., w:2 * w])
    o = sigmoid(z[..., 2 * w:3 * w])
    g = np.tanh(z[..., 3 * w:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, (xh, i, f, o, g, c_prev, tanh_c)


def lstm_cell_forward(
    layer: LstmLayerParams,
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    One LSTM step:
        i, f, o = sigmoid(W [x_t, h_prev] + b)
        c_t = f * c_prev + i * tanh(W_c [x_t, h_prev] + b_c)
        h_t = o * tanh(c_t)

    Raises:
        ValidationError: On a dimension mismatch
    """
    x_t, h_prev, c_prev = (np.asarray(a, dtype=np.float64) for a in (x_t, h_prev, c_prev))
    if x_t.shape[-1] != layer.in_dim:
        raise ValidationError(f"input has {x_t.shape[-1]} lanes, layer expects {layer.in_dim}")
    if h_prev.shape[-1] != layer.width or c_prev.shape[-1] != layer.width:
        raise ValidationError(f"states must have {layer.width} lanes")
    h, c, _ = _cell(layer, x_t, h_prev, c_prev)
    return h, c


def _forward(
    params: ModelParams,
    batch: np.ndarray,
    masks: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[np.ndarray, List[List[StepCache]], np.ndarray]:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[1:] != (params.seq_len, NUM_FEATURES):
        raise ValidationError(
            f"batch shape {batch.shape}, expected (B, {params.seq_len}, {NUM_FEATURES})"
        )

    size, steps, _ = batch.shape
    width = params.width
    inputs = batch
    caches: List[List[StepCache]] = []
    h = np.zeros((size, width))
    for index, layer in enumerate(params.layers):
        h = np.zeros((size, width))
        c = np.zeros((size, width))
        outputs = np.empty((size, steps, width))
        layer_cache: List[StepCache] = []
        for t in range(steps):
            h, c, cache = _cell(layer, inputs[:, t], h, c)
            outputs[:, t] = h
            layer_cache.append(cache)
        caches.append(layer_cache)
        if index < len(params.layers) - 1:
            inputs = outputs * masks[index] if masks is not None else outputs

    predictions = h @ params.dense_w[0] + params.dense_b[0]
    return predictions, caches, h


def model_forward(
    params: ModelParams,
    sample: np.ndarray,
    dropout_mask: Optional[Sequence[np.ndarray]] = None,
) -> float:
    """Raw (scaled, unclamped) prediction for one (seq_len, 6) sample."""
    sample = np.asarray(sample, dtype=np.float64)
    if sample.shape != (params.seq_len, NUM_FEATURES):
        raise ValidationError(f"sample shape {sample.shape}, expected ({params.seq_len}, {NUM_FEATURES})")
    masks = None if dropout_mask is None else [m[None, ...] if m.ndim == 2 else m for m in dropout_mask]
    predictions, _, _ = _forward(params, sample[None, ...], masks)
    return float(predictions[0])


def loss(pred: float, target: float) -> float:
    """Squared error."""
    return float((pred - target) ** 2)


def batch_loss(preds: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared error over a batch."""
    return float(np.mean((np.asarray(preds) - np.asarray(targets)) ** 2))


def backward(
    params: ModelParams,
    batch: np.ndarray,
    targets: np.ndarray,
    masks: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[float, List[np.ndarray]]:
    """
    Batch MSE and its exact gradient for every array of params.arrays(),
    by backpropagation through time over the full sequence.
    """
    targets = np.asarray(targets, dtype=np.float64)
    predictions, caches, last_h = _forward(params, batch, masks)
    size, steps = len(targets), params.seq_len
    error = predictions - targets
    d_pred = 2.0 * error / size

    d_dense_w = (d_pred @ last_h)[None, :]
    d_dense_b = np.array([d_pred.sum()])

    d_out = np.zeros((size, steps, params.width))
    d_out[:, -1] = d_pred[:, None] * params.dense_w[0]

    layer_grads: List[np.ndarray] = []
    for index in reversed(range(len(params.layers))):
        layer = params.layers[index]
        in_dim = layer.in_dim
        d_weights = np.zeros_like(layer.weights)
        d_bias = np.zeros_like(layer.bias)
        d_inputs = np.zeros((size, steps, in_dim))
        dh_next = np.zeros((size, params.width))
        dc_next = np.zeros((size, params.width))
        for t in reversed(range(steps)):
            xh, i, f, o, g, c_prev, tanh_c = caches[index][t]
            dh = d_out[:, t] + dh_next
            dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dh * tanh_c * o * (1.0 - o),
                    dc * i * (1.0 - g ** 2),
                ],
                axis=1,
            )
            dc_next = dc * f
            d_weights += dz.T @ xh
            d_bias += dz.sum(axis=0)
            dxh = dz @ layer.weights
            d_inputs[:, t] = dxh[:, :in_dim]
            dh_next = dxh[:, in_dim:]
        layer_grads = [d_weights, d_bias] + layer_grads
        if index > 0:
            d_out = d_inputs * masks[index - 1] if masks is not None else d_inputs

    return float(np.mean(error ** 2)), layer_grads + [d_dense_w, d_dense_b]


def clip_gradients(grads: List[np.ndarray], max_norm: float) -> float:
    """Scale gradients in place to a global norm of at most max_norm; returns the norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm


class Adam:
    """Adam optimizer updating a fixed list of arrays in place."""

    def __init__(
        self,
        arrays: List[np.ndarray],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.arrays = arrays
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.steps = 0

    def step(self, grads: List[np.ndarray]) -> None:
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for param, grad, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)


def dropout_masks(
    rng: np.random.Generator, rate: float, params: ModelParams, size: int
) -> Optional[List[np.ndarray]]:
    """Inverted-dropout masks for the sequences passed between LSTM layers."""
    if rate <= 0.0 or len(params.layers) < 2:
        return None
    shape = (size, params.seq_len, params.width)
    keep = 1.0 - rate
    return [(rng.random(shape) < keep) / keep for _ in range(len(params.layers) - 1)]


def predict_raw(params: ModelParams, samples: np.ndarray) -> np.ndarray:
    """Raw outputs for many samples, in chunks."""
    samples = np.asarray(samples)
    if len(samples) == 0:
        return np.zeros(0)
    outputs = [
        _forward(params, samples[start:start + PREDICT_CHUNK])[0]
        for start in range(0, len(samples), PREDICT_CHUNK)
    ]
    return np.concatenate(outputs)


def train(
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig = TrainConfig(),
    feature_params: FeatureParams = FeatureParams(),
) -> Checkpoint:
    """
    Mini-batch Adam training in fixed sample order with early stopping.

    Returns the checkpoint of the epoch with the lowest validation MSE.
    Parameters are initialised from the first draws of the seeded RNG, then
    dropout masks are drawn from the same stream.

    Raises:
        TrainingError: On an empty split or a non-finite loss
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise TrainingError(
            "training and validation splits must be non-empty",
            details={"train": len(train_set), "validation": len(val_set)},
        )

    rng = np.random.default_rng(config.seed)
    params = init_params(config.lstm_width, config.lstm_layers, train_set.sequence_length, rng)
    optimizer = Adam(params.arrays(), config.learning_rate, config.beta1, config.beta2, config.epsilon)

    x_train = train_set.features.astype(np.float64)
    y_train = train_set.targets.astype(np.float64)
    x_val = val_set.features.astype(np.float64)
    y_val = val_set.targets.astype(np.float64)

    best = params.copy()
    best_val = math.inf
    best_epoch = 0
    stale = 0
    history: List[EpochRecord] = []

    logger.info(
        "Training started",
        train_samples=len(train_set),
        val_samples=len(val_set),
        width=config.lstm_width,
        layers=config.lstm_layers,
        learning_rate=config.learning_rate,
    )
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for start in range(0, len(y_train), config.batch_size):
            xb = x_train[start:start + config.batch_size]
            yb = y_train[start:start + config.batch_size]
            masks = dropout_masks(rng, config.dropout, params, len(yb))
            batch_mse, grads = backward(params, xb, yb, masks)
            if not math.isfinite(batch_mse):
                raise TrainingError(
                    "loss is not finite",
                    details={"epoch": epoch, "batch_start": start, "loss": batch_mse},
                )
            clip_gradients(grads, config.clip_norm)
            optimizer.step(grads)
            total += batch_mse * len(yb)

        train_mse = total / len(y_train)
        val_mse = batch_loss(predict_raw(params, x_val), y_val)
        if not math.isfinite(val_mse):
            raise TrainingError("validation loss is not finite", details={"epoch": epoch})
        history.append(EpochRecord(epoch=epoch, train_mse=train_mse, val_mse=val_mse))
        logger.info("Training epoch finished", epoch=epoch, train_mse=train_mse, val_mse=val_mse)

        if val_mse < best_val:
            best, best_val, best_epoch, stale = params.copy(), val_mse, epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("Early stopping", epoch=epoch, best_epoch=best_epoch)
                break

    logger.info("Training finished", best_epoch=best_epoch, best_val_mse=best_val)
    return Checkpoint(
        params=best,
        scaler=train_set.scaler,
        cluster_model=train_set.cluster_model,
        feature_params=feature_params,
        config=config,
        history=history,
        best_epoch=best_epoch,
    )


def decode_frd(raw: float, scaler: ScalerParams) -> float:
    """Scaled model output to a forward RD: INF below 0.5, else nearest integer >= 1."""
    decoded = float(unscale_targets(np.float64(raw), scaler))
    if decoded < INF_THRESHOLD:
        return INF
    return max(1, int(math.floor(decoded + 0.5)))


def decode_frds(raw: np.ndarray, scaler: ScalerParams) -> List[float]:
    decoded = unscale_targets(np.asarray(raw, dtype=np.float64), scaler)
    return [INF if d < INF_THRESHOLD else max(1, int(math.floor(d + 0.5))) for d in decoded]


def predict_frd(checkpoint: Checkpoint, sample: np.ndarray) -> float:
    """Forward reuse distance for one scaled sample."""
    return decode_frd(model_forward(checkpoint.params, sample), checkpoint.scaler)


def predict_batch(checkpoint: Checkpoint, samples: np.ndarray) -> List[float]:
    """Forward reuse distances for many scaled samples."""
    return decode_frds(predict_raw(checkpoint.params, samples), checkpoint.scaler)


def evaluate(checkpoint: Checkpoint, dataset: Dataset) -> Tuple[EvaluationReport, pd.DataFrame]:
    """
    Compare predictions with the ground truth of a dataset.

    Returns the summary and one row per sample with scaled and decoded
    values (INF decoded as 0).
    """
    raw = predict_raw(checkpoint.params, dataset.features)
    truth_scaled = dataset.targets.astype(np.float64)
    predicted = decode_frds(raw, checkpoint.scaler)
    truth = decode_frds(truth_scaled, checkpoint.scaler)

    matches = [p == t for p, t in zip(predicted, truth)]
    inf_truth = [p == INF for p, t in zip(predicted, truth) if t == INF]
    report = EvaluationReport(
        samples=len(dataset),
        mse=batch_loss(raw, truth_scaled) if len(dataset) else 0.0,
        accuracy=float(np.mean(matches)) if matches else 0.0,
        inf_recall=float(np.mean(inf_truth)) if inf_truth else None,
    )
    frame = pd.DataFrame(
        {
            "origin_time": dataset.origin_times,
            "truth_scaled": truth_scaled,
            "pred_scaled": raw,
            "truth_frd": [0 if t == INF else int(t) for t in truth],
            "pred_frd": [0 if p == INF else int(p) for p in predicted],
        }
    )
    logger.info("Evaluation finished", **report.model_dump())
    return report, frame

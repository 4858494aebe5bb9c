"""
From a trace to scaled training samples.

Features and targets are min-max scaled to [-1, 1]; INF distances are encoded
as 0 first, and reuse-distance dimensions keep N <= 0, so INF always lands
on -1.
"""
import math
from typing import BinaryIO, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.shared.exceptions import ValidationError
from src.shared.logging import get_logger
from src.shared.schemas import FeatureIndex, NUM_FEATURES, TARGET_DIM
from src.services.trace_io.schemas import Trace
from src.services.locality.schemas import FeatureParams
from src.services.locality.service import FeatureStream, address_deltas, forward_rd
from src.services.clustering.schemas import ClusterModel
from src.services.clustering.service import DEFAULT_K_RANGE, assign_many, auto_partition
from .schemas import Dataset, ScalerParams

logger = get_logger(__name__)

# Dimensions that carry reuse distances (INF encoded as 0)
RD_DIMS = (int(FeatureIndex.RD), int(FeatureIndex.PENULT_RD), TARGET_DIM)


def build_feature_matrix(
    trace: Trace,
    k_avg: Optional[int] = 100,
    k_freq: int = 50,
    cluster_model: Optional[ClusterModel] = None,
) -> np.ndarray:
    """
    One row per access: (addr_delta, rd, penult_rd, win_avg_rd, win_freq,
    cluster_id), INF kept as inf. Rows come from the same FeatureStream the
    online simulator uses.
    """
    stream = FeatureStream(k_avg=k_avg, k_freq=k_freq)
    rows = np.array([stream.push(block).as_row() for block in trace.blocks], dtype=np.float64)
    rows = rows.reshape(len(trace), NUM_FEATURES)
    if cluster_model is not None:
        rows[:, FeatureIndex.CLUSTER_ID] = assign_many(cluster_model, address_deltas(trace))
    return rows


def encode_inf(values: np.ndarray) -> np.ndarray:
    """Replace INF distances by 0."""
    values = np.asarray(values, dtype=np.float64)
    return np.where(np.isinf(values), 0.0, values)


def fit_scaler(features: np.ndarray, targets: np.ndarray, rows: Optional[int] = None) -> ScalerParams:
    """Fit min/max on the first `rows` accesses (all if None)."""
    rows = len(targets) if rows is None else rows
    if rows < 1:
        raise ValidationError("scaler needs at least one row")
    x = encode_inf(features[:rows])
    y = encode_inf(targets[:rows])
    mins = np.append(x.min(axis=0), y.min())
    maxs = np.append(x.max(axis=0), y.max())
    for dim in RD_DIMS:
        mins[dim] = min(mins[dim], 0.0)
    return ScalerParams(mins=mins.tolist(), maxs=maxs.tolist())


def _bounds(scaler: ScalerParams, dims: slice | int) -> Tuple[np.ndarray, np.ndarray]:
    return np.asarray(scaler.mins)[dims], np.asarray(scaler.maxs)[dims]


def _scale(values: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    span = high - low
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, -1.0 + 2.0 * (values - low) / safe, 0.0)
    return np.clip(scaled, -1.0, 1.0)


def _unscale(scaled: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    return low + (np.asarray(scaled, dtype=np.float64) + 1.0) * (high - low) / 2.0


def scale(value: float, dim: int, scaler: ScalerParams) -> float:
    """Map a raw value of one dimension into [-1, 1] (clamped)."""
    low, high = _bounds(scaler, dim)
    raw = 0.0 if math.isinf(value) else value
    return float(_scale(np.float64(raw), low, high))


def unscale(scaled: float, dim: int, scaler: ScalerParams) -> float:
    """Inverse of scale on the fitted range."""
    low, high = _bounds(scaler, dim)
    return float(_unscale(scaled, low, high))


def scale_features(features: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    """Scale raw (..., 6) feature rows."""
    low, high = _bounds(scaler, slice(0, NUM_FEATURES))
    return _scale(encode_inf(features), low, high)


def scale_targets(targets: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    low, high = _bounds(scaler, TARGET_DIM)
    return _scale(encode_inf(targets), low, high)


def unscale_targets(scaled: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    low, high = _bounds(scaler, TARGET_DIM)
    return _unscale(np.clip(scaled, -1.0, 1.0), low, high)


def train_pool_size(count: int, ratio: float) -> int:
    """Samples in the training pool of an ordered ratio split."""
    return min(count, int(math.floor(ratio * count + 1e-9)))


def make_samples(
    features: np.ndarray,
    targets: np.ndarray,
    sequence_length: int,
    cluster_model: ClusterModel,
    train_ratio: float = 0.8,
    scaler: Optional[ScalerParams] = None,
) -> Dataset:
    """
    One sample per t in [sequence_length-1, n-1]: feature rows
    t-sequence_length+1..t and the scaled forward RD at t.

    Without an explicit scaler, one is fitted on the accesses that feed the
    training pool (the first train_ratio of the samples) and applied, with
    clamping, to the rest.
    """
    n = len(features)
    if len(targets) != n:
        raise ValidationError(f"{n} feature rows but {len(targets)} targets")
    if sequence_length < 1:
        raise ValidationError("sequence_length must be >= 1")
    if sequence_length > n:
        raise ValidationError(
            f"sequence_length {sequence_length} exceeds trace length {n}",
            details={"sequence_length": sequence_length, "length": n},
        )

    count = n - sequence_length + 1
    if scaler is None:
        train_count = train_pool_size(count, train_ratio)
        rows = train_count + sequence_length - 1 if train_count else n
        scaler = fit_scaler(features, targets, rows)

    scaled = scale_features(features, scaler)
    windows = sliding_window_view(scaled, sequence_length, axis=0).transpose(0, 2, 1)
    dataset = Dataset(
        features=np.ascontiguousarray(windows, dtype=np.float32),
        targets=scale_targets(np.asarray(targets)[sequence_length - 1:], scaler).astype(np.float32),
        origin_times=np.arange(sequence_length - 1, n, dtype=np.int64),
        sequence_length=sequence_length,
        scaler=scaler,
        cluster_model=cluster_model,
    )
    logger.info("Samples generated", samples=count, sequence_length=sequence_length)
    return dataset


def build_dataset(
    trace: Trace,
    sequence_length: int,
    params: FeatureParams = FeatureParams(),
    k_range: Tuple[int, int] = DEFAULT_K_RANGE,
    seed: int = 0,
    train_ratio: float = 0.8,
) -> Dataset:
    """Cluster deltas, extract features and targets, and cut samples."""
    deltas = address_deltas(trace)
    cluster_model = auto_partition(deltas, k_range, seed=seed)
    features = build_feature_matrix(trace, params.k_avg, params.k_freq, cluster_model)
    targets = np.asarray(forward_rd(trace), dtype=np.float64)
    return make_samples(features, targets, sequence_length, cluster_model, train_ratio)


def split(
    dataset: Dataset,
    ratio: float = 0.8,
    train_take: int = 0,
    val_take: int = 0,
) -> Tuple[Dataset, Dataset]:
    """
    Ordered split: the first `ratio` of samples is the training pool, the
    rest the validation pool. Training keeps the LAST train_take samples of
    its pool, validation the FIRST val_take of its pool (0 = whole pool).
    """
    pool = train_pool_size(len(dataset), ratio)
    val_pool = len(dataset) - pool
    train_take = train_take or pool
    val_take = val_take or val_pool
    if train_take > pool or val_take > val_pool:
        raise ValidationError(
            f"takes {train_take}/{val_take} exceed pools {pool}/{val_pool}",
            details={"train_pool": pool, "val_pool": val_pool},
        )
    return dataset.slice(pool - train_take, pool), dataset.slice(pool, pool + val_take)


def export_samples_csv(dataset: Dataset, writer: BinaryIO) -> int:
    """One row per (sample, step) with origin indices; returns the row count."""
    header = "sample,origin_time,step,row_time," + ",".join(
        f"f{i}" for i in range(NUM_FEATURES)
    ) + ",target\n"
    writer.write(header.encode("ascii"))
    rows = 0
    length = dataset.sequence_length
    for index in range(len(dataset)):
        origin = int(dataset.origin_times[index])
        target = repr(float(dataset.targets[index]))
        lines = []
        for step in range(length):
            values = ",".join(repr(float(v)) for v in dataset.features[index, step])
            lines.append(f"{index},{origin},{step},{origin - length + 1 + step},{values},{target}\n")
        writer.write("".join(lines).encode("ascii"))
        rows += length
    return rows

"""
K-means clustering of address deltas and automatic choice of the cluster count.

Clustering runs over the distinct delta values, each weighted by how many
accesses carry it, so the cost depends on the delta vocabulary rather than
on the trace length.
"""
from typing import BinaryIO, Callable, Dict, Sequence, Tuple

import numpy as np

from src.shared.exceptions import ValidationError
from src.shared.logging import get_logger
from src.services.trace_io.schemas import Trace
from src.services.locality.service import address_deltas
from .schemas import ClusterModel

logger = get_logger(__name__)

DEFAULT_K_RANGE: Tuple[int, int] = (2, 16)


def _distinct(deltas: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    if len(deltas) == 0:
        raise ValidationError("cannot cluster an empty delta sequence")
    values, counts = np.unique(np.asarray(deltas, dtype=np.float64), return_counts=True)
    return values, counts.astype(np.float64)


def _nearest(centroids: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Index of the nearest (sorted) centroid; ties go to the lower index."""
    if len(centroids) == 1:
        return np.zeros(len(values), dtype=np.int64)
    right = np.clip(np.searchsorted(centroids, values), 1, len(centroids) - 1)
    left = right - 1
    take_left = (values - centroids[left]) <= (centroids[right] - values)
    return np.where(take_left, left, right).astype(np.int64)


def _inertia(centroids: np.ndarray, values: np.ndarray, weights: np.ndarray) -> float:
    labels = _nearest(centroids, values)
    return float(np.sum(weights * (values - centroids[labels]) ** 2))


def _lloyd_update(centroids: np.ndarray, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Assign each value to its nearest centroid, then move centroids to the weighted means."""
    k = len(centroids)
    labels = _nearest(centroids, values)
    mass = np.bincount(labels, weights=weights, minlength=k)
    moments = np.bincount(labels, weights=weights * values, minlength=k)
    # Empty clusters keep their centroid
    updated = np.where(mass > 0, moments / np.where(mass > 0, mass, 1.0), centroids)
    return np.sort(updated)


def _kmeans_pp(values: np.ndarray, weights: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.choice(len(values), p=weights / weights.sum()))]
    d2 = (values - values[chosen[0]]) ** 2
    for _ in range(1, k):
        p = weights * d2
        idx = int(rng.choice(len(values), p=p / p.sum()))
        chosen.append(idx)
        d2 = np.minimum(d2, (values - values[idx]) ** 2)
    return np.sort(values[chosen])


def kmeans(
    deltas: Sequence[int],
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> ClusterModel:
    """
    Lloyd's algorithm with k-means++ seeding over distinct deltas weighted by
    occurrence count.

    Raises:
        ValidationError: If deltas is empty, k < 1 or k exceeds the number
            of distinct deltas
    """
    values, weights = _distinct(deltas)
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > len(values):
        raise ValidationError(
            f"k={k} exceeds the number of distinct deltas ({len(values)})",
            details={"k": k, "distinct": len(values)},
        )

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(values, weights, k, rng)

    iteration = 0
    for iteration in range(max_iters):
        updated = _lloyd_update(centroids, values, weights)
        shift = float(np.max(np.abs(updated - centroids)))
        centroids = updated
        if shift < tol:
            break

    inertia = _inertia(centroids, values, weights)
    logger.debug("K-means finished", k=k, iterations=iteration + 1, inertia=inertia)
    return ClusterModel(centroids=centroids.tolist(), k=k, seed=seed, inertia=inertia)


def lloyd_step(model: ClusterModel, deltas: Sequence[int]) -> ClusterModel:
    """One further Lloyd iteration from a fitted model."""
    values, weights = _distinct(deltas)
    centroids = _lloyd_update(np.asarray(model.centroids), values, weights)
    return model.model_copy(
        update={"centroids": centroids.tolist(), "inertia": _inertia(centroids, values, weights)}
    )


def assign(model: ClusterModel, delta: int) -> int:
    """Cluster ID of a delta: nearest centroid, ties to the lower ID."""
    return int(_nearest(np.asarray(model.centroids), np.asarray([float(delta)]))[0])


def assign_many(model: ClusterModel, deltas: Sequence[int]) -> np.ndarray:
    """Vectorised assign."""
    return _nearest(np.asarray(model.centroids), np.asarray(deltas, dtype=np.float64))


def population(model: ClusterModel, deltas: Sequence[int]) -> np.ndarray:
    """Number of accesses per cluster."""
    return np.bincount(assign_many(model, deltas), minlength=model.k)


def inertia(model: ClusterModel, deltas: Sequence[int]) -> float:
    """Within-cluster sum of squared distances over all accesses."""
    values, weights = _distinct(deltas)
    return _inertia(np.asarray(model.centroids), values, weights)


def balance_cv(model: ClusterModel, deltas: Sequence[int]) -> float:
    """Coefficient of variation of cluster populations (0 = perfectly even)."""
    counts = population(model, deltas).astype(np.float64)
    return float(counts.std() / counts.mean())


def auto_partition(
    deltas: Sequence[int],
    k_range: Tuple[int, int] = DEFAULT_K_RANGE,
    seed: int = 0,
) -> ClusterModel:
    """
    Run K-means for every k in the inclusive range and keep the model whose
    accesses are most evenly spread over its clusters (lowest population
    coefficient of variation; ties go to the smaller k).

    Both ends of the range are capped at the number of distinct deltas, so a
    trace with a single distinct delta gets one cluster.

    Raises:
        ValidationError: If no k in the range is feasible
    """
    values, _ = _distinct(deltas)
    k_lo = max(1, min(k_range[0], len(values)))
    k_hi = min(k_range[1], len(values))
    if k_lo < k_range[0]:
        logger.warning(
            "Cluster range capped at the distinct delta count",
            k_range=list(k_range),
            distinct=len(values),
        )
    if k_lo > k_hi:
        raise ValidationError(
            f"no feasible cluster count in {k_range} for {len(values)} distinct deltas",
            details={"k_range": list(k_range), "distinct": len(values)},
        )

    best: ClusterModel | None = None
    best_cv = float("inf")
    for k in range(k_lo, k_hi + 1):
        model = kmeans(deltas, k, seed=seed)
        cv = balance_cv(model, deltas)
        logger.debug("Partition candidate", k=k, cv=cv, inertia=model.inertia)
        if cv < best_cv:
            best, best_cv = model, cv

    assert best is not None
    logger.info("Auto-partition selected cluster count", k=best.k, cv=best_cv)
    return best


def export_clusters(trace: Trace, model: ClusterModel, writer: BinaryIO) -> int:
    """Write `time,block,delta,cluster` rows; returns the row count."""
    deltas = address_deltas(trace)
    labels = assign_many(model, deltas)
    writer.write(b"time,block,delta,cluster\n")
    writer.write(
        "".join(
            f"{t},{block},{delta},{label}\n"
            for t, (block, delta, label) in enumerate(zip(trace.blocks, deltas, labels))
        ).encode("ascii")
    )
    return len(deltas)


def make_assigner(model: ClusterModel) -> Callable[[int], int]:
    """assign() bound to a model, memoised per delta value."""
    cache: Dict[int, int] = {}

    def assign_delta(delta: int) -> int:
        label = cache.get(delta)
        if label is None:
            label = cache[delta] = assign(model, delta)
        return label

    return assign_delta

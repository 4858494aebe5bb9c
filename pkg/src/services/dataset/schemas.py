"""
Dataset Pydantic schemas.
"""
from typing import Any, Iterator, List

import numpy as np
from pydantic import Field, model_validator

from src.shared.schemas import ArraySchema, FrozenSchema, NUM_FEATURES
from src.services.clustering.schemas import ClusterModel

# Six features followed by the forward reuse distance target
SCALER_DIMS = NUM_FEATURES + 1


class ScalerParams(FrozenSchema):
    """Per-dimension min (N) and max (M) of the min-max map to [-1, 1]."""
    mins: List[float] = Field(..., min_length=SCALER_DIMS, max_length=SCALER_DIMS)
    maxs: List[float] = Field(..., min_length=SCALER_DIMS, max_length=SCALER_DIMS)

    @model_validator(mode="after")
    def check_bounds(self) -> "ScalerParams":
        if any(m < n for n, m in zip(self.mins, self.maxs)):
            raise ValueError("every max must be >= its min")
        return self


class Sample(ArraySchema):
    """One training sample: sequence_length feature vectors and a target."""
    features: np.ndarray = Field(..., description="(sequence_length, 6) scaled features")
    target: float = Field(..., description="Scaled forward reuse distance")
    origin_time: int = Field(..., ge=0, description="Trace index the sample predicts for")


class Dataset(ArraySchema):
    """Scaled samples of shape (#samples, sequence_length, 6)."""
    features: np.ndarray = Field(..., description="(S, L, 6) float32")
    targets: np.ndarray = Field(..., description="(S,) float32")
    origin_times: np.ndarray = Field(..., description="(S,) int64")
    sequence_length: int = Field(..., ge=1)
    scaler: ScalerParams
    cluster_model: ClusterModel

    @model_validator(mode="after")
    def check_shapes(self) -> "Dataset":
        count = len(self.targets)
        if self.features.shape != (count, self.sequence_length, NUM_FEATURES):
            raise ValueError(
                f"features shape {self.features.shape} does not match "
                f"({count}, {self.sequence_length}, {NUM_FEATURES})"
            )
        if self.origin_times.shape != (count,):
            raise ValueError("origin_times must have one entry per sample")
        return self

    def __len__(self) -> int:
        return len(self.targets)

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.sequence_length == other.sequence_length
            and self.scaler == other.scaler
            and self.cluster_model == other.cluster_model
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.targets, other.targets)
            and np.array_equal(self.origin_times, other.origin_times)
        )

    @property
    def samples(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self.sample(i)

    def sample(self, index: int) -> Sample:
        return Sample(
            features=self.features[index],
            target=float(self.targets[index]),
            origin_time=int(self.origin_times[index]),
        )

    def slice(self, start: int, stop: int) -> "Dataset":
        """Contiguous sub-range of samples sharing scaler and cluster model."""
        return self.model_copy(
            update={
                "features": self.features[start:stop],
                "targets": self.targets[start:stop],
                "origin_times": self.origin_times[start:stop],
            }
        )

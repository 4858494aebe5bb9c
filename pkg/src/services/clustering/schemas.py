"""
Clustering Pydantic schemas.
"""
import math
from typing import List

from pydantic import Field, field_validator, model_validator

from src.shared.schemas import FrozenSchema


class ClusterModel(FrozenSchema):
    """1-D K-means model over address deltas."""
    centroids: List[float] = Field(..., min_length=1, description="Centroids, ascending")
    k: int = Field(..., ge=1, description="Number of clusters")
    seed: int = Field(default=0, description="Seed used for initialization")
    inertia: float = Field(default=0.0, ge=0.0, description="Weighted within-cluster SSE")

    @field_validator("centroids")
    @classmethod
    def check_centroids(cls, value: List[float]) -> List[float]:
        if not all(math.isfinite(c) for c in value):
            raise ValueError("centroids must be finite")
        if any(a > b for a, b in zip(value, value[1:])):
            raise ValueError("centroids must be sorted ascending")
        return value

    @model_validator(mode="after")
    def check_k(self) -> "ClusterModel":
        if len(self.centroids) != self.k:
            raise ValueError("k must equal the number of centroids")
        return self

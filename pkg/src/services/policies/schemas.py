"""
Cache policy Pydantic schemas and the predictor interface.
"""
from typing import List, Optional, Protocol, runtime_checkable

import numpy as np
from pydantic import Field, computed_field, model_validator

from src.shared.schemas import FrozenSchema


class SimResult(FrozenSchema):
    """Outcome of one (policy, cache size) simulation."""
    policy: str = Field(..., description="Policy name")
    cache_size: int = Field(..., ge=1, description="Capacity in blocks")
    accesses: int = Field(..., ge=0)
    misses: int = Field(..., ge=0)

    @model_validator(mode="after")
    def check_counts(self) -> "SimResult":
        if self.misses > self.accesses:
            raise ValueError("misses cannot exceed accesses")
        return self

    @computed_field
    @property
    def miss_ratio(self) -> float:
        return self.misses / self.accesses if self.accesses else 0.0


class Mrc(FrozenSchema):
    """Miss ratio curve of one policy."""
    policy: str
    sizes: List[int] = Field(..., min_length=1, description="Ascending cache sizes in blocks")
    ratios: List[float] = Field(..., min_length=1)
    results: List[SimResult] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_curve(self) -> "Mrc":
        if len(self.sizes) != len(self.ratios):
            raise ValueError("one ratio per size is required")
        if any(a >= b for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("sizes must be strictly ascending")
        if any(not 0.0 <= r <= 1.0 for r in self.ratios):
            raise ValueError("miss ratios must lie in [0, 1]")
        return self


@runtime_checkable
class Predictor(Protocol):
    """
    Forward reuse distance source for prediction-driven eviction.

    predict() is called once per access, in trace order. When
    sequence_length is set, the caller passes the scaled feature window
    ending at that access (zero rows on the left during warm-up); otherwise
    the window argument is None.
    """

    sequence_length: Optional[int]

    def predict(self, index: int, window: Optional[np.ndarray]) -> float:
        ...

"""
Locality Pydantic schemas.
"""
from typing import Dict, List

from pydantic import Field

from src.shared.schemas import FrozenSchema

# Per-access distance: a positive integer, or INF.
RdSeries = List[float]


class FeatureVector(FrozenSchema):
    """The six locality features of one access."""
    addr_delta: int = Field(..., description="Block ID minus previous block ID")
    rd: float = Field(..., description="Backward reuse distance (INF on first access)")
    penult_rd: float = Field(..., description="Reuse distance at the block's previous access")
    win_avg_rd: float = Field(..., ge=0.0, description="Mean finite RD of the block in the window")
    win_freq: int = Field(..., ge=1, description="Occurrences of the block in the window")
    cluster_id: int = Field(default=0, ge=0, description="Address-delta cluster")

    def as_row(self) -> List[float]:
        return [
            float(self.addr_delta),
            self.rd,
            self.penult_rd,
            self.win_avg_rd,
            float(self.win_freq),
            float(self.cluster_id),
        ]


class FeatureParams(FrozenSchema):
    """Window lengths of the sliding-window features."""
    k_avg: int = Field(default=100, ge=1, description="Window for average reuse distance")
    k_freq: int = Field(default=50, ge=1, description="Window for access frequency")


class RdHistogram(FrozenSchema):
    """Reuse distance histogram."""
    finite: Dict[int, int] = Field(default_factory=dict, description="Count per finite distance")
    infinite: int = Field(default=0, ge=0, description="Accesses with INF distance")

    @property
    def total(self) -> int:
        return self.infinite + sum(self.finite.values())

"""
Trace I/O Pydantic schemas.
"""
from typing import Iterator, List, Optional

from pydantic import BaseModel, Field, model_validator

from src.shared.schemas import FrozenSchema


class Access(FrozenSchema):
    """One block reference at a logical time."""
    time: int = Field(..., ge=0, description="Logical time index")
    block: int = Field(..., ge=0, description="Block identifier")


class Trace(BaseModel):
    """An ordered block-access sequence.

    Times are implicit: the access at list position t has time t.
    """
    blocks: List[int] = Field(..., description="Block identifier per access")
    block_size: int = Field(default=4096, gt=0, description="Block size in bytes")
    symbols: Optional[List[str]] = Field(
        default=None, description="Token per block ID for symbolic plain traces"
    )

    @model_validator(mode="after")
    def check_symbols(self) -> "Trace":
        if self.symbols is not None and self.blocks and max(self.blocks) >= len(self.symbols):
            raise ValueError("symbol table does not cover every block")
        return self

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def accesses(self) -> Iterator[Access]:
        for time, block in enumerate(self.blocks):
            yield Access(time=time, block=block)

    def reversed(self) -> "Trace":
        """The same accesses in reverse order."""
        return self.model_copy(update={"blocks": self.blocks[::-1]})

    def tokens(self) -> List[str]:
        """Plain-format token of every access."""
        if self.symbols is None:
            return [str(block) for block in self.blocks]
        return [self.symbols[block] for block in self.blocks]


class TraceStats(BaseModel):
    """Summary statistics of a trace."""
    length: int = Field(..., ge=1, description="Number of accesses")
    unique_blocks: int = Field(..., ge=1, description="Distinct blocks")
    mean_accesses_per_block: float = Field(..., description="length / unique_blocks")
    unique_deltas: int = Field(..., ge=1, description="Distinct address deltas")
    delta_compression_ratio: float = Field(
        ..., description="unique_deltas / unique_blocks - 1 (negative = gain)"
    )

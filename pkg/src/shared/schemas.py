"""
Shared Pydantic schemas and constants.
"""
import math
from enum import Enum
from typing import Final

from pydantic import BaseModel, ConfigDict


# Sentinel for an infinite (never / not yet) reuse distance.
INF: Final[float] = math.inf


class FrozenSchema(BaseModel):
    """Base schema for immutable value objects."""

    model_config = ConfigDict(frozen=True, use_enum_values=True)


class ArraySchema(BaseModel):
    """Base schema for models carrying numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True)


# Enums
class TraceFormat(str, Enum):
    """Supported trace file formats."""
    PLAIN = "plain"
    MSR = "msr"


class PolicyName(str, Enum):
    """Cache replacement policies."""
    LRU = "lru"
    LFU = "lfu"
    TWO_Q = "2q"
    ARC = "arc"
    OPT = "opt"
    POPT = "popt"


class FeatureIndex(int, Enum):
    """Column of a feature vector inside a sample matrix."""
    ADDR_DELTA = 0
    RD = 1
    PENULT_RD = 2
    WIN_AVG_RD = 3
    WIN_FREQ = 4
    CLUSTER_ID = 5


NUM_FEATURES: Final[int] = 6

# Scaler dimension of the forward reuse distance target.
TARGET_DIM: Final[int] = NUM_FEATURES

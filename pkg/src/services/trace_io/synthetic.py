"""
Synthetic traces for fixtures and desk-scale experiments.
"""
from typing import List

import numpy as np

from .schemas import Trace


def cyclic_trace(length: int, period: int = 3) -> Trace:
    """Blocks 0..period-1 repeated; every forward reuse distance is `period`."""
    return Trace(blocks=[t % period for t in range(length)])


def random_trace(length: int, alphabet: int, seed: int = 0) -> Trace:
    """Uniformly random blocks drawn from `alphabet` distinct IDs."""
    rng = np.random.default_rng(seed)
    return Trace(blocks=rng.integers(0, alphabet, size=length).tolist())


def phased_trace(
    length: int = 20_000,
    period: int = 64,
    loop_phase: int = 1_500,
    scan_phase: int = 500,
) -> Trace:
    """
    Alternate a looping phase over `period` hot blocks with a scan phase over
    blocks that are never referenced again.
    """
    blocks: List[int] = []
    next_cold = period
    while len(blocks) < length:
        blocks.extend(t % period for t in range(loop_phase))
        blocks.extend(range(next_cold, next_cold + scan_phase))
        next_cold += scan_phase
    return Trace(blocks=blocks[:length])

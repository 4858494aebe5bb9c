"""
Reuse distance and per-access locality features.

Every function is a single pass over the trace using hash maps keyed by
block; sliding windows keep per-block counters so each step is O(1)
amortized.
"""
from collections import Counter, defaultdict, deque
from typing import BinaryIO, Callable, Deque, Dict, List, Optional, Tuple

from src.shared.exceptions import ValidationError
from src.shared.schemas import INF
from src.services.trace_io.schemas import Trace
from .schemas import FeatureVector, RdHistogram, RdSeries


def _check_window(k: Optional[int]) -> None:
    if k is not None and k < 1:
        raise ValidationError(f"window length must be >= 1, got {k}")


def backward_rd(trace: Trace) -> RdSeries:
    """rd[t] = t - previous time of block[t]; INF on a first access."""
    last_time: Dict[int, int] = {}
    rd: RdSeries = []
    for t, block in enumerate(trace.blocks):
        prev = last_time.get(block)
        rd.append(INF if prev is None else t - prev)
        last_time[block] = t
    return rd


def forward_rd(trace: Trace) -> RdSeries:
    """frd[t] = next time of block[t] - t; INF on a last occurrence."""
    next_time: Dict[int, int] = {}
    frd: RdSeries = [INF] * len(trace)
    for t in range(len(trace) - 1, -1, -1):
        block = trace.blocks[t]
        nxt = next_time.get(block)
        if nxt is not None:
            frd[t] = nxt - t
        next_time[block] = t
    return frd


def address_deltas(trace: Trace) -> List[int]:
    """delta[0] = 0; delta[t] = block[t] - block[t-1]."""
    blocks = trace.blocks
    return [0] + [blocks[t] - blocks[t - 1] for t in range(1, len(blocks))]


def penultimate_rd(trace: Trace, rd: RdSeries) -> RdSeries:
    """Reuse distance recorded at the same block's previous access."""
    last_rd: Dict[int, float] = {}
    prd: RdSeries = []
    for block, distance in zip(trace.blocks, rd):
        prd.append(last_rd.get(block, INF))
        last_rd[block] = distance
    return prd


class SlidingAverage:
    """Per-block mean of finite reuse distances over the last k accesses.

    The window includes the current access. k=None keeps the whole history.
    """

    def __init__(self, k: Optional[int]):
        _check_window(k)
        self.k = k
        self._window: Deque[Tuple[int, float]] = deque()
        self._count: Dict[int, int] = defaultdict(int)
        self._total: Dict[int, float] = defaultdict(int)

    def push(self, block: int, rd: float) -> float:
        if rd != INF:
            self._count[block] += 1
            self._total[block] += rd
        if self.k is not None:
            self._window.append((block, rd))
            if len(self._window) > self.k:
                old_block, old_rd = self._window.popleft()
                if old_rd != INF:
                    self._count[old_block] -= 1
                    self._total[old_block] -= old_rd
        count = self._count[block]
        return self._total[block] / count if count else 0.0


class SlidingFrequency:
    """Occurrences of a block among the last k accesses, current one included."""

    def __init__(self, k: int):
        _check_window(k)
        self.k = k
        self._window: Deque[int] = deque()
        self._count: Dict[int, int] = defaultdict(int)

    def push(self, block: int) -> int:
        self._window.append(block)
        self._count[block] += 1
        if len(self._window) > self.k:
            self._count[self._window.popleft()] -= 1
        return self._count[block]


def window_avg_rd(trace: Trace, rd: RdSeries, k: Optional[int] = 100) -> List[float]:
    """Average finite RD of block[t] over the window ending at t; 0 if none."""
    window = SlidingAverage(k)
    return [window.push(block, distance) for block, distance in zip(trace.blocks, rd)]


def window_freq(trace: Trace, k: int = 50) -> List[int]:
    """Occurrences of block[t] among the last k accesses including t."""
    window = SlidingFrequency(k)
    return [window.push(block) for block in trace.blocks]


def rd_histogram(rd: RdSeries) -> RdHistogram:
    """Count accesses per finite reuse distance, plus INF accesses."""
    counts = Counter(rd)
    infinite = counts.pop(INF, 0)
    return RdHistogram(finite={int(d): c for d, c in sorted(counts.items())}, infinite=infinite)


def export_rd_timeseries(trace: Trace, writer: BinaryIO) -> int:
    """Write `time,rd` rows with INF as 0; returns the row count."""
    rd = backward_rd(trace)
    writer.write(b"time,rd\n")
    writer.write(
        "".join(f"{t},{0 if d == INF else int(d)}\n" for t, d in enumerate(rd)).encode("ascii")
    )
    return len(rd)


class FeatureStream:
    """
    Online feature extractor.

    Holds the per-trace state (last access times, previous reuse distances,
    sliding windows) so each pushed access yields its FeatureVector in O(1)
    amortized. Single consumer.
    """

    def __init__(
        self,
        k_avg: Optional[int] = 100,
        k_freq: int = 50,
        assign_cluster: Optional[Callable[[int], int]] = None,
    ):
        self._avg = SlidingAverage(k_avg)
        self._freq = SlidingFrequency(k_freq)
        self._assign = assign_cluster
        self._last_time: Dict[int, int] = {}
        self._last_rd: Dict[int, float] = {}
        self._prev_block: Optional[int] = None
        self.time = 0

    def push(self, block: int) -> FeatureVector:
        t = self.time
        prev = self._last_time.get(block)
        rd = INF if prev is None else float(t - prev)
        penult = self._last_rd.get(block, INF)
        delta = 0 if self._prev_block is None else block - self._prev_block

        vector = FeatureVector.model_construct(
            addr_delta=delta,
            rd=rd,
            penult_rd=penult,
            win_avg_rd=self._avg.push(block, rd),
            win_freq=self._freq.push(block),
            cluster_id=self._assign(delta) if self._assign else 0,
        )

        self._last_time[block] = t
        self._last_rd[block] = rd
        self._prev_block = block
        self.time += 1
        return vector

"""
Trace-driven cache simulators.

Every simulator counts misses of a demand-fetch cache of `cache_size`
blocks. Where a policy has to choose between equal candidates, the lowest
block ID goes first. With debug=True each access re-checks the structural
bounds of the policy and raises SimulationError on a violation.
"""
import heapq
import math
from collections import OrderedDict
from functools import lru_cache
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from src.shared.exceptions import PredictorError, ReuseLearnError, SimulationError, ValidationError
from src.shared.logging import get_logger
from src.shared.schemas import INF, NUM_FEATURES, PolicyName
from src.services.trace_io.schemas import Trace
from src.services.locality.schemas import FeatureParams
from src.services.locality.service import FeatureStream
from src.services.clustering.schemas import ClusterModel
from src.services.clustering.service import make_assigner
from src.services.dataset.schemas import ScalerParams
from src.services.dataset.service import scale_features
from .schemas import Mrc, Predictor, SimResult

logger = get_logger(__name__)

TWO_Q_MIN_SIZE = 4
MAX_BRUTE_FORCE_LENGTH = 30


def _check_size(cache_size: int) -> None:
    if cache_size < 1:
        raise ValidationError(f"cache size must be >= 1 block, got {cache_size}")


def _check_resident(policy: str, time: int, resident: int, cache_size: int) -> None:
    if resident > cache_size:
        raise SimulationError(
            f"{policy}: {resident} resident blocks exceed capacity {cache_size}",
            details={"policy": policy, "time": time},
        )


def _result(policy: PolicyName, trace: Trace, cache_size: int, misses: int) -> SimResult:
    return SimResult(policy=policy.value, cache_size=cache_size, accesses=len(trace), misses=misses)


def simulate_lru(trace: Trace, cache_size: int, debug: bool = False) -> SimResult:
    """Least recently used."""
    _check_size(cache_size)
    cache: "OrderedDict[int, None]" = OrderedDict()
    misses = 0
    for t, block in enumerate(trace.blocks):
        if block in cache:
            cache.move_to_end(block)
        else:
            misses += 1
            if len(cache) >= cache_size:
                cache.popitem(last=False)
            cache[block] = None
        if debug:
            _check_resident("lru", t, len(cache), cache_size)
    return _result(PolicyName.LRU, trace, cache_size, misses)


def simulate_lfu(trace: Trace, cache_size: int, debug: bool = False) -> SimResult:
    """
    Least frequently used. Ties go to the least recently used block;
    frequencies count only the current residency.
    """
    _check_size(cache_size)
    state: Dict[int, Tuple[int, int]] = {}
    heap: List[Tuple[int, int, int]] = []
    misses = 0
    for t, block in enumerate(trace.blocks):
        if block in state:
            freq = state[block][0] + 1
        else:
            misses += 1
            if len(state) >= cache_size:
                while True:
                    freq_v, last_v, victim = heapq.heappop(heap)
                    if state.get(victim) == (freq_v, last_v):
                        del state[victim]
                        break
            freq = 1
        state[block] = (freq, t)
        heapq.heappush(heap, (freq, t, block))
        if len(heap) > 4 * cache_size + 64:
            heap = [(f, last, b) for b, (f, last) in state.items()]
            heapq.heapify(heap)
        if debug:
            _check_resident("lfu", t, len(state), cache_size)
    return _result(PolicyName.LFU, trace, cache_size, misses)


def two_q_sizes(cache_size: int, kin_frac: float = 0.25, kout_frac: float = 0.5) -> Tuple[int, int]:
    """(Kin, Kout) for a 2Q cache; raises ValidationError below the minimum size."""
    if cache_size < TWO_Q_MIN_SIZE:
        raise ValidationError(
            f"2Q needs at least {TWO_Q_MIN_SIZE} blocks, got {cache_size}",
            details={"cache_size": cache_size},
        )
    kin = max(1, int(math.floor(kin_frac * cache_size)))
    kout = max(1, int(math.floor(kout_frac * cache_size)))
    if kin >= cache_size:
        raise ValidationError(f"kin_frac {kin_frac} leaves no room for Am")
    return kin, kout


def simulate_2q(
    trace: Trace,
    cache_size: int,
    kin_frac: float = 0.25,
    kout_frac: float = 0.5,
    debug: bool = False,
) -> SimResult:
    """
    Full 2Q: A1in is a FIFO of first-time blocks, A1out a FIFO of ghost
    entries evicted from A1in, Am an LRU of blocks re-referenced after
    leaving A1in. A ghost hit is a miss that loads the block into Am.
    """
    _check_size(cache_size)
    kin, kout = two_q_sizes(cache_size, kin_frac, kout_frac)
    a1in: "OrderedDict[int, None]" = OrderedDict()
    a1out: "OrderedDict[int, None]" = OrderedDict()
    am: "OrderedDict[int, None]" = OrderedDict()

    def reclaim() -> None:
        if len(a1in) + len(am) < cache_size:
            return
        if len(a1in) > kin or not am:
            victim, _ = a1in.popitem(last=False)
            a1out[victim] = None
            if len(a1out) > kout:
                a1out.popitem(last=False)
        else:
            am.popitem(last=False)

    misses = 0
    for t, block in enumerate(trace.blocks):
        if block in am:
            am.move_to_end(block)
        elif block in a1in:
            pass
        elif block in a1out:
            misses += 1
            del a1out[block]
            reclaim()
            am[block] = None
        else:
            misses += 1
            reclaim()
            a1in[block] = None
        if debug:
            _check_resident("2q", t, len(a1in) + len(am), cache_size)
            if len(a1out) > kout:
                raise SimulationError("2q: A1out exceeds Kout", details={"time": t})
    return _result(PolicyName.TWO_Q, trace, cache_size, misses)


class _Arc:
    """Adaptive replacement cache state (lists ordered LRU first)."""

    def __init__(self, cache_size: int):
        self.c = cache_size
        self.p = 0.0
        self.t1: "OrderedDict[int, None]" = OrderedDict()
        self.t2: "OrderedDict[int, None]" = OrderedDict()
        self.b1: "OrderedDict[int, None]" = OrderedDict()
        self.b2: "OrderedDict[int, None]" = OrderedDict()

    def _replace(self, in_b2: bool) -> None:
        if len(self.t1) + len(self.t2) < self.c:
            return
        t1 = len(self.t1)
        if t1 >= 1 and ((in_b2 and t1 == self.p) or t1 > self.p or not self.t2):
            victim, _ = self.t1.popitem(last=False)
            self.b1[victim] = None
        else:
            victim, _ = self.t2.popitem(last=False)
            self.b2[victim] = None

    def access(self, x: int) -> bool:
        """Process one reference; returns True on a hit."""
        if x in self.t1:
            del self.t1[x]
            self.t2[x] = None
            return True
        if x in self.t2:
            self.t2.move_to_end(x)
            return True

        if x in self.b1:
            self.p = min(float(self.c), self.p + max(len(self.b2) / len(self.b1), 1.0))
            self._replace(in_b2=False)
            del self.b1[x]
            self.t2[x] = None
            return False
        if x in self.b2:
            self.p = max(0.0, self.p - max(len(self.b1) / len(self.b2), 1.0))
            self._replace(in_b2=True)
            del self.b2[x]
            self.t2[x] = None
            return False

        l1 = len(self.t1) + len(self.b1)
        total = l1 + len(self.t2) + len(self.b2)
        if l1 == self.c:
            if len(self.t1) < self.c:
                self.b1.popitem(last=False)
                self._replace(in_b2=False)
            else:
                self.t1.popitem(last=False)
        elif total >= self.c:
            if total >= 2 * self.c and self.b2:
                self.b2.popitem(last=False)
            self._replace(in_b2=False)
        self.t1[x] = None
        return False

    def check(self, time: int) -> None:
        resident = len(self.t1) + len(self.t2)
        _check_resident("arc", time, resident, self.c)
        if len(self.t1) + len(self.b1) > self.c or resident + len(self.b1) + len(self.b2) > 2 * self.c:
            raise SimulationError(
                "arc: directory bounds violated",
                details={
                    "time": time,
                    "t1": len(self.t1),
                    "t2": len(self.t2),
                    "b1": len(self.b1),
                    "b2": len(self.b2),
                },
            )


def simulate_arc(trace: Trace, cache_size: int, debug: bool = False) -> SimResult:
    """Adaptive Replacement Cache with recency/frequency lists and ghost lists."""
    _check_size(cache_size)
    arc = _Arc(cache_size)
    misses = 0
    for t, block in enumerate(trace.blocks):
        if not arc.access(block):
            misses += 1
        if debug:
            arc.check(t)
    return _result(PolicyName.ARC, trace, cache_size, misses)


class _FarthestFirst:
    """Resident blocks keyed by a next-access time; evicts the largest, lowest block ID on ties."""

    def __init__(self, cache_size: int):
        self.cache_size = cache_size
        self.stored: Dict[int, int] = {}
        self._heap: List[Tuple[int, int]] = []

    def __contains__(self, block: int) -> bool:
        return block in self.stored

    def __len__(self) -> int:
        return len(self.stored)

    def set(self, block: int, when: int) -> None:
        self.stored[block] = when
        heapq.heappush(self._heap, (-when, block))
        if len(self._heap) > 4 * self.cache_size + 64:
            self._heap = [(-w, b) for b, w in self.stored.items()]
            heapq.heapify(self._heap)

    def evict(self) -> int:
        while True:
            neg_when, block = heapq.heappop(self._heap)
            if self.stored.get(block) == -neg_when:
                del self.stored[block]
                return block


def next_use_times(trace: Trace) -> List[int]:
    """Time of the next reference to block[t]; len(trace) when there is none."""
    n = len(trace)
    following: Dict[int, int] = {}
    times = [n] * n
    for t in range(n - 1, -1, -1):
        block = trace.blocks[t]
        times[t] = following.get(block, n)
        following[block] = t
    return times


def simulate_opt(trace: Trace, cache_size: int, debug: bool = False) -> SimResult:
    """Belady's optimal policy: evict the block whose next use is farthest away."""
    _check_size(cache_size)
    cache = _FarthestFirst(cache_size)
    misses = 0
    for t, (block, nxt) in enumerate(zip(trace.blocks, next_use_times(trace))):
        if block not in cache:
            misses += 1
            if len(cache) >= cache_size:
                cache.evict()
        cache.set(block, nxt)
        if debug:
            _check_resident("opt", t, len(cache), cache_size)
    return _result(PolicyName.OPT, trace, cache_size, misses)


class _WindowBuilder:
    """Scaled feature window ending at the current access, zero-padded on the left."""

    def __init__(
        self,
        sequence_length: int,
        feature_params: FeatureParams,
        cluster_model: ClusterModel,
        scaler: ScalerParams,
    ):
        self.stream = FeatureStream(
            k_avg=feature_params.k_avg,
            k_freq=feature_params.k_freq,
            assign_cluster=make_assigner(cluster_model),
        )
        self.scaler = scaler
        self.window = np.zeros((sequence_length, NUM_FEATURES))

    def push(self, block: int) -> np.ndarray:
        row = np.asarray(self.stream.push(block).as_row(), dtype=np.float64)
        self.window[:-1] = self.window[1:]
        self.window[-1] = scale_features(row, self.scaler)
        return self.window


def _checked_prediction(predictor: Predictor, index: int, window: Optional[np.ndarray]) -> float:
    try:
        value = predictor.predict(index, window)
    except ReuseLearnError:
        raise
    except Exception as e:
        raise PredictorError(f"predictor failed: {e}", index=index) from e
    if value != INF and (not math.isfinite(value) or value < 1):
        raise PredictorError(f"invalid forward reuse distance {value!r}", index=index)
    return value


def simulate_popt(
    trace: Trace,
    cache_size: int,
    predictor: Predictor,
    feature_params: Optional[FeatureParams] = None,
    cluster_model: Optional[ClusterModel] = None,
    scaler: Optional[ScalerParams] = None,
    debug: bool = False,
) -> SimResult:
    """
    Prediction-driven OPT.

    Every access stores i + predicted forward RD as the block's next access
    time (i + n + 1 for INF, past the end of the trace), hit or miss. A miss
    on a full cache evicts the block with the largest stored time.
    Predictors with a sequence_length receive the online feature window and
    need the feature parameters, cluster model and scaler the model was
    trained with.
    """
    _check_size(cache_size)
    n = len(trace)
    windows: Optional[_WindowBuilder] = None
    if predictor.sequence_length:
        if cluster_model is None or scaler is None:
            raise ValidationError("a windowed predictor needs a cluster model and a scaler")
        windows = _WindowBuilder(
            predictor.sequence_length, feature_params or FeatureParams(), cluster_model, scaler
        )

    cache = _FarthestFirst(cache_size)
    misses = 0
    for i, block in enumerate(trace.blocks):
        window = windows.push(block) if windows is not None else None
        fwd_rd = _checked_prediction(predictor, i, window)
        if block not in cache:
            misses += 1
            if len(cache) >= cache_size:
                cache.evict()
        cache.set(block, i + n + 1 if fwd_rd == INF else i + int(fwd_rd))
        if debug:
            _check_resident("popt", i, len(cache), cache_size)
    return _result(PolicyName.POPT, trace, cache_size, misses)


def brute_force_min_misses(trace: Trace, cache_size: int) -> int:
    """Minimum achievable misses, by exhaustive search over eviction choices."""
    _check_size(cache_size)
    if len(trace) > MAX_BRUTE_FORCE_LENGTH:
        raise ValidationError(
            f"exhaustive search is limited to {MAX_BRUTE_FORCE_LENGTH} accesses, got {len(trace)}"
        )
    blocks = tuple(trace.blocks)

    @lru_cache(maxsize=None)
    def solve(pos: int, cache: FrozenSet[int]) -> int:
        if pos == len(blocks):
            return 0
        block = blocks[pos]
        if block in cache:
            return solve(pos + 1, cache)
        if len(cache) < cache_size:
            return 1 + solve(pos + 1, cache | {block})
        return 1 + min(solve(pos + 1, (cache - {victim}) | {block}) for victim in cache)

    return solve(0, frozenset())


def simulate(
    policy: PolicyName | str,
    trace: Trace,
    cache_size: int,
    predictor: Optional[Predictor] = None,
    feature_params: Optional[FeatureParams] = None,
    cluster_model: Optional[ClusterModel] = None,
    scaler: Optional[ScalerParams] = None,
    debug: bool = False,
) -> SimResult:
    """Run one policy at one cache size."""
    policy = PolicyName(policy)
    if policy == PolicyName.POPT:
        if predictor is None:
            raise ValidationError("popt needs a predictor")
        return simulate_popt(trace, cache_size, predictor, feature_params, cluster_model, scaler, debug)
    simulators = {
        PolicyName.LRU: simulate_lru,
        PolicyName.LFU: simulate_lfu,
        PolicyName.TWO_Q: simulate_2q,
        PolicyName.ARC: simulate_arc,
        PolicyName.OPT: simulate_opt,
    }
    return simulators[policy](trace, cache_size, debug=debug)


def mrc(
    trace: Trace,
    policy: PolicyName | str,
    sizes: Sequence[int],
    predictor: Optional[Predictor] = None,
    feature_params: Optional[FeatureParams] = None,
    cluster_model: Optional[ClusterModel] = None,
    scaler: Optional[ScalerParams] = None,
    debug: bool = False,
) -> Mrc:
    """
    Miss ratio curve: one independent simulation per size.

    Raises:
        ValidationError: If sizes is empty
        SimulationError: If an LRU or OPT curve increases with size
    """
    policy = PolicyName(policy)
    if not sizes:
        raise ValidationError("at least one cache size is required")
    ordered = sorted(set(sizes))
    results = [
        simulate(policy, trace, size, predictor, feature_params, cluster_model, scaler, debug)
        for size in ordered
    ]
    ratios = [r.miss_ratio for r in results]
    if policy in (PolicyName.LRU, PolicyName.OPT):
        for smaller, larger in zip(results, results[1:]):
            if larger.misses > smaller.misses:
                raise SimulationError(
                    f"{policy.value} misses grew from {smaller.misses} at {smaller.cache_size} "
                    f"to {larger.misses} at {larger.cache_size}",
                    details={"policy": policy.value},
                )
    logger.info("MRC computed", policy=policy.value, sizes=ordered, ratios=ratios)
    return Mrc(policy=policy.value, sizes=ordered, ratios=ratios, results=results)


def default_sizes(trace: Trace, points: int = 8) -> List[int]:
    """Geometric sweep from 1 block to the number of distinct blocks."""
    if points < 1:
        raise ValidationError("points must be >= 1")
    unique = len(set(trace.blocks))
    if unique <= 1:
        return [1]
    sweep = np.geomspace(1, unique, num=points)
    return sorted({int(round(s)) for s in sweep})


def blocks_for_bytes(nbytes: int, block_size: int = 4096) -> int:
    """Cache capacity in whole blocks for a byte-denominated size."""
    if block_size < 1:
        raise ValidationError("block size must be >= 1")
    blocks = nbytes // block_size
    if blocks < 1:
        raise ValidationError(
            f"{nbytes} bytes hold no {block_size}-byte block",
            details={"bytes": nbytes, "block_size": block_size},
        )
    return blocks

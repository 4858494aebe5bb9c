"""
Simulation result tables (CSV) and charts (SVG).
"""
from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from src.shared.exceptions import ArtifactFormatError, NotFoundError  # noqa: E402
from src.shared.logging import get_logger  # noqa: E402
from src.shared.schemas import INF  # noqa: E402
from src.services.locality.schemas import RdSeries  # noqa: E402
from .schemas import Mrc, SimResult  # noqa: E402

logger = get_logger(__name__)

RESULT_COLUMNS = ["policy", "cache_size_blocks", "accesses", "misses", "miss_ratio"]
RD_POINTS_GID = "rd-points"

# Stable element IDs and no timestamp, so equal inputs give equal SVG bytes
plt.rcParams["svg.hashsalt"] = "reuse-learn"
_SVG_METADATA = {"Date": None}


def results_frame(results: Sequence[SimResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            [r.policy, r.cache_size, r.accesses, r.misses, r.miss_ratio]
            for r in results
        ],
        columns=RESULT_COLUMNS,
    )


def write_results_csv(results: Sequence[SimResult], path: Path) -> None:
    """policy,cache_size_blocks,accesses,misses,miss_ratio; one row per simulation."""
    path.parent.mkdir(parents=True, exist_ok=True)
    results_frame(results).to_csv(path, index=False)
    logger.info("Results written", path=str(path), rows=len(results))


def read_results_csv(path: Path) -> List[SimResult]:
    """Inverse of write_results_csv."""
    if not path.exists():
        raise NotFoundError(f"results file not found: {path}")
    frame = pd.read_csv(path, dtype={"policy": str})
    missing = set(RESULT_COLUMNS) - set(frame.columns)
    if missing:
        raise ArtifactFormatError(
            f"results file lacks columns {sorted(missing)}", details={"path": str(path)}
        )
    return [
        SimResult(
            policy=row.policy,
            cache_size=int(row.cache_size_blocks),
            accesses=int(row.accesses),
            misses=int(row.misses),
        )
        for row in frame.itertuples(index=False)
    ]


def plot_mrc_svg(curves: Sequence[Mrc], path: Path, title: str = "Miss ratio curves") -> None:
    """One line per policy, cache size in blocks against miss ratio."""
    fig, ax = plt.subplots(figsize=(8, 5))
    try:
        for curve in curves:
            line, = ax.plot(curve.sizes, curve.ratios, marker="o", label=curve.policy)
            line.set_gid(f"mrc-{curve.policy}")
        ax.set_xlabel("Cache size (blocks)")
        ax.set_ylabel("Miss ratio")
        ax.set_title(title)
        ax.set_ylim(0.0, 1.0)
        ax.grid(True)
        if curves:
            ax.legend()
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    finally:
        plt.close(fig)
    logger.info("MRC chart written", path=str(path), policies=[c.policy for c in curves])


def plot_rd_scatter_svg(rd: RdSeries, path: Path, title: str = "Reuse distance") -> None:
    """One marker per access at (time, rd); INF drawn at 0."""
    values = [0 if d == INF else d for d in rd]
    fig, ax = plt.subplots(figsize=(10, 4))
    try:
        points, = ax.plot(range(len(values)), values, linestyle="none", marker=".", markersize=2)
        points.set_gid(RD_POINTS_GID)
        ax.set_xlabel("Time (access index)")
        ax.set_ylabel("Reuse distance (0 = never)")
        ax.set_title(title)
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    finally:
        plt.close(fig)
    logger.info("RD scatter written", path=str(path), points=len(values))

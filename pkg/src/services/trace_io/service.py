"""
Trace parsing and summary statistics.
"""
import math
from pathlib import Path
from typing import BinaryIO, Dict, List

import pandas as pd

from src.shared.exceptions import NotFoundError, TraceFormatError, ValidationError
from src.shared.logging import get_logger
from src.shared.schemas import TraceFormat
from src.services.locality.service import address_deltas
from .schemas import Trace, TraceStats

logger = get_logger(__name__)

DISK_BITS = 16
BLOCK_BITS = 48
MSR_FIELDS = 7  # Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime


def block_key(disk: int, block_index: int) -> int:
    """Pack (disk, block index) into one 64-bit block identifier."""
    if not 0 <= disk < (1 << DISK_BITS):
        raise ValueError(f"disk number {disk} does not fit in {DISK_BITS} bits")
    if not 0 <= block_index < (1 << BLOCK_BITS):
        raise ValueError(f"block index {block_index} does not fit in {BLOCK_BITS} bits")
    return (disk << BLOCK_BITS) | block_index


def split_block_key(key: int) -> tuple[int, int]:
    """Inverse of block_key."""
    return key >> BLOCK_BITS, key & ((1 << BLOCK_BITS) - 1)


def parse_msr_csv(
    reader: BinaryIO,
    block_size: int = 4096,
    expand_multiblock: bool = False,
) -> Trace:
    """
    Parse an MSR Cambridge block trace.

    Each row becomes the block (DiskNumber, Offset // block_size). With
    expand_multiblock, a request of Size bytes becomes ceil(Size / block_size)
    consecutive block accesses. Timestamps, request type and response time
    are ignored; time is the emission index.

    Raises:
        ValidationError: If block_size is not positive
        TraceFormatError: On a malformed row or a block key overflow
    """
    if block_size <= 0:
        raise ValidationError(f"block_size must be positive, got {block_size}")

    blocks: List[int] = []
    for line_no, raw in enumerate(reader, start=1):
        line = raw.decode("utf-8", errors="replace").strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != MSR_FIELDS:
            raise TraceFormatError(
                f"expected {MSR_FIELDS} fields, found {len(parts)}", line=line_no
            )
        try:
            disk = int(parts[2])
            offset = int(parts[4])
            size = int(parts[5])
        except ValueError as e:
            raise TraceFormatError(f"non-integer field: {e}", line=line_no) from e
        if offset < 0 or size < 0:
            raise TraceFormatError("negative offset or size", line=line_no)

        first = offset // block_size
        count = max(1, math.ceil(size / block_size)) if expand_multiblock else 1
        try:
            blocks.extend(block_key(disk, first + i) for i in range(count))
        except ValueError as e:
            raise TraceFormatError(str(e), line=line_no) from e

    if not blocks:
        raise TraceFormatError("trace has no accesses")

    logger.info("MSR trace parsed", accesses=len(blocks), expand_multiblock=expand_multiblock)
    return Trace(blocks=blocks, block_size=block_size)


def parse_plain(reader: BinaryIO, block_size: int = 4096) -> Trace:
    """
    Parse a plain trace: one token per line, '#' lines are comments.

    Every token, numeric or symbolic, goes through a symbol table that
    assigns dense IDs in first-seen order.
    """
    table: Dict[str, int] = {}
    blocks: List[int] = []
    for line_no, raw in enumerate(reader, start=1):
        try:
            token = raw.decode("utf-8").strip()
        except UnicodeDecodeError as e:
            raise TraceFormatError("invalid UTF-8", line=line_no) from e
        if not token or token.startswith("#"):
            continue
        blocks.append(table.setdefault(token, len(table)))

    if not blocks:
        raise TraceFormatError("trace has no accesses")

    return Trace(blocks=blocks, block_size=block_size, symbols=list(table))


def write_plain(trace: Trace, writer: BinaryIO) -> int:
    """Serialize a trace in plain format; returns the number of lines."""
    tokens = trace.tokens()
    writer.write("".join(f"{token}\n" for token in tokens).encode("utf-8"))
    return len(tokens)


def load_trace(
    path: Path,
    trace_format: TraceFormat = TraceFormat.PLAIN,
    block_size: int = 4096,
    expand_multiblock: bool = False,
) -> Trace:
    """Open and parse a trace file."""
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"Trace file not found: {path}", details={"path": str(path)})

    with path.open("rb") as reader:
        if TraceFormat(trace_format) is TraceFormat.MSR:
            return parse_msr_csv(reader, block_size, expand_multiblock)
        return parse_plain(reader, block_size)


def trace_stats(trace: Trace) -> TraceStats:
    """Compute length, unique blocks and address-delta compression."""
    if len(trace) == 0:
        raise ValidationError("trace is empty")

    unique_blocks = len(set(trace.blocks))
    unique_deltas = len(set(address_deltas(trace)))
    return TraceStats(
        length=len(trace),
        unique_blocks=unique_blocks,
        mean_accesses_per_block=len(trace) / unique_blocks,
        unique_deltas=unique_deltas,
        delta_compression_ratio=unique_deltas / unique_blocks - 1,
    )


def write_stats_csv(stats: TraceStats, path: Path) -> None:
    """One-row CSV with a column per statistic."""
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([stats.model_dump()]).to_csv(path, index=False)


def read_stats_csv(path: Path) -> TraceStats:
    if not path.exists():
        raise NotFoundError(f"stats file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if len(frame) != 1:
        raise TraceFormatError(f"stats file must hold one row, found {len(frame)}")
    row = {key: value.item() if hasattr(value, "item") else value for key, value in frame.iloc[0].items()}
    return TraceStats.model_validate(row)

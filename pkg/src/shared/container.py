"""
Versioned, checksummed binary container for datasets and checkpoints.

Layout (little-endian):
    magic (4 bytes) | version u16 | header length u32 | header (UTF-8 JSON)
    | arrays, raw and back to back | CRC32 u32 of everything before it

The header lists each array's dtype and shape so the payload can be sliced
without further framing.
"""
import json
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from .exceptions import ArtifactFormatError, ChecksumError, NotFoundError

_PREFIX = struct.Struct("<4sHI")
_CRC = struct.Struct("<I")


def pack(magic: bytes, version: int, header: Dict[str, Any], arrays: List[np.ndarray]) -> bytes:
    """Serialize a header and arrays into one container."""
    specs = []
    payload = []
    for array in arrays:
        array = np.ascontiguousarray(array)
        dtype = array.dtype.newbyteorder("<")
        specs.append({"dtype": dtype.str, "shape": list(array.shape)})
        payload.append(array.astype(dtype, copy=False).tobytes(order="C"))

    meta = json.dumps({**header, "arrays": specs}, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(magic, version, len(meta)) + meta + b"".join(payload)
    return body + _CRC.pack(zlib.crc32(body))


def unpack(
    data: bytes, magic: bytes, max_version: int
) -> Tuple[int, Dict[str, Any], List[np.ndarray]]:
    """
    Parse a container.

    Raises:
        ArtifactFormatError: Wrong magic or a version newer than max_version
        ChecksumError: Truncated or corrupt data
    """
    if len(data) < _PREFIX.size + _CRC.size:
        raise ChecksumError("file is truncated", details={"size": len(data)})

    found_magic, version, meta_len = _PREFIX.unpack_from(data, 0)
    if found_magic != magic:
        raise ArtifactFormatError(
            f"bad magic {found_magic!r}, expected {magic!r}", details={"magic": found_magic.hex()}
        )
    if version > max_version:
        raise ArtifactFormatError(
            f"format version {version} is newer than supported version {max_version}",
            details={"version": version, "supported": max_version},
        )

    body, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("checksum mismatch, file is truncated or corrupt")

    offset = _PREFIX.size + meta_len
    header = json.loads(body[_PREFIX.size:offset].decode("utf-8"))
    arrays = []
    for spec in header.pop("arrays"):
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        end = offset + count * dtype.itemsize
        if end > len(body):
            raise ChecksumError("array payload is truncated")
        arrays.append(np.frombuffer(body[offset:end], dtype=dtype).reshape(spec["shape"]).copy())
        offset = end
    return version, header, arrays


def write_file(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def read_file(path: Path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"File not found: {path}", details={"path": str(path)})
    return path.read_bytes()

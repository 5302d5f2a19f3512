"""DTF1 binary tensor files.

Format: 4-byte magic ``DTF1``, uint32 little-endian order N (1..8), then N
uint64 little-endian extents, then prod(extents) float64 little-endian values
in layout order (first index fastest).
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .core import MAX_ORDER, DenseTensor

MAGIC = b"DTF1"


class DtfFormatError(ValueError):
    """Raised when a DTF1 file is malformed."""


def write_tensor(t: DenseTensor, path) -> None:
    header = MAGIC + struct.pack("<I", t.order)
    header += struct.pack(f"<{t.order}Q", *t.shape)
    payload = np.ascontiguousarray(t.flat, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path) -> DenseTensor:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise DtfFormatError(f"{path}: not a DTF1 file (bad magic)")
    (order,) = struct.unpack_from("<I", data, 4)
    if not 1 <= order <= MAX_ORDER:
        raise DtfFormatError(f"{path}: unsupported tensor order {order}")
    header_end = 8 + 8 * order
    if len(data) < header_end:
        raise DtfFormatError(f"{path}: truncated extent table")
    shape = struct.unpack_from(f"<{order}Q", data, 8)
    if any(e < 1 for e in shape):
        raise DtfFormatError(f"{path}: zero extent in shape {shape}")
    count = math.prod(shape)
    expected = header_end + 8 * count
    if len(data) < expected:
        raise DtfFormatError(
            f"{path}: truncated payload ({len(data) - header_end} of {8 * count} bytes)"
        )
    if len(data) > expected:
        raise DtfFormatError(f"{path}: {len(data) - expected} trailing bytes")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=header_end)
    return DenseTensor.from_flat(shape, values)

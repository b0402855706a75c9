"""Plain-text matrix persistence: one integer header line, then rows of 17-significant-digit floats."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import InputError, ParseError
from .types import FloatArray

# %.17g round-trips every float64 exactly
FLOAT_FORMAT = "%.17g"


def write_blocks(path: Path, dim: int, *blocks: FloatArray) -> None:
    """Write ``dim n_1 ... n_k`` followed by the rows of each block in order."""
    with path.open("w", encoding="ascii", newline="\n") as fh:
        fh.write(" ".join(str(v) for v in (dim, *(len(b) for b in blocks))) + "\n")
        for block in blocks:
            if len(block):
                np.savetxt(fh, block, fmt=FLOAT_FORMAT, delimiter=" ")


def read_blocks(path: Path, n_blocks: int) -> tuple[int, list[FloatArray]]:
    """Read a file written by :func:`write_blocks` and return ``dim`` with the blocks."""
    if not path.is_file():
        raise InputError(f"File not found: {path}", instance=str(path))
    with path.open(encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != n_blocks + 1 or not all(v.isdigit() for v in header):
            raise ParseError(f"Expected header with {n_blocks + 1} integers", instance=f"{path}:1")
        dim, *sizes = (int(v) for v in header)
        total = sum(sizes)
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2) if total else np.empty((0, dim))
    if data.shape != (total, dim):
        raise ParseError(f"Expected {total} rows of {dim} values, got shape {data.shape}", instance=str(path))
    offsets = np.cumsum([0, *sizes])
    return dim, [np.ascontiguousarray(data[offsets[k] : offsets[k + 1]]) for k in range(n_blocks)]

"""Compression-ratio measurement with a bit-plane surrogate compressor.

The surrogate slices the dataset into 64 bit planes (one per bit position),
then stores each plane as whichever of constant / run-length / literal is
smallest. That is deliberately simple -- the point is only that its output
size is a monotone proxy for shared-bit structure, so it reproduces the
*trend* a deduplication-based compressor shows on biased datasets, not any
particular ratio. An external compressor can be plugged in for real ratios.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset

# per-plane encodings; a plane costs 1 tag byte plus its payload
_TAG_CONST0 = 0
_TAG_CONST1 = 1
_TAG_LITERAL = 2
_TAG_RLE = 3

_COUNT_HEADER_BYTES = 8  # u64 sample count


@dataclass(frozen=True)
class CompressionReport:
    """Compression ratios of an original/privatized dataset pair."""

    cr_original: float
    cr_privatized: float
    method: str
    improvement: float  # relative CR drop; positive = privatized compresses better


def _varint_bytes(runs: np.ndarray) -> int:
    """Total LEB128 size of the run lengths."""
    return int(np.sum(1 + (runs >= 1 << 7) + (runs >= 1 << 14) + (runs >= 1 << 21)))


def _plane_bytes(plane: np.ndarray) -> int:
    """Encoded size of one 0/1 plane, including its tag byte."""
    n = plane.size
    if not plane.any():
        return 1  # constant 0
    if plane.all():
        return 1  # constant 1
    literal = (n + 7) // 8
    boundaries = np.flatnonzero(np.diff(plane))
    runs = np.diff(np.concatenate(([-1], boundaries, [n - 1])))
    rle = 1 + _varint_bytes(runs)  # first-bit byte + run lengths
    return 1 + min(literal, rle)


def surrogate_compress(data) -> int:
    """Deterministic compressed size, in bits, of a float dataset.

    Count header plus 64 independently coded planes; a plane shared by all
    samples costs a single byte regardless of n.
    """
    arr = np.ascontiguousarray(data, dtype="<f8").reshape(-1)
    if arr.size == 0:
        raise EmptyDataset("surrogate_compress of an empty dataset")
    patterns = arr.view(np.uint64)
    total = _COUNT_HEADER_BYTES
    for j in range(63, -1, -1):
        plane = ((patterns >> np.uint64(j)) & np.uint64(1)).astype(bool)
        total += _plane_bytes(plane)
    return total * 8


def compression_ratio(data, external: str | None = None) -> float:
    """Compressed bits over uncompressed bits (64 per sample)."""
    arr = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise EmptyDataset("compression ratio of an empty dataset")
    if external is None:
        compressed = surrogate_compress(arr)
    else:
        compressed = external_compress(external, arr)
    return compressed / (64 * arr.size)


def external_compress(executable: str, data) -> int:
    """Size in bits reported by an external filter-style compressor.

    The executable receives the raw little-endian byte dump on stdin and
    must write the compressed bytes to stdout.
    """
    arr = np.ascontiguousarray(data, dtype="<f8").reshape(-1)
    result = subprocess.run(
        [executable], input=arr.tobytes(), stdout=subprocess.PIPE, check=True)
    return len(result.stdout) * 8


def measure(data_original, data_privatized,
            external: str | None = None) -> CompressionReport:
    """Compare compressibility of a dataset before and after privatization."""
    cr_orig = compression_ratio(data_original, external)
    cr_priv = compression_ratio(data_privatized, external)
    return CompressionReport(
        cr_original=cr_orig,
        cr_privatized=cr_priv,
        method="surrogate" if external is None else "external",
        improvement=(cr_orig - cr_priv) / cr_orig,
    )

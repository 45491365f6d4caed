"""Square K-QAM constellations with Gray bit labels.

Points live on the unit-average-energy square grid.  The index ordering and
the bit labeling are fixed so that the index <-> symbol map is bit-exact
reproducible: index = u * L + v (row-major, u = real-axis level, v =
imaginary-axis level, L = sqrt(K)), and the label interleaves the per-axis
reflected Gray codes with real-axis bits on even positions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64, 256)

# chunk size for vectorized nearest-point detection (bounds the N x K buffer)
_DETECT_CHUNK = 1 << 15


@dataclass(frozen=True)
class Constellation:
    """Unit-average-energy square QAM grid with Gray labels."""

    order: int
    points: np.ndarray        # (K,) complex128
    labels: tuple[str, ...]   # log2(K)-bit strings, one per point

    @property
    def bits_per_symbol(self) -> int:
        return self.order.bit_length() - 1

    @property
    def side(self) -> int:
        return int(round(math.sqrt(self.order)))

    @property
    def axis_levels(self) -> np.ndarray:
        """Per-axis amplitude levels, ascending (shared by both axes)."""
        return self.points.real[:: self.side].copy()


def _gray(n: int) -> int:
    return n ^ (n >> 1)


def _interleave_bits(a: int, b: int, width: int) -> str:
    """Interleave two width-bit integers, bits of `a` on even positions."""
    out = []
    for i in range(width - 1, -1, -1):
        out.append(str((a >> i) & 1))
        out.append(str((b >> i) & 1))
    return "".join(out)


def make_qam(k: int) -> Constellation:
    """Build the K-QAM constellation for K in {4, 16, 64, 256}."""
    if k not in SUPPORTED_ORDERS:
        raise ValueError(
            f"unsupported order {k}: square QAM supports K in {SUPPORTED_ORDERS}"
        )
    side = int(round(math.sqrt(k)))
    # raw levels -(L-1), ..., (L-1) step 2; mean energy of the raw grid is
    # 2(K-1)/3, so dividing by its square root normalizes to Es = 1
    levels = (2.0 * np.arange(side) - (side - 1)) / math.sqrt(2.0 * (k - 1) / 3.0)
    u = np.repeat(np.arange(side), side)
    v = np.tile(np.arange(side), side)
    points = levels[u] + 1j * levels[v]
    half = side.bit_length() - 1
    labels = tuple(
        _interleave_bits(_gray(int(a)), _gray(int(b)), half) for a, b in zip(u, v)
    )
    return Constellation(order=k, points=points, labels=labels)


def map_indices(c: Constellation, idx) -> np.ndarray:
    """Look up channel symbols for a sequence of codeword indices."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= c.order):
        bad = idx[(idx < 0) | (idx >= c.order)][0]
        raise ValueError(f"index {bad} out of range for K={c.order}")
    return c.points[idx]


def nearest_index(c: Constellation, y: complex) -> int:
    """Hard-detect one received point: argmin squared distance, lowest index wins ties."""
    y = complex(y)
    d2 = (c.points.real - y.real) ** 2 + (c.points.imag - y.imag) ** 2
    return int(np.argmin(d2))


def detect(c: Constellation, y: np.ndarray) -> np.ndarray:
    """Vectorized `nearest_index` over an array of received points."""
    y = np.asarray(y, dtype=np.complex128).ravel()
    out = np.empty(y.size, dtype=np.int64)
    pr = c.points.real[None, :]
    pi = c.points.imag[None, :]
    for lo in range(0, y.size, _DETECT_CHUNK):
        chunk = y[lo : lo + _DETECT_CHUNK]
        d2 = (chunk.real[:, None] - pr) ** 2 + (chunk.imag[:, None] - pi) ** 2
        out[lo : lo + _DETECT_CHUNK] = d2.argmin(axis=1)
    return out


def dump_csv(c: Constellation, path) -> None:
    """Write the constellation as CSV with columns index,re,im,label_bits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im", "label_bits"])
        for i, (s, lab) in enumerate(zip(c.points, c.labels)):
            w.writerow([i, repr(float(s.real)), repr(float(s.imag)), lab])

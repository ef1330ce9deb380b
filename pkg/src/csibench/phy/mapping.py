"""Gray-coded constellation mapping (BPSK through 64-QAM) and hard demapping."""

from __future__ import annotations

import numpy as np

__all__ = ["map_qam", "demap_qam", "constellation", "KMOD", "QBPSK"]

# Per-axis gray-coded amplitude tables, index = packed axis bits (MSB first).
_GRAY_2 = np.array([-1.0, 1.0])
_GRAY_4 = np.array([-3.0, -1.0, 3.0, 1.0])
_GRAY_8 = np.array([-7.0, -5.0, -1.0, -3.0, 7.0, 5.0, 1.0, 3.0])

KMOD = {1: 1.0, 2: 1 / np.sqrt(2.0), 4: 1 / np.sqrt(10.0), 6: 1 / np.sqrt(42.0)}

_AXIS = {1: _GRAY_2, 2: _GRAY_4, 3: _GRAY_8}

_CONSTELLATIONS: dict[int, np.ndarray] = {}


def constellation(n_bpsc: int) -> np.ndarray:
    """All 2**n_bpsc points, indexed by the packed bit word (first bit = MSB)."""
    if n_bpsc in _CONSTELLATIONS:
        return _CONSTELLATIONS[n_bpsc]
    if n_bpsc == 1:
        pts = _GRAY_2.astype(np.complex128)
    else:
        half = n_bpsc // 2
        axis = _AXIS[half]
        words = np.arange(2**n_bpsc)
        i_bits = words >> half
        q_bits = words & ((1 << half) - 1)
        pts = axis[i_bits] + 1j * axis[q_bits]
    pts = pts * KMOD[n_bpsc]
    _CONSTELLATIONS[n_bpsc] = pts
    return pts


def _pack_bits(bits: np.ndarray, n: int) -> np.ndarray:
    groups = bits.reshape(-1, n).astype(np.int64)
    weights = 1 << np.arange(n - 1, -1, -1)
    return groups @ weights


def map_qam(bits: np.ndarray, n_bpsc: int) -> np.ndarray:
    """Map bits (first-in = MSB of the I axis) onto unit-mean-power symbols."""
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) % n_bpsc:
        raise ValueError(f"bit count {len(bits)} not a multiple of n_bpsc={n_bpsc}")
    return constellation(n_bpsc)[_pack_bits(bits, n_bpsc)]


def nearest_indices(symbols: np.ndarray, n_bpsc: int) -> np.ndarray:
    """Index of the nearest constellation point for each symbol."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    pts = constellation(n_bpsc)
    return np.argmin(np.abs(symbols[:, None] - pts[None, :]), axis=1)


def demap_qam(symbols: np.ndarray, n_bpsc: int) -> np.ndarray:
    """Hard-decision demap by nearest constellation point."""
    idx = nearest_indices(symbols, n_bpsc)
    shifts = np.arange(n_bpsc - 1, -1, -1)
    bits = (idx[:, None] >> shifts[None, :]) & 1
    return bits.astype(np.uint8).reshape(-1)


def QBPSK(bits: np.ndarray) -> np.ndarray:
    """BPSK rotated onto the quadrature axis (HT signaling field)."""
    bits = np.asarray(bits, dtype=np.uint8)
    return 1j * (2.0 * bits - 1.0)

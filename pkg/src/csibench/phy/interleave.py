"""Per-symbol block interleaver (legacy and HT single-stream geometries)."""

from __future__ import annotations

import numpy as np

__all__ = ["interleave", "deinterleave", "interleaver_permutation"]

# Column count is fixed by the tone geometry: 48 data tones -> 16 columns
# (legacy), 52 -> 13 (HT20), 108 -> 18 (HT40).
_N_COLUMNS = {48: 16, 52: 13, 108: 18}

_PERM_CACHE: dict[tuple[int, int], np.ndarray] = {}


def interleaver_permutation(n_cbps: int, n_bpsc: int) -> np.ndarray:
    """Output position for each input bit index (two-step permutation)."""
    key = (n_cbps, n_bpsc)
    if key in _PERM_CACHE:
        return _PERM_CACHE[key]
    n_sd = n_cbps // n_bpsc
    if n_sd not in _N_COLUMNS or n_sd * n_bpsc != n_cbps:
        raise ValueError(f"unsupported interleaver geometry n_cbps={n_cbps} n_bpsc={n_bpsc}")
    n_col = _N_COLUMNS[n_sd]
    n_row = n_cbps // n_col
    s = max(n_bpsc // 2, 1)

    k = np.arange(n_cbps)
    i = n_row * (k % n_col) + k // n_col
    j = s * (i // s) + (i + n_cbps - (n_col * i) // n_cbps) % s
    perm = np.empty(n_cbps, dtype=np.int64)
    perm[k] = j
    _PERM_CACHE[key] = perm
    return perm


def interleave(bits: np.ndarray, n_cbps: int, n_bpsc: int) -> np.ndarray:
    bits = np.asarray(bits)
    if len(bits) != n_cbps:
        raise ValueError(f"expected {n_cbps} bits, got {len(bits)}")
    out = np.empty_like(bits)
    out[interleaver_permutation(n_cbps, n_bpsc)] = bits
    return out


def deinterleave(bits: np.ndarray, n_cbps: int, n_bpsc: int) -> np.ndarray:
    bits = np.asarray(bits)
    if len(bits) != n_cbps:
        raise ValueError(f"expected {n_cbps} bits, got {len(bits)}")
    return bits[interleaver_permutation(n_cbps, n_bpsc)]

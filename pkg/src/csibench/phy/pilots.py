"""Pilot tone values per symbol: base pattern, per-symbol rotation, polarity."""

from __future__ import annotations

import numpy as np

from .grids import ChannelMode
from .scrambler import pilot_polarity

__all__ = ["pilot_values", "pilot_matrix"]

# Single-stream base patterns over the pilot positions (lowest tone first).
_PATTERN_LEGACY = np.array([1.0, 1.0, 1.0, -1.0])
_PATTERN_HT20 = np.array([1.0, 1.0, 1.0, -1.0])
_PATTERN_HT40 = np.array([1.0, 1.0, 1.0, -1.0, -1.0, 1.0])


def _base_pattern(mode: ChannelMode, ht: bool) -> tuple[np.ndarray, bool]:
    """(pattern, rotates) for a channel layout."""
    if not ht or mode == ChannelMode.NON_HT:
        return _PATTERN_LEGACY, False
    if mode == ChannelMode.HT20:
        return _PATTERN_HT20, True
    return _PATTERN_HT40, True


def pilot_values(
    mode: ChannelMode,
    symbol_index: int,
    polarity_index: int,
    ht: bool = True,
) -> np.ndarray:
    """Pilot amplitudes for one OFDM symbol.

    ``symbol_index`` rotates the HT base pattern across pilot positions;
    legacy pilots do not rotate. ``polarity_index`` selects the element of
    the 127-long polarity sequence.
    """
    p = pilot_polarity()[polarity_index % 127]
    base, rotates = _base_pattern(mode, ht)
    if rotates:
        base = np.roll(base, -(symbol_index % len(base)))
    return base * p


def pilot_matrix(mode: ChannelMode, n_sym: int, pol0: int, ht: bool = True) -> np.ndarray:
    """Pilot amplitudes for ``n_sym`` consecutive symbols, one row each."""
    base, rotates = _base_pattern(mode, ht)
    n_p = len(base)
    sym = np.arange(n_sym)
    if rotates:
        cols = (np.arange(n_p)[None, :] + sym[:, None]) % n_p
        pattern = base[cols]
    else:
        pattern = np.tile(base, (n_sym, 1))
    pol = pilot_polarity()[(pol0 + sym) % 127]
    return pattern * pol[:, None]

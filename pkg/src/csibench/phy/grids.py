"""Subcarrier grid definitions for the supported channel modes."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = ["ChannelMode", "SubcarrierGrid", "grid_for_mode", "half_band_grid"]

SUBCARRIER_SPACING_HZ = 312_500.0


class ChannelMode(Enum):
    NON_HT = "nonht"
    HT20 = "ht20"
    HT40_PLUS = "ht40+"
    HT40_MINUS = "ht40-"

    @property
    def is_40mhz(self) -> bool:
        return self in (ChannelMode.HT40_PLUS, ChannelMode.HT40_MINUS)

    @property
    def fft_size(self) -> int:
        return 128 if self.is_40mhz else 64

    @property
    def nominal_rate_hz(self) -> float:
        return 40e6 if self.is_40mhz else 20e6


@dataclass(frozen=True)
class SubcarrierGrid:
    """Occupied tone indices (data + pilot) of one OFDM numerology."""

    indices: np.ndarray
    pilot_indices: np.ndarray
    fft_size: int
    spacing: float = SUBCARRIER_SPACING_HZ
    data_indices: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(
            self, "pilot_indices", np.asarray(self.pilot_indices, dtype=np.int64)
        )
        data = np.setdiff1d(self.indices, self.pilot_indices)
        object.__setattr__(self, "data_indices", data)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def n_data(self) -> int:
        return len(self.data_indices)

    def shifted(self, offset: int) -> "SubcarrierGrid":
        """Same tone layout moved by ``offset`` bins (half-band placement)."""
        return SubcarrierGrid(
            indices=self.indices + offset,
            pilot_indices=self.pilot_indices + offset,
            fft_size=self.fft_size,
            spacing=self.spacing,
        )


def _span(lo: int, hi: int) -> np.ndarray:
    k = np.arange(lo, hi + 1)
    return k[k != 0]


_NONHT = SubcarrierGrid(_span(-26, 26), np.array([-21, -7, 7, 21]), fft_size=64)
_HT20 = SubcarrierGrid(_span(-28, 28), np.array([-21, -7, 7, 21]), fft_size=64)
_HT40 = SubcarrierGrid(
    np.concatenate([np.arange(-58, -1), np.arange(2, 59)]),
    np.array([-53, -25, -11, 11, 25, 53]),
    fft_size=128,
)


def grid_for_mode(mode: ChannelMode, non_ht: bool = False) -> SubcarrierGrid:
    if non_ht:
        return _NONHT
    if mode == ChannelMode.NON_HT:
        return _NONHT
    if mode == ChannelMode.HT20:
        return _HT20
    return _HT40


def half_band_grid(mode: ChannelMode) -> SubcarrierGrid:
    """HT20 layout placed in the occupied half of a 40 MHz grid.

    HT40+ bonds an adjacent channel above the primary one, so the primary
    20 MHz sits in the lower half; HT40- is the mirror image.
    """
    if not mode.is_40mhz:
        raise ValueError("half-band placement only applies to HT40 modes")
    offset = -32 if mode == ChannelMode.HT40_PLUS else 32
    g = _HT20.shifted(offset)
    return SubcarrierGrid(g.indices, g.pilot_indices, fft_size=128, spacing=g.spacing)

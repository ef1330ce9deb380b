"""Training-field tone sequences and OFDM symbol construction helpers."""

from __future__ import annotations

import numpy as np

from .grids import ChannelMode

__all__ = [
    "modulate_symbol",
    "demodulate_window",
    "place_tones",
    "sts_tone_map",
    "lts_tone_map",
    "ht_ltf_tone_map",
    "legacy_stf_field",
    "legacy_ltf_field",
    "ht_stf_field",
    "ht_ltf_field",
]

# Legacy short training tones: every 4th tone of the 52-tone grid.
_STS_INDICES = np.array([-24, -20, -16, -12, -8, -4, 4, 8, 12, 16, 20, 24])
_STS_VALUES = np.array(
    [1 + 1j, -1 - 1j, 1 + 1j, -1 - 1j, -1 - 1j, 1 + 1j,
     -1 - 1j, -1 - 1j, 1 + 1j, 1 + 1j, 1 + 1j, 1 + 1j]
)

# Legacy long training tones over -26..26 (DC omitted).
_LTS_LEFT = np.array(
    [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1],
    dtype=np.float64,
)  # k = -26..-1
_LTS_RIGHT = np.array(
    [1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1],
    dtype=np.float64,
)  # k = 1..26

# HT long training extends the legacy sequence by two tones on each side.
_HTLTF20_EXTRA_LO = np.array([1.0, 1.0])     # k = -28, -27
_HTLTF20_EXTRA_HI = np.array([-1.0, -1.0])   # k = 27, 28


def _legacy_ltf_values() -> tuple[np.ndarray, np.ndarray]:
    idx = np.concatenate([np.arange(-26, 0), np.arange(1, 27)])
    vals = np.concatenate([_LTS_LEFT, _LTS_RIGHT])
    return idx, vals


def _ht20_ltf_values() -> tuple[np.ndarray, np.ndarray]:
    idx = np.concatenate([np.arange(-28, 0), np.arange(1, 29)])
    l_idx, l_vals = _legacy_ltf_values()
    vals = np.concatenate([_HTLTF20_EXTRA_LO, l_vals[:26], l_vals[26:], _HTLTF20_EXTRA_HI])
    del l_idx
    return idx, vals


def _ht40_ltf_values() -> tuple[np.ndarray, np.ndarray]:
    # Deterministic +/-1 training cover for the 114-tone grid, built by
    # tiling the HT20 sequence into both halves (upper half sign-flipped to
    # decorrelate the halves). Only self-consistency matters for CSI.
    idx = np.concatenate([np.arange(-58, -1), np.arange(2, 59)])
    _, base = _ht20_ltf_values()  # 56 values
    lower = np.concatenate([base, [1.0]])
    upper = np.concatenate([[-1.0], -base[::-1]])
    return idx, np.concatenate([lower, upper])


def place_tones(indices: np.ndarray, values: np.ndarray, fft_size: int) -> np.ndarray:
    """Scatter tone values onto a zero-filled full FFT grid."""
    vec = np.zeros(fft_size, dtype=np.complex128)
    vec[np.asarray(indices) % fft_size] = values
    return vec


def modulate_symbol(tone_vec: np.ndarray, cp_len: int, norm_count: int) -> np.ndarray:
    """IFFT one symbol and prepend its cyclic prefix.

    Scaled so that ``norm_count`` unit-power tones give unit average sample
    power; the receiver applies the matching inverse.
    """
    n = len(tone_vec)
    x = np.fft.ifft(tone_vec) * (n / np.sqrt(norm_count))
    if cp_len:
        return np.concatenate([x[-cp_len:], x])
    return x


def demodulate_window(window: np.ndarray, norm_count: int) -> np.ndarray:
    """FFT one CP-stripped symbol window, undoing the modulator scale."""
    n = len(window)
    return np.fft.fft(window) * (np.sqrt(norm_count) / n)


def _dup40(indices: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Duplicate a 20 MHz tone set into both halves of a 40 MHz grid."""
    idx = np.concatenate([indices - 32, indices + 32])
    vals = np.concatenate([values, 1j * values])
    return idx, vals


def _field_tones(
    indices: np.ndarray,
    values: np.ndarray,
    mode: ChannelMode,
    half_band: bool,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Place a legacy-grid tone set according to the channel layout."""
    if not mode.is_40mhz:
        return indices, values, 64
    if half_band:
        shift = -32 if mode == ChannelMode.HT40_PLUS else 32
        return indices + shift, values, 128
    idx, vals = _dup40(indices, values)
    return idx, vals, 128


def legacy_stf_field(mode: ChannelMode, half_band: bool = False) -> np.ndarray:
    """8 us legacy short training field (10 repetitions of the short symbol)."""
    idx, vals, n = _field_tones(_STS_INDICES, _STS_VALUES, mode, half_band)
    base = modulate_symbol(place_tones(idx, vals, n), cp_len=0, norm_count=len(idx))
    reps = int(np.ceil(2.5 * n / len(base)))
    return np.tile(base, reps + 1)[: int(2.5 * n)]


def legacy_ltf_field(mode: ChannelMode, half_band: bool = False) -> np.ndarray:
    """8 us legacy long training field: half-symbol CP plus two repetitions."""
    l_idx, l_vals = _legacy_ltf_values()
    idx, vals, n = _field_tones(l_idx, l_vals, mode, half_band)
    sym = modulate_symbol(place_tones(idx, vals, n), cp_len=0, norm_count=len(idx))
    return np.concatenate([sym[-n // 2 :], sym, sym])


def ht_stf_field(mode: ChannelMode, half_band: bool = False) -> np.ndarray:
    """4 us HT short training field."""
    idx, vals, n = _field_tones(_STS_INDICES, _STS_VALUES, mode, half_band)
    base = modulate_symbol(place_tones(idx, vals, n), cp_len=0, norm_count=len(idx))
    reps = int(np.ceil(1.25 * n / len(base)))
    return np.tile(base, reps + 1)[: int(1.25 * n)]


def ht_ltf_tone_map(mode: ChannelMode, half_band: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """(indices, values) of the HT long training symbol for a channel layout."""
    if mode.is_40mhz and not half_band:
        return _ht40_ltf_values()
    idx, vals = _ht20_ltf_values()
    if half_band:
        shift = -32 if mode == ChannelMode.HT40_PLUS else 32
        idx = idx + shift
    return idx, vals


def ht_ltf_field(mode: ChannelMode, half_band: bool = False) -> np.ndarray:
    """One 4 us HT long training symbol (quarter-symbol CP)."""
    idx, vals = ht_ltf_tone_map(mode, half_band)
    n = 128 if mode.is_40mhz else 64
    return modulate_symbol(place_tones(idx, vals, n), cp_len=n // 4, norm_count=len(idx))


def sts_tone_map() -> tuple[np.ndarray, np.ndarray]:
    return _STS_INDICES.copy(), _STS_VALUES.copy()


def lts_tone_map() -> tuple[np.ndarray, np.ndarray]:
    return _legacy_ltf_values()

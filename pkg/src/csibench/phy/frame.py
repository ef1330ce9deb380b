"""Frame configuration, bit budgeting and burst assembly for NonHT/HT frames."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from .burst import BasebandBurst
from .convcode import CodeRate, bcc_encode
from .grids import ChannelMode, SubcarrierGrid, grid_for_mode, half_band_grid
from .interleave import interleave, interleaver_permutation
from .mapping import QBPSK, map_qam
from .pilots import pilot_matrix, pilot_values
from .preamble import (
    ht_ltf_field,
    ht_ltf_tone_map,
    ht_stf_field,
    legacy_ltf_field,
    legacy_stf_field,
    lts_tone_map,
    modulate_symbol,
    place_tones,
)
from .scrambler import scramble

__all__ = [
    "FrameFormat",
    "Guard",
    "FrameConfig",
    "FrameLayout",
    "McsParams",
    "mcs_params",
    "data_grid",
    "assemble_frame",
    "data_symbol_matrix",
    "frame_layout",
    "FrameError",
]

FCS_LEN = 4
SERVICE_BITS = 16
TAIL_BITS = 6


class FrameError(ValueError):
    """Invalid frame configuration or payload."""


class FrameFormat(Enum):
    NON_HT = "nonht"
    HT = "ht"


class Guard(Enum):
    LONG = "long"
    SHORT = "short"


_RATE_FRACTION = {
    CodeRate.R1_2: Fraction(1, 2),
    CodeRate.R2_3: Fraction(2, 3),
    CodeRate.R3_4: Fraction(3, 4),
    CodeRate.R5_6: Fraction(5, 6),
}

# (n_bpsc, code rate) per MCS index.
_HT_MCS = {
    0: (1, CodeRate.R1_2),
    1: (2, CodeRate.R1_2),
    2: (2, CodeRate.R3_4),
    3: (4, CodeRate.R1_2),
    4: (4, CodeRate.R3_4),
    5: (6, CodeRate.R2_3),
    6: (6, CodeRate.R3_4),
    7: (6, CodeRate.R5_6),
}
_NONHT_MCS = {
    0: (1, CodeRate.R1_2),
    1: (1, CodeRate.R3_4),
    2: (2, CodeRate.R1_2),
    3: (2, CodeRate.R3_4),
    4: (4, CodeRate.R1_2),
    5: (4, CodeRate.R3_4),
    6: (6, CodeRate.R2_3),
    7: (6, CodeRate.R3_4),
}

# L-SIG RATE field bits for the eight legacy rates (MCS order as above).
_LSIG_RATE_BITS = {
    0: (1, 1, 0, 1),
    1: (1, 1, 1, 1),
    2: (0, 1, 0, 1),
    3: (0, 1, 1, 1),
    4: (1, 0, 0, 1),
    5: (1, 0, 1, 1),
    6: (0, 0, 0, 1),
    7: (0, 0, 1, 1),
}


@dataclass(frozen=True)
class FrameConfig:
    format: FrameFormat = FrameFormat.HT
    channel_mode: ChannelMode = ChannelMode.HT20
    mcs: int = 0
    guard: Guard = Guard.LONG
    scrambler_seed: int = 93
    n_ess: int = 0
    payload: bytes = b""
    half_band: bool = False

    def __post_init__(self):
        if not 0 <= self.mcs <= 7:
            raise FrameError(f"mcs must be 0-7, got {self.mcs}")
        if not 1 <= self.scrambler_seed <= 127:
            raise FrameError(f"scrambler_seed must be 1-127, got {self.scrambler_seed}")
        if self.n_ess not in (0, 1):
            raise FrameError(f"n_ess must be 0 or 1, got {self.n_ess}")
        if self.format == FrameFormat.NON_HT:
            if self.channel_mode != ChannelMode.HT20:
                raise FrameError("NonHT frames only support the 20 MHz channel")
            if self.guard == Guard.SHORT:
                raise FrameError("NonHT frames only support the long guard interval")
            if self.n_ess:
                raise FrameError("NonHT frames carry no extra sounding symbols")
        if self.half_band and not self.channel_mode.is_40mhz:
            raise FrameError("half_band placement requires an HT40 channel mode")

    @classmethod
    def make(cls, mode: str = "ht20", **kwargs) -> "FrameConfig":
        """Build a config from a mode string: nonht, ht20, ht40+ or ht40-."""
        mode = mode.lower()
        if mode == "nonht":
            return cls(format=FrameFormat.NON_HT, channel_mode=ChannelMode.HT20, **kwargs)
        return cls(format=FrameFormat.HT, channel_mode=ChannelMode(mode), **kwargs)

    @property
    def nominal_rate(self) -> float:
        return self.channel_mode.nominal_rate_hz

    @property
    def fft_size(self) -> int:
        return self.channel_mode.fft_size


@dataclass(frozen=True)
class McsParams:
    n_bpsc: int
    rate: CodeRate
    n_sd: int
    n_cbps: int
    n_dbps: int


def data_grid(cfg: FrameConfig) -> SubcarrierGrid:
    """Tone grid carrying this frame's signal-processing payload."""
    if cfg.format == FrameFormat.NON_HT:
        return grid_for_mode(ChannelMode.NON_HT)
    if cfg.half_band:
        return half_band_grid(cfg.channel_mode)
    if cfg.channel_mode.is_40mhz:
        return grid_for_mode(cfg.channel_mode)
    return grid_for_mode(ChannelMode.HT20)


def mcs_params(cfg: FrameConfig) -> McsParams:
    table = _NONHT_MCS if cfg.format == FrameFormat.NON_HT else _HT_MCS
    n_bpsc, rate = table[cfg.mcs]
    n_sd = data_grid(cfg).n_data
    n_cbps = n_sd * n_bpsc
    n_dbps = int(n_cbps * _RATE_FRACTION[rate])
    return McsParams(n_bpsc, rate, n_sd, n_cbps, n_dbps)


def _bytes_to_bits(data: bytes) -> np.ndarray:
    """LSB-first bit expansion of a byte string."""
    arr = np.frombuffer(data, dtype=np.uint8)
    return np.unpackbits(arr, bitorder="little")


def _bits_to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def psdu_for_payload(payload: bytes) -> bytes:
    return payload + zlib.crc32(payload).to_bytes(FCS_LEN, "little")


def check_fcs(psdu: bytes) -> tuple[bytes, bool]:
    if len(psdu) < FCS_LEN:
        return psdu, False
    payload, fcs = psdu[:-FCS_LEN], psdu[-FCS_LEN:]
    return payload, zlib.crc32(payload).to_bytes(FCS_LEN, "little") == fcs


def n_data_symbols(cfg: FrameConfig) -> int:
    psdu_len = len(cfg.payload) + FCS_LEN
    n_bits = SERVICE_BITS + 8 * psdu_len + TAIL_BITS
    return -(-n_bits // mcs_params(cfg).n_dbps)


def _scrambled_data_bits(cfg: FrameConfig) -> np.ndarray:
    """Scrambled DATA field bits with the tail re-zeroed, padded to symbols."""
    psdu = psdu_for_payload(cfg.payload)
    params = mcs_params(cfg)
    n_bits = SERVICE_BITS + 8 * len(psdu) + TAIL_BITS
    n_sym = -(-n_bits // params.n_dbps)
    plain = np.zeros(n_sym * params.n_dbps, dtype=np.uint8)
    plain[SERVICE_BITS : SERVICE_BITS + 8 * len(psdu)] = _bytes_to_bits(psdu)
    bits = scramble(cfg.scrambler_seed, plain)
    tail_at = SERVICE_BITS + 8 * len(psdu)
    bits[tail_at : tail_at + TAIL_BITS] = 0
    return bits


def pilot_layout(cfg: FrameConfig) -> tuple[ChannelMode, int]:
    """(pattern mode, first polarity index) for this frame's data symbols."""
    if cfg.format != FrameFormat.HT:
        return ChannelMode.NON_HT, 1
    if cfg.half_band:
        return ChannelMode.HT20, 3  # half-band frames carry the 20 MHz layout
    return cfg.channel_mode, 3


def data_symbol_matrix(cfg: FrameConfig) -> np.ndarray:
    """Frequency-domain data symbols (rows) over the full data grid.

    Pilot tones are included at their grid positions; this is the mapper
    output the receiver regenerates after decoding.
    """
    grid = data_grid(cfg)
    params = mcs_params(cfg)
    bits = _scrambled_data_bits(cfg)
    coded = bcc_encode(bits, params.rate)
    n_sym = len(coded) // params.n_cbps
    symbols = np.empty((n_sym, len(grid)), dtype=np.complex128)
    data_pos = np.searchsorted(grid.indices, grid.data_indices)
    pilot_pos = np.searchsorted(grid.indices, grid.pilot_indices)

    perm = interleaver_permutation(params.n_cbps, params.n_bpsc)
    interleaved = np.empty((n_sym, params.n_cbps), dtype=coded.dtype)
    interleaved[:, perm] = coded.reshape(n_sym, params.n_cbps)
    symbols[:, data_pos] = map_qam(interleaved.reshape(-1), params.n_bpsc).reshape(
        n_sym, params.n_sd
    )

    ht = cfg.format == FrameFormat.HT
    pilot_mode, pol0 = pilot_layout(cfg)
    symbols[:, pilot_pos] = pilot_matrix(pilot_mode, n_sym, pol0, ht=ht)
    return symbols


def _even_parity(bits: np.ndarray) -> int:
    return int(np.sum(bits) % 2)


def lsig_bits(cfg: FrameConfig) -> np.ndarray:
    """24-bit L-SIG content (RATE, LENGTH, parity, tail)."""
    bits = np.zeros(24, dtype=np.uint8)
    if cfg.format == FrameFormat.NON_HT:
        rate_bits = _LSIG_RATE_BITS[cfg.mcs]
        length = len(cfg.payload) + FCS_LEN
    else:
        rate_bits = _LSIG_RATE_BITS[0]
        # Legacy length spoof covering the HT portion at 3 bytes per 4 us.
        ht_syms = 2 + 1 + (1 + cfg.n_ess) + n_data_symbols(cfg)
        length = min(4095, max(1, 3 * ht_syms - 3))
    bits[0:4] = rate_bits
    if not 1 <= length <= 4095:
        raise FrameError(f"L-SIG length {length} out of range (payload too long)")
    bits[5:17] = [(length >> i) & 1 for i in range(12)]
    bits[17] = _even_parity(bits[0:17])
    return bits


def _crc8(bits: np.ndarray) -> np.ndarray:
    """HT-SIG CRC-8 (x^8+x^2+x+1, all-ones init, inverted output, MSB first)."""
    reg = 0xFF
    for b in bits:
        fb = ((reg >> 7) & 1) ^ int(b)
        reg = ((reg << 1) & 0xFF) ^ (0x07 if fb else 0x00)
    reg ^= 0xFF
    return np.array([(reg >> (7 - i)) & 1 for i in range(8)], dtype=np.uint8)


def htsig_bits(cfg: FrameConfig) -> np.ndarray:
    """48-bit HT-SIG content across both signaling symbols."""
    bits = np.zeros(48, dtype=np.uint8)
    bits[0:7] = [(cfg.mcs >> i) & 1 for i in range(7)]
    bits[7] = 1 if (cfg.channel_mode.is_40mhz and not cfg.half_band) else 0
    length = len(cfg.payload) + FCS_LEN
    if length > 65535:
        raise FrameError(f"HT length {length} exceeds 16-bit field")
    bits[8:24] = [(length >> i) & 1 for i in range(16)]
    bits[24] = 1  # smoothing
    bits[25] = 1  # not sounding
    bits[26] = 1  # reserved
    bits[27] = 0  # aggregation
    bits[28:30] = (0, 0)  # STBC
    bits[30] = 0  # BCC
    bits[31] = 1 if cfg.guard == Guard.SHORT else 0
    bits[32:34] = [(cfg.n_ess >> i) & 1 for i in range(2)]
    bits[34:42] = _crc8(bits[0:34])
    return bits


def parse_htsig(bits: np.ndarray) -> dict | None:
    """Decode HT-SIG fields; None when the CRC does not check out."""
    bits = np.asarray(bits, dtype=np.uint8)
    if not np.array_equal(_crc8(bits[0:34]), bits[34:42]):
        return None
    mcs = int(sum(int(bits[i]) << i for i in range(7)))
    length = int(sum(int(bits[8 + i]) << i for i in range(16)))
    return {
        "mcs": mcs,
        "cbw40": bool(bits[7]),
        "length": length,
        "short_gi": bool(bits[31]),
        "n_ess": int(bits[32]) | (int(bits[33]) << 1),
    }


def parse_lsig(bits: np.ndarray) -> dict | None:
    """Decode L-SIG; None when the parity bit fails."""
    bits = np.asarray(bits, dtype=np.uint8)
    if _even_parity(bits[0:17]) != bits[17]:
        return None
    rate_map = {v: k for k, v in _LSIG_RATE_BITS.items()}
    rate = rate_map.get(tuple(int(b) for b in bits[0:4]))
    length = int(sum(int(bits[5 + i]) << i for i in range(12)))
    return {"mcs": rate, "length": length}


def _legacy_symbol_tones(
    data_values: np.ndarray, polarity_index: int
) -> tuple[np.ndarray, np.ndarray]:
    """Assemble a legacy-grid symbol: 48 data values plus 4 pilots."""
    grid = grid_for_mode(ChannelMode.NON_HT)
    values = np.empty(len(grid), dtype=np.complex128)
    data_pos = np.searchsorted(grid.indices, grid.data_indices)
    pilot_pos = np.searchsorted(grid.indices, grid.pilot_indices)
    values[data_pos] = data_values
    values[pilot_pos] = pilot_values(
        ChannelMode.NON_HT, symbol_index=0, polarity_index=polarity_index, ht=False
    )
    return grid.indices, values


def _place_legacy(cfg: FrameConfig, indices, values) -> tuple[np.ndarray, np.ndarray]:
    if not cfg.channel_mode.is_40mhz or cfg.format == FrameFormat.NON_HT:
        return indices, values
    if cfg.half_band:
        shift = -32 if cfg.channel_mode == ChannelMode.HT40_PLUS else 32
        return indices + shift, values
    return (
        np.concatenate([indices - 32, indices + 32]),
        np.concatenate([values, 1j * values]),
    )


def _signaling_symbol(cfg: FrameConfig, data_values, polarity_index, cp) -> np.ndarray:
    idx, vals = _legacy_symbol_tones(data_values, polarity_index)
    idx, vals = _place_legacy(cfg, idx, vals)
    vec = place_tones(idx, vals, cfg.fft_size)
    return modulate_symbol(vec, cp, norm_count=len(idx))


@dataclass(frozen=True)
class FrameLayout:
    """Sample offsets of each field within an assembled burst."""

    fields: dict
    fft: int
    cp_data: int
    n_data_symbols: int
    n_ltf: int

    @property
    def data_start(self) -> int:
        return self.fields["data"][0]

    @property
    def sym_len(self) -> int:
        return self.fft + self.cp_data


def frame_layout(cfg: FrameConfig) -> FrameLayout:
    n = cfg.fft_size
    cp_sig = n // 4
    cp_data = n // 8 if cfg.guard == Guard.SHORT else n // 4
    fields = {}
    pos = 0

    def add(name, length):
        nonlocal pos
        fields[name] = (pos, length)
        pos += length

    add("l_stf", int(2.5 * n))
    add("l_ltf", int(2.5 * n))
    add("l_sig", n + cp_sig)
    n_ltf = 0
    if cfg.format == FrameFormat.HT:
        add("ht_sig", 2 * (n + cp_sig))
        add("ht_stf", int(1.25 * n))
        n_ltf = 1 + cfg.n_ess
        add("ht_ltf", n_ltf * (n + cp_sig))
    n_sym = n_data_symbols(cfg)
    add("data", n_sym * (n + cp_data))
    return FrameLayout(fields, n, cp_data, n_sym, n_ltf)


def assemble_frame(cfg: FrameConfig, sample_rate: float | None = None) -> BasebandBurst:
    """Build the complete baseband burst for one frame."""
    if sample_rate is None:
        sample_rate = cfg.nominal_rate
    n = cfg.fft_size
    cp_sig = n // 4
    cp_data = n // 8 if cfg.guard == Guard.SHORT else n // 4
    half = cfg.half_band
    mode = cfg.channel_mode

    parts = [legacy_stf_field(mode, half), legacy_ltf_field(mode, half)]

    lsig_coded = bcc_encode(lsig_bits(cfg), CodeRate.R1_2)
    lsig_sym = map_qam(interleave(lsig_coded, 48, 1), 1)
    parts.append(_signaling_symbol(cfg, lsig_sym, polarity_index=0, cp=cp_sig))

    if cfg.format == FrameFormat.HT:
        coded = bcc_encode(htsig_bits(cfg), CodeRate.R1_2)
        for i in range(2):
            block = interleave(coded[i * 48 : (i + 1) * 48], 48, 1)
            parts.append(
                _signaling_symbol(cfg, QBPSK(block), polarity_index=1 + i, cp=cp_sig)
            )
        parts.append(ht_stf_field(mode, half))
        ltf = ht_ltf_field(mode, half)
        for _ in range(1 + cfg.n_ess):
            parts.append(ltf)

    grid = data_grid(cfg)
    symbols = data_symbol_matrix(cfg)
    full = np.zeros((len(symbols), n), dtype=np.complex128)
    full[:, grid.indices % n] = symbols
    time = np.fft.ifft(full, axis=1) * (n / np.sqrt(len(grid)))
    if cp_data:
        time = np.concatenate([time[:, -cp_data:], time], axis=1)
    parts.append(time.reshape(-1))

    return BasebandBurst(np.concatenate(parts), sample_rate)

"""Software 802.11a/g/n baseband: frame assembly and the full receive chain."""

from .burst import BasebandBurst, read_iq, write_iq
from .convcode import CodeRate, bcc_decode, bcc_encode
from .frame import (
    FrameConfig,
    FrameError,
    FrameFormat,
    Guard,
    assemble_frame,
    data_grid,
    data_symbol_matrix,
    frame_layout,
    mcs_params,
    n_data_symbols,
)
from .grids import ChannelMode, SubcarrierGrid, grid_for_mode, half_band_grid
from .interleave import deinterleave, interleave
from .mapping import demap_qam, map_qam
from .rx import (
    DecodeError,
    RxResult,
    detect_packet,
    equalize_and_decode,
    estimate_cfo_preamble,
    estimate_csi,
    receive_frame,
    regenerate_symbols,
)
from .scrambler import pilot_polarity, scramble

__all__ = [
    "BasebandBurst",
    "read_iq",
    "write_iq",
    "CodeRate",
    "bcc_decode",
    "bcc_encode",
    "FrameConfig",
    "FrameError",
    "FrameFormat",
    "Guard",
    "assemble_frame",
    "data_grid",
    "data_symbol_matrix",
    "frame_layout",
    "mcs_params",
    "n_data_symbols",
    "ChannelMode",
    "SubcarrierGrid",
    "grid_for_mode",
    "half_band_grid",
    "deinterleave",
    "interleave",
    "demap_qam",
    "map_qam",
    "DecodeError",
    "RxResult",
    "detect_packet",
    "equalize_and_decode",
    "estimate_cfo_preamble",
    "estimate_csi",
    "receive_frame",
    "regenerate_symbols",
    "scramble",
    "pilot_polarity",
]

"""Measurement glue: turn receive results into capture records, run loopbacks."""

from __future__ import annotations

import numpy as np

from .capture import CaptureRecord
from .csikit import CsiFrame
from .impairments import (
    ImpairmentProfile,
    apply_awgn,
    apply_cfo,
    apply_multipath,
    apply_sfo,
    rx_chain,
    tx_chain,
)
from .phy.frame import FrameConfig, Guard, assemble_frame
from .phy.grids import ChannelMode, grid_for_mode, half_band_grid
from .phy.rx import RxResult, receive_frame

__all__ = ["record_from_rx", "csi_frame_from_record", "run_loopback", "estimate_airtime_us"]


def record_from_rx(
    res: RxResult,
    timestamp_us: int,
    cf_hz: float,
    sf_hz: float,
    cfg: FrameConfig,
    include_train: bool = True,
) -> CaptureRecord:
    """Flatten one receive result into a capture record."""
    grid = res.csi.grid
    return CaptureRecord(
        timestamp_us=int(round(timestamp_us)),
        cf_hz=int(round(cf_hz)),
        sf_hz=int(round(sf_hz)),
        channel_mode=cfg.channel_mode,
        mcs=cfg.mcs,
        seed=res.scrambler_seed,
        tone_indices=grid.indices.astype(np.int16),
        csi=res.csi.values,
        data_csi=res.data_symbol_csi if include_train else np.empty((0, len(grid.indices))),
        cfo_uhz=int(round(res.cfo_preamble * 1e6)),
        evm_cdb=int(np.clip(round(res.evm_db * 100), -(2**31), 2**31 - 1)),
        short_gi=cfg.guard == Guard.SHORT,
        half_band=cfg.half_band,
    )


def _grid_for_record(rec: CaptureRecord):
    if rec.half_band:
        return half_band_grid(rec.channel_mode)
    mode = rec.channel_mode
    grid = grid_for_mode(mode)
    return grid


def csi_frame_from_record(rec: CaptureRecord, tx_id="tx", rx_id="rx") -> CsiFrame:
    """Rebuild the analysis-side CSI frame from a stored record."""
    grid = _grid_for_record(rec)
    if not np.array_equal(grid.indices, rec.tone_indices.astype(np.int64)):
        raise ValueError("stored tone list does not match the mode's grid")
    return CsiFrame(
        values=rec.csi,
        grid=grid,
        center_freq=float(rec.cf_hz),
        bandwidth=float(rec.sf_hz),
        channel_mode=rec.channel_mode,
        timestamp=rec.timestamp_us / 1e6,
        source_meta={"tx_id": tx_id, "rx_id": rx_id, "mcs": rec.mcs, "seed": rec.seed},
    )


def run_loopback(
    cfg: FrameConfig,
    profile: ImpairmentProfile,
    sample_rate: float | None = None,
    seed: int = 0,
    stream: int = 0,
) -> RxResult:
    """One frame through tx chain, channel impairments and rx chain."""
    burst = assemble_frame(cfg, sample_rate=sample_rate)
    shaped = tx_chain(burst, profile)
    shaped = apply_multipath(shaped, profile.multipath)
    if profile.cfo_hz:
        shaped = apply_cfo(shaped, profile.cfo_hz)
    if profile.sfo_ppm:
        shaped = apply_sfo(shaped, profile.sfo_ppm)
    if profile.snr_db is not None:
        shaped = apply_awgn(shaped, profile.snr_db, seed, stream=stream)
    delivered = rx_chain(shaped, profile)
    return receive_frame(delivered, cfg)


def estimate_airtime_us(cfg: FrameConfig, sample_rate: float | None = None) -> float:
    """Frame duration from the layout, without assembling samples."""
    from .phy.frame import frame_layout

    layout = frame_layout(cfg)
    total = max(start + length for start, length in layout.fields.values())
    fs = sample_rate or cfg.nominal_rate
    return total / fs * 1e6

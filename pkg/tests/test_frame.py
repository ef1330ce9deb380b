"""Frame assembly: bit budgets, field layout, signaling, spectral occupancy."""

import numpy as np
import pytest

from csibench.phy import (
    ChannelMode,
    FrameConfig,
    FrameError,
    FrameFormat,
    Guard,
    assemble_frame,
    data_grid,
    frame_layout,
    mcs_params,
    n_data_symbols,
)
from csibench.phy.frame import htsig_bits, lsig_bits, parse_htsig, parse_lsig


def bit_budget_oracle(payload_len, n_dbps):
    """Independent symbol-count calculation: service + bytes + tail, ceil."""
    total = 16 + 8 * (payload_len + 4) + 6
    syms, rem = divmod(total, n_dbps)
    return syms + (1 if rem else 0)


def test_nonht_empty_payload_closed_form_length():
    cfg = FrameConfig.make("nonht", mcs=0, payload=b"")
    # 54 bits at 24 bits/symbol -> 3 data symbols
    assert n_data_symbols(cfg) == 3
    burst = assemble_frame(cfg)
    assert len(burst) == 160 + 160 + 80 + 3 * 80
    assert burst.sample_rate == 20e6


def test_ht20_mcs0_symbol_count_oracle():
    cfg = FrameConfig.make("ht20", mcs=0, payload=bytes(100))
    assert mcs_params(cfg).n_dbps == 26
    assert n_data_symbols(cfg) == bit_budget_oracle(100, 26)


@pytest.mark.parametrize("mode,mcs,expected_dbps", [
    ("ht20", 0, 26), ("ht20", 7, 260), ("ht40+", 0, 54), ("ht40-", 7, 540),
    ("nonht", 0, 24), ("nonht", 7, 216),
])
def test_dbps_table(mode, mcs, expected_dbps):
    assert mcs_params(FrameConfig.make(mode, mcs=mcs)).n_dbps == expected_dbps


def test_ness_adds_one_training_symbol():
    base = FrameConfig.make("ht20", mcs=0, payload=bytes(10), n_ess=0)
    ess = FrameConfig.make("ht20", mcs=0, payload=bytes(10), n_ess=1)
    assert len(assemble_frame(ess)) - len(assemble_frame(base)) == 80
    lay = frame_layout(ess)
    assert lay.fields["ht_ltf"][1] == 2 * 80


def test_sample_rates_per_mode():
    assert assemble_frame(FrameConfig.make("ht20")).sample_rate == 20e6
    assert assemble_frame(FrameConfig.make("ht40+")).sample_rate == 40e6
    assert assemble_frame(FrameConfig.make("ht40-", half_band=True)).sample_rate == 40e6


def test_null_tones_exactly_zero_in_data_symbols():
    cfg = FrameConfig.make("ht20", mcs=3, payload=bytes(40))
    burst = assemble_frame(cfg)
    lay = frame_layout(cfg)
    start, _ = lay.fields["data"]
    grid = data_grid(cfg)
    occupied = set(int(k) % 64 for k in grid.indices)
    for i in range(lay.n_data_symbols):
        win = burst.samples[start + i * 80 + 16 : start + (i + 1) * 80]
        tones = np.fft.fft(win)
        for k in range(64):
            if k not in occupied:
                assert abs(tones[k]) < 1e-9


def test_half_band_occupies_single_half():
    for mode, side in [("ht40+", "lower"), ("ht40-", "upper")]:
        cfg = FrameConfig.make(mode, mcs=0, payload=bytes(30), half_band=True)
        burst = assemble_frame(cfg)
        lay = frame_layout(cfg)
        start, _ = lay.fields["data"]
        win = burst.samples[start + 32 : start + 160]
        tones = np.fft.fft(win)
        shifted = np.fft.fftshift(tones)  # index 0 <-> tone -64
        lower = np.sum(np.abs(shifted[:64]) ** 2)
        upper = np.sum(np.abs(shifted[64:]) ** 2)
        if side == "lower":
            assert lower > 1e6 * max(upper, 1e-30)
        else:
            assert upper > 1e6 * max(lower, 1e-30)


def test_lsig_roundtrip_and_parity():
    cfg = FrameConfig.make("nonht", mcs=5, payload=bytes(321))
    bits = lsig_bits(cfg)
    parsed = parse_lsig(bits)
    assert parsed["mcs"] == 5
    assert parsed["length"] == 325
    bad = bits.copy()
    bad[3] ^= 1
    assert parse_lsig(bad) is None


def test_htsig_roundtrip_and_crc():
    cfg = FrameConfig.make("ht40-", mcs=6, guard=Guard.SHORT, payload=bytes(1234), n_ess=1)
    bits = htsig_bits(cfg)
    parsed = parse_htsig(bits)
    assert parsed == {
        "mcs": 6,
        "cbw40": True,
        "length": 1238,
        "short_gi": True,
        "n_ess": 1,
    }
    bad = bits.copy()
    bad[10] ^= 1
    assert parse_htsig(bad) is None


def test_config_validation():
    with pytest.raises(FrameError):
        FrameConfig(format=FrameFormat.NON_HT, channel_mode=ChannelMode.HT40_PLUS)
    with pytest.raises(FrameError):
        FrameConfig(format=FrameFormat.NON_HT, guard=Guard.SHORT)
    with pytest.raises(FrameError):
        FrameConfig(channel_mode=ChannelMode.HT20, half_band=True)
    with pytest.raises(FrameError):
        FrameConfig(mcs=8)
    with pytest.raises(FrameError):
        FrameConfig(scrambler_seed=0)


def test_payload_too_long_rejected():
    with pytest.raises(FrameError):
        assemble_frame(FrameConfig.make("nonht", mcs=7, payload=bytes(4200)))


def test_short_gi_shrinks_symbols():
    long_cfg = FrameConfig.make("ht20", mcs=1, payload=bytes(80), guard=Guard.LONG)
    short_cfg = FrameConfig.make("ht20", mcs=1, payload=bytes(80), guard=Guard.SHORT)
    assert frame_layout(long_cfg).sym_len == 80
    assert frame_layout(short_cfg).sym_len == 72

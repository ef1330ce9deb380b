"""Receive chain: packet detection, CFO estimation, CSI, equalization, decode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..csikit import CsiFrame
from .burst import BasebandBurst
from .convcode import CodeRate, bcc_decode
from .frame import (
    FrameConfig,
    FrameFormat,
    Guard,
    SERVICE_BITS,
    check_fcs,
    data_grid,
    data_symbol_matrix,
    frame_layout,
    mcs_params,
    parse_htsig,
    parse_lsig,
    pilot_layout,
)
from .grids import ChannelMode, grid_for_mode
from .interleave import deinterleave, interleaver_permutation
from .mapping import constellation, demap_qam, nearest_indices
from .pilots import pilot_matrix
from .preamble import (
    demodulate_window,
    ht_ltf_tone_map,
    legacy_ltf_field,
    legacy_stf_field,
    lts_tone_map,
)
from .scrambler import recover_seed, scramble

__all__ = [
    "DecodeError",
    "RxResult",
    "detect_packet",
    "estimate_cfo_preamble",
    "estimate_csi",
    "equalize_and_decode",
    "regenerate_symbols",
    "receive_frame",
]

DETECT_THRESHOLD = 0.75
DETECT_RUN = 16


class DecodeError(RuntimeError):
    """Demodulation failure; carries whatever was recovered up to that point."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class RxResult:
    csi: CsiFrame
    payload: bytes
    fcs_ok: bool
    cfo_preamble: float
    evm_db: float
    data_symbol_csi: np.ndarray
    sym_duration: float
    scrambler_seed: int
    start_offset: int
    lsig: dict | None = None
    htsig: dict | None = None


def _autocorr_metric(x: np.ndarray, lag: int) -> tuple[np.ndarray, np.ndarray]:
    """|P(d)|/R(d) of the delay-autocorrelation over a lag-length window.

    Windows whose energy is negligible against the whole burst are forced to
    zero so silent padding cannot masquerade as a plateau.
    """
    prod = np.conj(x[:-lag]) * x[lag:]
    energy = np.abs(x[lag:]) ** 2
    c = np.cumsum(prod)
    p = np.empty(len(prod) - lag + 1, dtype=np.complex128)
    p[0] = c[lag - 1]
    p[1:] = c[lag:] - c[:-lag]
    e = np.cumsum(energy)
    r = np.empty_like(p, dtype=np.float64)
    r[0] = e[lag - 1]
    r[1:] = e[lag:] - e[:-lag]
    floor = 0.01 * lag * float(np.mean(np.abs(x) ** 2))
    metric = np.where(r > floor, np.abs(p) / np.maximum(r, 1e-30), 0.0)
    return metric, p


def _plateau_start(metric: np.ndarray, threshold: float, run: int) -> int | None:
    above = metric > threshold
    if len(above) < run:
        return None
    window = np.convolve(above.astype(np.int32), np.ones(run, dtype=np.int32), "valid")
    hits = np.flatnonzero(window == run)
    return int(hits[0]) if hits.size else None


def _preamble_reference(cfg: FrameConfig | None) -> np.ndarray:
    if cfg is None:
        mode, half = ChannelMode.HT20, False
    else:
        mode, half = cfg.channel_mode, cfg.half_band
    return np.concatenate([legacy_stf_field(mode, half), legacy_ltf_field(mode, half)])


def detect_packet(
    burst: BasebandBurst,
    cfg: FrameConfig | None = None,
    threshold: float = DETECT_THRESHOLD,
    run: int = DETECT_RUN,
) -> int | None:
    """Locate the frame start, or None when no preamble is present.

    A short-training delay-autocorrelation plateau gives the coarse position;
    the exact start comes from a matched filter against the known legacy
    preamble after coarse CFO removal.
    """
    x = burst.samples
    n_fft = cfg.fft_size if cfg is not None else 64
    lag = n_fft // 4
    if len(x) < 4 * lag + run:
        return None
    metric, p = _autocorr_metric(x, lag)
    coarse = _plateau_start(metric, threshold, run)
    if coarse is None:
        return None

    # Coarse CFO from the plateau's correlation phase, then matched filter.
    span = slice(coarse, min(coarse + 6 * lag, len(p)))
    cfo_per_sample = np.angle(np.sum(p[span])) / (2 * np.pi * lag)
    ref = _preamble_reference(cfg)
    lo = max(0, coarse - 6 * lag)
    hi = min(len(x), coarse + 10 * lag + len(ref))
    region = x[lo:hi]
    if len(region) < len(ref):
        return None
    n = np.arange(lo, lo + len(region))
    derotated = region * np.exp(-2j * np.pi * cfo_per_sample * n)
    corr = np.abs(np.correlate(derotated, ref, mode="valid"))
    peak = int(np.argmax(corr))
    ref_energy = float(np.sum(np.abs(ref) ** 2))
    seg = derotated[peak : peak + len(ref)]
    gain = corr[peak] / np.sqrt(ref_energy * float(np.sum(np.abs(seg) ** 2)))
    if gain < 0.3:
        return None
    return lo + peak


def estimate_cfo_preamble(
    burst: BasebandBurst, offset: int, cfg: FrameConfig | None = None
) -> float:
    """Two-stage CFO estimate: coarse on the short-symbol lag, fine on the
    long-symbol lag.

    The fine stage correlates at one FFT-length lag over both training
    fields; the short training field is 64-periodic too, which doubles the
    averaging span.
    """
    x = burst.samples
    n_fft = cfg.fft_size if cfg is not None else 64
    lag = n_fft // 4
    stf_len = 10 * lag
    if offset < 0 or offset + stf_len + int(2.5 * n_fft) > len(x):
        raise ValueError("offset leaves no room for the training fields")
    fs = burst.sample_rate

    # Skip a guard region after each field boundary so channel/filter
    # transients do not bias the correlations.
    guard = lag // 2
    stf = x[offset + guard : offset + stf_len]
    p = np.sum(np.conj(stf[:-lag]) * stf[lag:])
    coarse = np.angle(p) / (2 * np.pi * lag) * fs

    preamble_len = stf_len + int(2.5 * n_fft)
    n = np.arange(preamble_len)
    y = x[offset : offset + preamble_len] * np.exp(-2j * np.pi * coarse / fs * n)
    y_stf = y[guard:stf_len]
    y_ltf = y[stf_len + guard :]
    p2 = np.sum(np.conj(y_stf[:-n_fft]) * y_stf[n_fft:])
    p2 += np.sum(np.conj(y_ltf[:-n_fft]) * y_ltf[n_fft:])
    fine = np.angle(p2) / (2 * np.pi * n_fft) * fs
    return float(coarse + fine)


def _correct_cfo(burst: BasebandBurst, offset: int, cfo_hz: float) -> BasebandBurst:
    n = np.arange(len(burst.samples)) - offset
    rotated = burst.samples * np.exp(-2j * np.pi * cfo_hz / burst.sample_rate * n)
    return burst.copy_with(rotated)


def _demod_at(x: np.ndarray, start: int, n_fft: int, norm: int) -> np.ndarray:
    return demodulate_window(x[start : start + n_fft], norm)


def _legacy_tone_layout(cfg: FrameConfig) -> tuple[np.ndarray, int]:
    """Indices of the legacy 52-tone set as placed for this frame layout."""
    base = grid_for_mode(ChannelMode.NON_HT).indices
    if cfg.format == FrameFormat.NON_HT or not cfg.channel_mode.is_40mhz:
        return base, len(base)
    if cfg.half_band:
        shift = -32 if cfg.channel_mode == ChannelMode.HT40_PLUS else 32
        return base + shift, len(base)
    # duplicated layout: read the lower copy, normalization covers both
    return base - 32, 2 * len(base)


def _legacy_csi(x: np.ndarray, offset: int, cfg: FrameConfig) -> np.ndarray:
    """Channel over the legacy tone set from the two L-LTF repetitions."""
    n = cfg.fft_size
    ltf0 = offset + int(2.5 * n) + n // 2
    idx, norm = _legacy_tone_layout(cfg)
    _, vals = lts_tone_map()
    y1 = _demod_at(x, ltf0, n, norm)
    y2 = _demod_at(x, ltf0 + n, n, norm)
    y = 0.5 * (y1 + y2)
    return y[idx % n] / vals


def estimate_csi(burst: BasebandBurst, offset: int, cfg: FrameConfig) -> CsiFrame:
    """Measure CSI on the frame's training field over its full tone grid."""
    x = burst.samples
    n = cfg.fft_size
    grid = data_grid(cfg)
    if cfg.format == FrameFormat.NON_HT:
        values = _legacy_csi(x, offset, cfg)
    else:
        layout = frame_layout(cfg)
        ltf_start, _ = layout.fields["ht_ltf"]
        idx, vals = ht_ltf_tone_map(cfg.channel_mode, cfg.half_band)
        y = _demod_at(x, offset + ltf_start + n // 4, n, len(idx))
        values = y[idx % n] / vals
    bad = ~np.isfinite(values)
    if bad.any():
        raise DecodeError(
            "training field demodulation produced non-finite CSI",
            {"bad_tones": grid.indices[bad]},
        )
    return CsiFrame(
        values,
        grid,
        bandwidth=burst.sample_rate,
        channel_mode=cfg.channel_mode,
    )


def _parse_signaling(x: np.ndarray, offset: int, cfg: FrameConfig) -> tuple[dict | None, dict | None]:
    """Equalize and decode L-SIG (and HT-SIG for HT frames)."""
    n = cfg.fft_size
    cp = n // 4
    legacy_idx, norm = _legacy_tone_layout(cfg)
    h = _legacy_csi(x, offset, cfg)
    legacy_grid = grid_for_mode(ChannelMode.NON_HT)
    data_sel = np.isin(legacy_grid.indices, legacy_grid.data_indices)

    def decode_sig(start: int, qbpsk: bool) -> np.ndarray:
        y = _demod_at(x, start + cp, n, norm)[legacy_idx % n] / h
        data = y[data_sel]
        if qbpsk:
            data = data / 1j
        bits = demap_qam(data, 1)
        return deinterleave(bits, 48, 1)

    lsig_start = offset + 5 * n
    coded = decode_sig(lsig_start, qbpsk=False)
    lsig = parse_lsig(bcc_decode(coded, CodeRate.R1_2, 24))

    htsig = None
    if cfg.format == FrameFormat.HT:
        c1 = decode_sig(lsig_start + n + cp, qbpsk=True)
        c2 = decode_sig(lsig_start + 2 * (n + cp), qbpsk=True)
        htsig = parse_htsig(bcc_decode(np.concatenate([c1, c2]), CodeRate.R1_2, 48))
    return lsig, htsig


def regenerate_symbols(payload: bytes, cfg: FrameConfig) -> np.ndarray:
    """Frequency-domain data symbols the transmitter would emit for ``payload``."""
    actual = FrameConfig(
        format=cfg.format,
        channel_mode=cfg.channel_mode,
        mcs=cfg.mcs,
        guard=cfg.guard,
        scrambler_seed=cfg.scrambler_seed,
        n_ess=cfg.n_ess,
        payload=payload,
        half_band=cfg.half_band,
    )
    return data_symbol_matrix(actual)


def equalize_and_decode(
    burst: BasebandBurst,
    csi: CsiFrame,
    cfg: FrameConfig,
    offset: int = 0,
    pilot_tracking: bool = True,
    pilot_tracked_train: bool = False,
    cfo_preamble: float = 0.0,
) -> RxResult:
    """Equalize data symbols with the CSI, decode, and rebuild the CSI train.

    ``pilot_tracking`` applies per-symbol common-phase correction before the
    slicer. The returned data-symbol CSI train is computed without that
    correction unless ``pilot_tracked_train`` is set, so residual CFO/SFO
    phase remains observable.
    """
    x = burst.samples
    n = cfg.fft_size
    grid = data_grid(cfg)
    params = mcs_params(cfg)
    layout = frame_layout(cfg)
    data_start, _ = layout.fields["data"]
    cp = layout.cp_data
    sym_len = layout.sym_len
    n_sym = layout.n_data_symbols
    if offset + data_start + n_sym * sym_len > len(x):
        raise DecodeError(
            "burst too short for the signaled data field",
            {"needed": offset + data_start + n_sym * sym_len, "have": len(x)},
        )

    h = csi.values
    data_pos = np.searchsorted(grid.indices, grid.data_indices)
    pilot_pos = np.searchsorted(grid.indices, grid.pilot_indices)
    ht = cfg.format == FrameFormat.HT
    pilot_mode, pol0 = pilot_layout(cfg)
    expected_pilots = pilot_matrix(pilot_mode, n_sym, pol0, ht=ht)

    starts = offset + data_start + np.arange(n_sym) * sym_len + cp
    windows = x[starts[:, None] + np.arange(n)[None, :]]
    raw = np.fft.fft(windows, axis=1)[:, grid.indices % n] * (np.sqrt(len(grid)) / n)
    eq = raw / h[None, :]
    if pilot_tracking:
        rot = np.sum(eq[:, pilot_pos] * np.conj(expected_pilots), axis=1)
        rot = np.where(np.abs(rot) > 0, rot / np.abs(rot), 1.0)
        eq = eq * np.conj(rot)[:, None]
    eq_data = eq[:, data_pos]

    bits = demap_qam(eq_data.reshape(-1), params.n_bpsc)
    perm = interleaver_permutation(params.n_cbps, params.n_bpsc)
    coded = bits.reshape(n_sym, params.n_cbps)[:, perm].reshape(-1)
    info = bcc_decode(coded, params.rate, n_sym * params.n_dbps)
    try:
        seed = recover_seed(info[:7])
    except ValueError as exc:
        raise DecodeError(str(exc), {"head_bits": info[:16]}) from exc
    plain = scramble(seed, info)
    psdu_len = len(cfg.payload) + 4
    psdu_bits = plain[SERVICE_BITS : SERVICE_BITS + 8 * psdu_len]
    psdu = np.packbits(psdu_bits, bitorder="little").tobytes()
    payload, fcs_ok = check_fcs(psdu)

    # Error vector magnitude against the nearest constellation point.
    pts = constellation(params.n_bpsc)
    nearest = pts[nearest_indices(eq_data.reshape(-1), params.n_bpsc)]
    mse = float(np.mean(np.abs(eq_data.reshape(-1) - nearest) ** 2))
    evm_db = 10.0 * np.log10(max(mse, 1e-30))

    decoded_cfg = FrameConfig(
        format=cfg.format,
        channel_mode=cfg.channel_mode,
        mcs=cfg.mcs,
        guard=cfg.guard,
        scrambler_seed=seed,
        n_ess=cfg.n_ess,
        payload=payload,
        half_band=cfg.half_band,
    )
    x_regen = data_symbol_matrix(decoded_cfg)
    train = raw / x_regen
    if pilot_tracked_train:
        rot = np.sum(train[:, pilot_pos] * np.conj(expected_pilots), axis=1)
        rot = np.where(np.abs(rot) > 0, rot / np.abs(rot), 1.0)
        train = train * np.conj(rot)[:, None]

    return RxResult(
        csi=csi,
        payload=payload,
        fcs_ok=fcs_ok,
        cfo_preamble=cfo_preamble,
        evm_db=evm_db,
        data_symbol_csi=train,
        sym_duration=sym_len / burst.sample_rate,
        scrambler_seed=seed,
        start_offset=offset,
    )


def receive_frame(
    burst: BasebandBurst,
    cfg: FrameConfig,
    pilot_tracking: bool = True,
    pilot_tracked_train: bool = False,
) -> RxResult:
    """Full receive pipeline: detect, CFO-correct, measure CSI, decode.

    ``cfg`` supplies the outer frame conventions (format, channel layout).
    MCS, guard interval, ESS count and PSDU length are taken from the
    decoded signaling fields when their integrity checks pass.
    """
    offset = detect_packet(burst, cfg)
    if offset is None:
        raise DecodeError("no frame detected", {"len": len(burst.samples)})
    cfo = estimate_cfo_preamble(burst, offset, cfg)
    corrected = _correct_cfo(burst, offset, cfo)
    # Tail slack tolerates sub-sample truncation from resampling impairments;
    # a genuinely cut-off frame still surfaces as an FCS failure.
    corrected = corrected.copy_with(
        np.concatenate([corrected.samples, np.zeros(cfg.fft_size)])
    )

    lsig, htsig = _parse_signaling(corrected.samples, offset, cfg)
    eff = {
        "mcs": cfg.mcs,
        "guard": cfg.guard,
        "n_ess": cfg.n_ess,
        "payload_len": len(cfg.payload),
    }
    if cfg.format == FrameFormat.HT:
        if htsig is None:
            raise DecodeError("HT-SIG CRC failed", {"lsig": lsig})
        eff["mcs"] = htsig["mcs"]
        eff["guard"] = Guard.SHORT if htsig["short_gi"] else Guard.LONG
        eff["n_ess"] = htsig["n_ess"]
        eff["payload_len"] = htsig["length"] - 4
    else:
        if lsig is None:
            raise DecodeError("L-SIG parity failed", {})
        if lsig["mcs"] is not None:
            eff["mcs"] = lsig["mcs"]
        eff["payload_len"] = lsig["length"] - 4

    eff_cfg = FrameConfig(
        format=cfg.format,
        channel_mode=cfg.channel_mode,
        mcs=eff["mcs"],
        guard=eff["guard"],
        scrambler_seed=cfg.scrambler_seed,
        n_ess=eff["n_ess"],
        payload=bytes(max(eff["payload_len"], 0)),
        half_band=cfg.half_band,
    )
    csi = estimate_csi(corrected, offset, eff_cfg)
    result = equalize_and_decode(
        corrected,
        csi,
        eff_cfg,
        offset=offset,
        pilot_tracking=pilot_tracking,
        pilot_tracked_train=pilot_tracked_train,
        cfo_preamble=cfo,
    )
    result.lsig = lsig
    result.htsig = htsig
    return result

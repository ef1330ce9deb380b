"""Front-end impairment stages and the distortion-shape emergence properties."""

import numpy as np
import pytest

from csibench.csikit import (
    CsiFrame,
    DistortionType,
    build_distortion_template,
    classify_distortion,
    shoulder_metrics,
)
from csibench.impairments import (
    ImpairmentProfile,
    agc,
    apply_awgn,
    apply_cfo,
    apply_iq_mismatch,
    apply_multipath,
    apply_sfo,
    butterworth_apply,
    dac_zoh_response,
    load_profile,
    predistort,
    profile_for_mode,
    rx_chain,
    rx_response,
    save_profile,
    tx_chain,
    tx_response,
)
from csibench.phy import BasebandBurst, FrameConfig, assemble_frame, receive_frame
from csibench.phy.grids import ChannelMode


def tone_burst(freq, fs, n=4096):
    t = np.arange(n)
    return BasebandBurst(np.exp(2j * np.pi * freq / fs * t), fs)


def steady_gain(filtered, original, skip=512):
    a = filtered.samples[skip:-skip]
    b = original.samples[skip:-skip]
    return np.vdot(b, a) / np.vdot(b, b)


# --- DAC zero-order hold ---


def test_zoh_reference_points():
    assert dac_zoh_response(0.0, 160e6) == pytest.approx(1.0)
    assert abs(dac_zoh_response(160e6, 160e6)) == pytest.approx(0.0, abs=1e-12)
    assert abs(dac_zoh_response(10e6, 160e6)) == pytest.approx(0.99358, abs=5e-6)


def test_zoh_linear_phase():
    f = np.array([1e6, 5e6, 20e6])
    h = dac_zoh_response(f, 160e6)
    assert np.allclose(np.angle(h), -np.pi * f / 160e6)


# --- Butterworth filters ---


def test_butterworth_dc_gain_unity():
    burst = BasebandBurst(np.ones(8000, dtype=complex), 20e6)
    out = butterworth_apply(burst, 5, 4e6)
    assert abs(out.samples[-1] - 1.0) < 1e-6


@pytest.mark.parametrize("order", [2, 5])
def test_butterworth_cutoff_is_3db(order):
    fs, fc = 12.8e6, 100e3
    tone = tone_burst(fc, fs, 16384)
    out = butterworth_apply(tone, order, fc)
    g = 20 * np.log10(abs(steady_gain(out, tone, 4096)))
    assert g == pytest.approx(-3.0103, abs=0.05)


def test_butterworth_order5_octave_rolloff():
    fs, fc = 12.8e6, 100e3
    tone = tone_burst(2 * fc, fs, 32768)
    out = butterworth_apply(tone, 5, fc)
    g = 20 * np.log10(abs(steady_gain(out, tone, 8192)))
    # analytic |H|^2 = 1/(1+(w/wc)^10) -> -30.11 dB at one octave
    assert g == pytest.approx(-30.11, abs=0.5)


def test_butterworth_rejects_bad_cutoff():
    burst = tone_burst(1e6, 20e6)
    with pytest.raises(ValueError):
        butterworth_apply(burst, 5, 10e6)
    with pytest.raises(ValueError):
        butterworth_apply(burst, 2, 0.0)


# --- predistortion ---


def test_predistort_alpha_zero_identity():
    burst = tone_burst(3e6, 20e6)
    out = predistort(burst, 0.0, 160e6)
    assert np.array_equal(out.samples, burst.samples)


def test_predistort_unity_cancels_zoh_magnitude():
    fs = 20e6
    rng = np.random.default_rng(0)
    burst = BasebandBurst(rng.normal(size=2048) + 1j * rng.normal(size=2048), fs)
    pre = predistort(burst, 1.0, 160e6)
    f = np.fft.fftfreq(len(pre.samples), 1 / fs)
    comp = np.fft.fft(pre.samples) * np.abs(dac_zoh_response(f, 160e6))
    ref = np.fft.fft(
        np.concatenate([np.zeros(256), burst.samples, np.zeros(256)])
    )
    assert np.max(np.abs(np.abs(comp) - np.abs(ref))) < 1e-6 * np.max(np.abs(ref))


def test_predistort_spec_overcomp_level():
    # alpha=1.15 at 160 MHz: composite with the ZOH sits +0.0084 dB at 10 MHz
    composite = np.abs(dac_zoh_response(10e6, 160e6)) ** (1 - 1.15)
    assert 20 * np.log10(composite) == pytest.approx(0.0084, abs=3e-4)


# --- I/Q mismatch ---


def image_ratio_db(gain, phase_deg):
    burst = tone_burst(2e6, 20e6, 8192)
    out = apply_iq_mismatch(burst, gain, phase_deg)
    spec = np.fft.fft(out.samples)
    f = np.fft.fftfreq(8192, 1 / 20e6)
    sig = np.abs(spec[np.argmin(np.abs(f - 2e6))])
    img = np.abs(spec[np.argmin(np.abs(f + 2e6))])
    return 20 * np.log10(img / sig)


def test_iq_identity():
    burst = tone_burst(2e6, 20e6)
    out = apply_iq_mismatch(burst, 1.0, 0.0)
    assert np.allclose(out.samples, burst.samples)


def test_iq_image_levels_match_rejection_formula():
    assert image_ratio_db(1.1, 0.0) == pytest.approx(
        20 * np.log10(0.1 / 2.1), abs=0.05
    )
    expected = 20 * np.log10(
        abs(1 - np.exp(1j * np.deg2rad(5))) / abs(1 + np.exp(1j * np.deg2rad(5)))
    )
    assert image_ratio_db(1.0, 5.0) == pytest.approx(expected, abs=0.05)
    assert image_ratio_db(1.1, 0.0) == pytest.approx(-26.4, abs=0.1)
    assert image_ratio_db(1.0, 5.0) == pytest.approx(-27.2, abs=0.1)


# --- CFO / SFO ---


def test_cfo_group_property():
    burst = tone_burst(1e6, 20e6)
    back = apply_cfo(apply_cfo(burst, 37e3), -37e3)
    assert np.max(np.abs(back.samples - burst.samples)) < 1e-12


def test_sfo_zero_identity():
    burst = tone_burst(1e6, 20e6)
    out = apply_sfo(burst, 0.0)
    assert np.max(np.abs(out.samples - burst.samples)) < 1e-12


def measured_tone_freq(samples, fs):
    # phase-slope frequency measurement, immune to spectral leakage
    prod = samples[1:] * np.conj(samples[:-1])
    return np.angle(np.sum(prod)) * fs / (2 * np.pi)


def test_sfo_shifts_tone_frequency():
    fs = 20e6
    burst = tone_burst(2e6, fs, 10000)
    out = apply_sfo(burst, 20.0)
    assert abs(len(out) - len(burst)) <= 1
    f = measured_tone_freq(out.samples[64:-64], fs)
    assert (f - 2e6) / 2e6 == pytest.approx(20e-6, rel=0.02)


def test_sfo_negative_direction():
    fs = 20e6
    burst = tone_burst(2e6, fs, 10000)
    out = apply_sfo(burst, -20.0)
    f = measured_tone_freq(out.samples[64:-64], fs)
    assert (f - 2e6) / 2e6 == pytest.approx(-20e-6, rel=0.02)


# --- AWGN / multipath / AGC ---


def test_awgn_deterministic_under_seed():
    burst = tone_burst(1e6, 20e6)
    a = apply_awgn(burst, 20.0, seed=42, stream=3)
    b = apply_awgn(burst, 20.0, seed=42, stream=3)
    c = apply_awgn(burst, 20.0, seed=42, stream=4)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_awgn_200db_still_decodes():
    cfg = FrameConfig.make("ht20", mcs=7, payload=b"extreme snr survives")
    noisy = apply_awgn(assemble_frame(cfg), 200.0, seed=0)
    res = receive_frame(noisy, cfg)
    assert res.payload == cfg.payload and res.fcs_ok


def test_multipath_single_unit_tap_identity():
    burst = tone_burst(1e6, 20e6)
    out = apply_multipath(burst, [(0, 1.0)])
    assert np.max(np.abs(out.samples - burst.samples)) < 1e-15


def test_agc_scale_invariance():
    burst = tone_burst(1e6, 20e6)
    doubled = burst.copy_with(2.0 * burst.samples)
    a = agc(burst, 0.5)
    b = agc(doubled, 0.5)
    assert np.max(np.abs(a.samples - b.samples)) < 1e-12


# --- chains ---


def test_identity_profile_is_transparent():
    cfg = FrameConfig.make("ht20", mcs=1, payload=b"pass through")
    burst = assemble_frame(cfg)
    prof = ImpairmentProfile.identity()
    out = rx_chain(tx_chain(burst, prof), prof)
    assert np.array_equal(out.samples, burst.samples)


def _measure_template(profile, mode="ht20", n_frames=6, sample_rate=None, half_band=False):
    frames = []
    for s in range(n_frames):
        cfg = FrameConfig.make(mode, mcs=0, payload=bytes(60),
                               scrambler_seed=s + 1, half_band=half_band)
        burst = assemble_frame(cfg, sample_rate=sample_rate)
        delivered = rx_chain(tx_chain(burst, profile), profile)
        res = receive_frame(delivered, cfg)
        frames.append(
            CsiFrame(res.csi.values, res.csi.grid, channel_mode=res.csi.channel_mode,
                     bandwidth=profile.design_bandwidth_hz,
                     source_meta={"tx_id": "a", "rx_id": "b"})
        )
    return build_distortion_template(frames)


def test_composite_csi_matches_analytic_cascade():
    prof = ImpairmentProfile()
    cfg = FrameConfig.make("ht20", mcs=0, payload=bytes(40))
    burst = assemble_frame(cfg)
    res = receive_frame(rx_chain(tx_chain(burst, prof), prof), cfg)
    f = res.csi.grid.indices * res.csi.grid.spacing
    analytic = tx_response(prof, f, 20e6) * rx_response(prof, f, 20e6)
    mag_err = 20 * np.log10(np.abs(res.csi.values) / np.abs(analytic))
    assert np.max(np.abs(mag_err - mag_err.mean())) < 0.1


def test_type1_emergence_and_symmetry():
    t = _measure_template(ImpairmentProfile())
    assert classify_distortion(t) == DistortionType.TYPE1
    m = shoulder_metrics(t)
    assert m["n_local_maxima"] == 2
    assert m["asymmetry_db"] < 1.0
    assert m["dip_db"] >= 0.5
    assert m["edge_drop_db"] >= 3.0
    # lying-S phase: odd-symmetric detrended phase
    phase = t.phase_rad
    assert np.max(np.abs(phase + phase[::-1])) < 0.2
    assert np.max(np.abs(phase)) > 0.05


def test_type2_emergence_at_low_rate():
    t = _measure_template(ImpairmentProfile(), sample_rate=5e6)
    assert classify_distortion(t) == DistortionType.TYPE2
    # unimodal with the maximum at DC
    mag = t.mag_db - t.mag_db.mean()
    center = np.argmin(np.abs(t.indices))
    assert abs(int(np.argmax(mag)) - center) <= 2


def test_type3_emergence_half_band():
    prof = profile_for_mode(ChannelMode.HT40_PLUS)
    t = _measure_template(prof, mode="ht40+", half_band=True)
    assert classify_distortion(t) == DistortionType.TYPE3
    assert all(t.indices < 0)


def test_tracked_profile_keeps_shape_across_rates():
    t20 = _measure_template(ImpairmentProfile(tracking=True))
    t40m = _measure_template(ImpairmentProfile(tracking=True), sample_rate=40e6)
    assert classify_distortion(t20) == DistortionType.TYPE1
    assert classify_distortion(t40m) == DistortionType.TYPE1


def test_iq_and_scale_leave_shape_positions():
    base = _measure_template(ImpairmentProfile())
    perturbed = _measure_template(
        ImpairmentProfile(iq_gain_ratio=1.02, iq_phase_deg=1.0, agc_target_rms=0.3)
    )
    mb = shoulder_metrics(base)
    mp = shoulder_metrics(perturbed)
    assert abs(mb["left_peak_tone"] - mp["left_peak_tone"]) <= 1
    assert abs(mb["right_peak_tone"] - mp["right_peak_tone"]) <= 1
    assert classify_distortion(perturbed) == DistortionType.TYPE1


def test_chain_determinism():
    prof = ImpairmentProfile(snr_db=25.0)
    cfg = FrameConfig.make("ht20", mcs=0, payload=bytes(30))
    burst = assemble_frame(cfg)
    a = apply_awgn(tx_chain(burst, prof), 25.0, seed=9, stream=1)
    b = apply_awgn(tx_chain(burst, prof), 25.0, seed=9, stream=1)
    assert np.array_equal(a.samples, b.samples)


def test_profile_roundtrip_file(tmp_path):
    prof = ImpairmentProfile(
        design_bandwidth_hz=40e6,
        cfo_hz=1200.0,
        sfo_ppm=-3.5,
        snr_db=35.0,
        multipath=((0, 1 + 0j), (4, 0.2 - 0.1j)),
        iq_gain_ratio=1.05,
        fastband="upper",
    )
    path = tmp_path / "prof.cfg"
    save_profile(prof, path)
    assert load_profile(path) == prof


def test_profile_validation():
    with pytest.raises(ValueError):
        ImpairmentProfile(iq_gain_ratio=0.0)
    with pytest.raises(ValueError):
        ImpairmentProfile(fastband="middle")
    with pytest.raises(ValueError):
        ImpairmentProfile(dac_oversample=0)

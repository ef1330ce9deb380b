"""Physically-motivated front-end impairment chain.

Reproduces the three CSI distortion shapes seen on fixed-filter radios:
DAC zero-order-hold and rate-interpolator droop, inverse-sinc predistortion,
reconstruction and anti-aliasing Butterworth filters, I/Q mismatch, CFO/SFO,
AWGN, multipath and AGC.

The analog filters are applied as exact frequency responses over the burst
spectrum, so a measured per-tone response equals the analytic stage cascade.
The digital-IIR entry point (`butterworth_apply`) is kept for time-domain
uses and for validating the analog curves.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .phy.burst import BasebandBurst
from .phy.grids import ChannelMode

__all__ = [
    "ImpairmentProfile",
    "dac_zoh_response",
    "butterworth_apply",
    "butterworth_analog_response",
    "predistort",
    "apply_iq_mismatch",
    "apply_cfo",
    "apply_sfo",
    "apply_awgn",
    "apply_multipath",
    "agc",
    "tx_chain",
    "rx_chain",
    "tx_response",
    "rx_response",
    "profile_for_mode",
    "save_profile",
    "load_profile",
    "PRESETS",
]

RECON_ORDER = 2
ACR_ORDER = 5

# Chain padding absorbs filter group delay and ringing at the burst edges.
_CHAIN_PAD = 256


@dataclass(frozen=True)
class ImpairmentProfile:
    """Declarative description of one direction's front-end chain.

    Filter and predistortion curves are fixed at the design bandwidth: when
    the working sample rate is tuned away from it they stay put (the shapes
    do not follow the clock) unless ``tracking`` is set.
    """

    design_bandwidth_hz: float = 20e6
    tracking: bool = False
    dac_enabled: bool = True
    dac_oversample: int = 8
    interp_droop: bool = True
    predistortion_overcomp: float = 1.15
    predistortion_scale: float = 0.7
    recon_enabled: bool = True
    recon_cutoff_hz: float | None = None
    acr_enabled: bool = True
    acr_cutoff_hz: float | None = None
    iq_gain_ratio: float = 1.0
    iq_phase_deg: float = 0.0
    cfo_hz: float = 0.0
    sfo_ppm: float = 0.0
    snr_db: float | None = None
    multipath: tuple = ()
    agc_target_rms: float | None = None
    fastband: str | None = None

    def __post_init__(self):
        if self.dac_oversample < 1:
            raise ValueError("dac_oversample must be >= 1")
        if self.predistortion_overcomp < 0:
            raise ValueError("predistortion over-compensation must be >= 0")
        if self.iq_gain_ratio <= 0:
            raise ValueError("iq_gain_ratio must be positive")
        if self.fastband not in (None, "lower", "upper"):
            raise ValueError("fastband must be None, 'lower' or 'upper'")

    @classmethod
    def identity(cls) -> "ImpairmentProfile":
        """A chain that leaves the burst untouched."""
        return cls(
            dac_enabled=False,
            interp_droop=False,
            predistortion_overcomp=0.0,
            recon_enabled=False,
            acr_enabled=False,
        )

    @property
    def tx_transparent(self) -> bool:
        return (
            self.predistortion_overcomp == 0
            and not self.interp_droop
            and not self.dac_enabled
            and not self.recon_enabled
        )

    def mirrored(self) -> "ImpairmentProfile":
        """Reverse-direction view of this channel (oscillator offsets negate)."""
        return replace(self, cfo_hz=-self.cfo_hz, sfo_ppm=-self.sfo_ppm)

    def _scale(self, sample_rate: float) -> float:
        if self.tracking:
            return sample_rate / self.design_bandwidth_hz
        return 1.0

    def pdp_rate(self, sample_rate: float) -> float:
        return self.predistortion_scale * self.design_bandwidth_hz * self._scale(sample_rate)

    def recon_cutoff(self, sample_rate: float) -> float:
        base = self.recon_cutoff_hz or 0.65 * self.design_bandwidth_hz
        return base * self._scale(sample_rate)

    def acr_cutoff(self, sample_rate: float) -> float:
        base = self.acr_cutoff_hz or 0.38 * self.design_bandwidth_hz
        return base * self._scale(sample_rate)



def _sinc(x: np.ndarray) -> np.ndarray:
    return np.sinc(x)  # sin(pi x) / (pi x)


def dac_zoh_response(f, fs_dac: float):
    """Zero-order-hold response: sinc magnitude with half-sample linear phase."""
    if fs_dac <= 0:
        raise ValueError("fs_dac must be positive")
    x = np.asarray(f, dtype=np.float64) / fs_dac
    return _sinc(x) * np.exp(-1j * np.pi * x)


def butterworth_analog_response(order: int, cutoff_hz: float, f) -> np.ndarray:
    """Complex response of the analog low-pass prototype at frequencies ``f``."""
    z, p, k = sps.butter(order, 2 * np.pi * cutoff_hz, analog=True, output="zpk")
    w = 2 * np.pi * np.asarray(f, dtype=np.float64)
    _, h = sps.freqs_zpk(z, p, k, worN=w)
    return h


def butterworth_apply(burst: BasebandBurst, order: int, cutoff_hz: float) -> BasebandBurst:
    """Run the burst through a digital Butterworth low-pass (bilinear, SOS)."""
    if cutoff_hz <= 0 or cutoff_hz >= burst.sample_rate / 2:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must lie inside (0, {burst.sample_rate / 2}) Hz"
        )
    sos = sps.butter(order, cutoff_hz, fs=burst.sample_rate, output="sos")
    out = sps.sosfilt(sos, burst.samples.real) + 1j * sps.sosfilt(sos, burst.samples.imag)
    return burst.copy_with(out)


def _freq_multiply(burst: BasebandBurst, response) -> BasebandBurst:
    """Apply a frequency response with edge padding to absorb the ringing."""
    x = np.concatenate(
        [np.zeros(_CHAIN_PAD), burst.samples, np.zeros(_CHAIN_PAD)]
    )
    f = np.fft.fftfreq(len(x), d=1.0 / burst.sample_rate)
    y = np.fft.ifft(np.fft.fft(x) * response(f))
    return burst.copy_with(y)


def predistort(burst: BasebandBurst, overcomp: float, fs_dac: float) -> BasebandBurst:
    """Inverse-sinc magnitude shaping; ``overcomp`` > 1 over-compensates."""
    if overcomp == 0:
        return burst.copy_with(burst.samples.copy())
    return _freq_multiply(burst, lambda f: _pdp_gain(f, overcomp, fs_dac))


def _pdp_gain(f, overcomp: float, rate: float) -> np.ndarray:
    mag = np.abs(_sinc(np.asarray(f, dtype=np.float64) / rate))
    return np.power(np.maximum(mag, 1e-12), -overcomp)


def apply_iq_mismatch(
    burst: BasebandBurst, gain_ratio: float, phase_deg: float
) -> BasebandBurst:
    """Quadrature-arm gain and phase error: I'=I, Q'=g(Q cos(phi) + I sin(phi))."""
    phi = np.deg2rad(phase_deg)
    i = burst.samples.real
    q = burst.samples.imag
    return burst.copy_with(i + 1j * gain_ratio * (q * np.cos(phi) + i * np.sin(phi)))


def apply_cfo(burst: BasebandBurst, cfo_hz: float) -> BasebandBurst:
    if cfo_hz == 0:
        return burst.copy_with(burst.samples.copy())
    n = np.arange(len(burst.samples))
    return burst.copy_with(
        burst.samples * np.exp(2j * np.pi * cfo_hz / burst.sample_rate * n)
    )


_SFO_HALF_TAPS = 16  # 33-tap windowed-sinc interpolator
_KAISER_BETA = 8.0


def _kaiser_sinc(u: np.ndarray) -> np.ndarray:
    half = _SFO_HALF_TAPS + 0.5
    inside = np.abs(u) <= half
    w = np.zeros_like(u)
    arg = 1.0 - (u[inside] / half) ** 2
    w[inside] = np.i0(_KAISER_BETA * np.sqrt(arg)) / np.i0(_KAISER_BETA)
    return np.sinc(u) * w


def apply_sfo(burst: BasebandBurst, ppm: float) -> BasebandBurst:
    """Resample by (1 + ppm*1e-6), emulating a sampling-clock offset.

    Positive ppm compresses the waveform in the receiver's sample grid
    (tone frequencies shift up by ppm*1e-6 relative), matching the sign the
    data-symbol phase-slope estimator reports.
    """
    if ppm == 0:
        return burst.copy_with(burst.samples.copy())
    rho = 1.0 + ppm * 1e-6
    x = burst.samples
    n_out = int(np.ceil((len(x) - 1) / rho)) + 1
    m = np.arange(n_out)
    t = m * rho
    n0 = np.rint(t).astype(np.int64)
    mu = t - n0
    taps = np.arange(-_SFO_HALF_TAPS, _SFO_HALF_TAPS + 1)
    h = _kaiser_sinc(taps[None, :] - mu[:, None])
    pad = _SFO_HALF_TAPS + 1
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    y = np.sum(xp[n0[:, None] + taps[None, :] + pad] * h, axis=1)
    return burst.copy_with(y)


def _rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator so draws stay independent of call order."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed) + (np.uint64(stream) << np.uint64(20))))


def apply_awgn(burst: BasebandBurst, snr_db: float, seed: int, stream: int = 0) -> BasebandBurst:
    """Add circular Gaussian noise at the given SNR below measured signal power."""
    power = float(np.mean(np.abs(burst.samples) ** 2))
    if power == 0:
        return burst.copy_with(burst.samples.copy())
    sigma = np.sqrt(power * 10 ** (-snr_db / 10) / 2)
    rng = _rng_for(seed, stream)
    noise = rng.normal(0, sigma, len(burst.samples)) + 1j * rng.normal(
        0, sigma, len(burst.samples)
    )
    return burst.copy_with(burst.samples + noise)


def apply_multipath(burst: BasebandBurst, taps) -> BasebandBurst:
    """Convolve with a sparse tap line [(delay_samples, complex_gain), ...]."""
    if not taps:
        return burst.copy_with(burst.samples.copy())
    max_delay = max(int(d) for d, _ in taps)
    h = np.zeros(max_delay + 1, dtype=np.complex128)
    for d, g in taps:
        h[int(d)] += g
    return burst.copy_with(np.convolve(burst.samples, h))


def agc(burst: BasebandBurst, target_rms: float) -> BasebandBurst:
    """Memoryless whole-burst gain normalization."""
    rms = float(np.sqrt(np.mean(np.abs(burst.samples) ** 2)))
    if rms == 0:
        return burst.copy_with(burst.samples.copy())
    return burst.copy_with(burst.samples * (target_rms / rms))


def tx_response(profile: ImpairmentProfile, f, sample_rate: float) -> np.ndarray:
    """Analytic transmit-side response (predistortion, droop, ZOH, recon)."""
    f = np.asarray(f, dtype=np.float64)
    h = np.ones_like(f, dtype=np.complex128)
    if profile.predistortion_overcomp > 0:
        h = h * _pdp_gain(f, profile.predistortion_overcomp, profile.pdp_rate(sample_rate))
    if profile.interp_droop:
        h = h * np.abs(_sinc(f / sample_rate))
    if profile.dac_enabled:
        h = h * dac_zoh_response(f, profile.dac_oversample * sample_rate)
    if profile.recon_enabled:
        h = h * butterworth_analog_response(
            RECON_ORDER, profile.recon_cutoff(sample_rate), f
        )
    return h


def rx_response(profile: ImpairmentProfile, f, sample_rate: float) -> np.ndarray:
    """Analytic receive-side linear response (anti-aliasing / ACR filter)."""
    f = np.asarray(f, dtype=np.float64)
    h = np.ones_like(f, dtype=np.complex128)
    if profile.acr_enabled:
        h = h * butterworth_analog_response(ACR_ORDER, profile.acr_cutoff(sample_rate), f)
    return h


def tx_chain(burst: BasebandBurst, profile: ImpairmentProfile) -> BasebandBurst:
    """Transmit front end: predistortion -> DAC droop/ZOH -> reconstruction filter."""
    if profile.tx_transparent:
        return burst.copy_with(burst.samples.copy())
    fs = burst.sample_rate
    return _freq_multiply(burst, lambda f: tx_response(profile, f, fs))


def rx_chain(burst: BasebandBurst, profile: ImpairmentProfile) -> BasebandBurst:
    """Receive front end: ACR filter -> I/Q mismatch -> AGC."""
    out = burst
    if profile.acr_enabled:
        fs = burst.sample_rate
        out = _freq_multiply(out, lambda f: rx_response(profile, f, fs))
    if profile.iq_gain_ratio != 1.0 or profile.iq_phase_deg != 0.0:
        out = apply_iq_mismatch(out, profile.iq_gain_ratio, profile.iq_phase_deg)
    if profile.agc_target_rms is not None:
        out = agc(out, profile.agc_target_rms)
    if out is burst:
        out = burst.copy_with(burst.samples.copy())
    return out


def profile_for_mode(mode: ChannelMode, **overrides) -> ImpairmentProfile:
    """Default profile with the design bandwidth matching a channel mode."""
    design = 40e6 if mode.is_40mhz else 20e6
    return ImpairmentProfile(design_bandwidth_hz=design, **overrides)


PRESETS = {
    "default": ImpairmentProfile(),
    "default40": ImpairmentProfile(design_bandwidth_hz=40e6),
    "identity": ImpairmentProfile.identity(),
    "tracked": ImpairmentProfile(tracking=True),
}


def save_profile(profile: ImpairmentProfile, path: str | Path) -> None:
    """Write a profile as key = value lines (Hz/dB/ppm units as in the field names)."""
    lines = ["# csibench impairment profile v1"]
    for f in fields(profile):
        val = getattr(profile, f.name)
        if f.name == "multipath":
            val = ";".join(f"{int(d)}:{complex(g)}" for d, g in val)
            lines.append(f"{f.name} = {val}")
        else:
            lines.append(f"{f.name} = {val!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_profile(path: str | Path) -> ImpairmentProfile:
    kwargs = {}
    valid = {f.name for f in fields(ImpairmentProfile)}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in valid:
            raise ValueError(f"unknown profile key {key!r}")
        if key == "multipath":
            taps = []
            if val:
                for item in val.split(";"):
                    d, _, g = item.partition(":")
                    taps.append((int(d), complex(g)))
            kwargs[key] = tuple(taps)
        else:
            kwargs[key] = ast.literal_eval(val)
    return ImpairmentProfile(**kwargs)

"""CSI data model and analysis: calibration templates, distortion removal,
adjacent-channel stitching and per-packet CFO/SFO estimation."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .phy.grids import ChannelMode, SubcarrierGrid

__all__ = [
    "CsiFrame",
    "DistortionTemplate",
    "CfoSfoEstimate",
    "DistortionType",
    "CsiError",
    "data_symbol_csi",
    "adjacent_phase_diff",
    "unwrap_phase",
    "detrend_linear",
    "estimate_cfo_sfo",
    "build_distortion_template",
    "remove_distortion",
    "stitch",
    "classify_distortion",
]


class CsiError(ValueError):
    pass


@dataclass(frozen=True)
class CsiFrame:
    """Complex CSI over signed subcarrier indices plus capture metadata."""

    values: np.ndarray
    grid: SubcarrierGrid
    center_freq: float = 0.0
    bandwidth: float = 0.0
    channel_mode: ChannelMode = ChannelMode.HT20
    timestamp: float = 0.0
    source_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if len(vals) != len(self.grid.indices):
            raise CsiError(
                f"{len(vals)} CSI values for a {len(self.grid.indices)}-tone grid"
            )
        if not np.all(np.isfinite(vals)):
            raise CsiError("CSI contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def combo_key(self) -> tuple:
        return (
            self.source_meta.get("tx_id"),
            self.source_meta.get("rx_id"),
            self.channel_mode.value,
            self.bandwidth,
        )

    def tone_frequencies(self) -> np.ndarray:
        """Absolute frequency of each tone in Hz."""
        return self.center_freq + self.grid.indices * self.grid.spacing

    def magnitude_db(self) -> np.ndarray:
        return 20.0 * np.log10(np.abs(self.values))

    def phase_detrended(self) -> np.ndarray:
        detrended, _, _ = detrend_linear(
            unwrap_phase(np.angle(self.values)), self.grid.indices
        )
        return detrended


def data_symbol_csi(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-tone quotient of received and regenerated data symbols."""
    y = np.asarray(y, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    if y.shape != x.shape:
        raise CsiError(f"shape mismatch: received {y.shape}, regenerated {x.shape}")
    zero = np.flatnonzero(x == 0)
    if zero.size:
        raise CsiError(f"regenerated symbol is zero at tone position {zero[0]}")
    return y / x


def adjacent_phase_diff(h_i: np.ndarray, h_next: np.ndarray) -> np.ndarray:
    """Principal-value phase steps between two adjacent data CSI vectors."""
    return np.angle(np.asarray(h_next) * np.conj(np.asarray(h_i)))


def unwrap_phase(values: np.ndarray) -> np.ndarray:
    return np.unwrap(np.asarray(values, dtype=np.float64))


def detrend_linear(
    values: np.ndarray, indices: np.ndarray
) -> tuple[np.ndarray, float, float]:
    """Remove the least-squares line over signed tone indices."""
    values = np.asarray(values, dtype=np.float64)
    x = np.asarray(indices, dtype=np.float64)
    slope, intercept = np.polyfit(x, values, 1)
    return values - (slope * x + intercept), float(slope), float(intercept)


@dataclass(frozen=True)
class CfoSfoEstimate:
    """Residual carrier/sampling offsets fitted from a data-CSI train."""

    cfo_hz: float
    sfo_ppm: float
    residual_rms: float
    n_symbols: int

    def consistent(self, threshold: float = 0.5) -> bool:
        """False when fit residuals suggest the channel moved mid-frame."""
        return self.residual_rms <= threshold


def estimate_cfo_sfo(
    train: np.ndarray, grid: SubcarrierGrid, t_sym: float
) -> CfoSfoEstimate:
    """Fit per-symbol phase advance = 2*pi*t_sym*(cfo + k*spacing*sfo).

    Tone phases are unwrapped along the symbol axis, each tone's advance rate
    is fitted over the whole train, and the rates are regressed against the
    tone index. Unambiguous for |cfo| < 1/(2*t_sym).
    """
    train = np.asarray(train, dtype=np.complex128)
    if train.ndim != 2 or train.shape[0] < 2:
        raise CsiError("need a train of at least 2 data-symbol CSI vectors")
    n_sym, n_tones = train.shape
    if n_tones != len(grid.indices):
        raise CsiError("train width does not match the tone grid")

    theta = np.unwrap(np.angle(train), axis=0)
    i = np.arange(n_sym, dtype=np.float64)
    i_c = i - i.mean()
    # per-tone phase advance per symbol (least-squares slope over time)
    rates = (i_c @ theta) / (i_c @ i_c)

    k = grid.indices.astype(np.float64)
    slope, intercept = np.polyfit(k, rates, 1)
    cfo = intercept / (2 * np.pi * t_sym)
    zeta = slope / (2 * np.pi * t_sym * grid.spacing)

    fitted_rates = intercept + slope * k
    resid = theta - theta.mean(axis=0) - np.outer(i_c, fitted_rates)
    rms = float(np.sqrt(np.mean(resid**2)))
    return CfoSfoEstimate(float(cfo), float(zeta * 1e6), rms, n_sym)


@dataclass(frozen=True)
class DistortionTemplate:
    """Averaged magnitude/detrended-phase distortion for one Tx/Rx/mode combo."""

    indices: np.ndarray
    mag_db: np.ndarray
    phase_rad: np.ndarray
    n_frames: int
    combo_key: tuple
    spacing: float = 312_500.0

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "mag_db", np.asarray(self.mag_db, dtype=np.float64))
        object.__setattr__(
            self, "phase_rad", np.asarray(self.phase_rad, dtype=np.float64)
        )

    def save(self, path: str | Path) -> None:
        buf = io.StringIO()
        buf.write("CSITEMPLATE 1\n")
        tx, rx, mode, bw = self.combo_key
        buf.write(f"tx_id={tx}\nrx_id={rx}\nchannel_mode={mode}\n")
        buf.write(f"bandwidth={float(bw)!r}\nspacing={float(self.spacing)!r}\n")
        buf.write(f"n_frames={self.n_frames}\n")
        buf.write("# tone mag_db phase_rad\n")
        for k, m, p in zip(self.indices, self.mag_db, self.phase_rad):
            buf.write(f"{k} {float(m)!r} {float(p)!r}\n")
        Path(path).write_text(buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "DistortionTemplate":
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("CSITEMPLATE 1"):
            raise CsiError(f"{path}: not a version-1 template file")
        meta = {}
        rows = []
        for line in lines[1:]:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line:
                key, val = line.split("=", 1)
                meta[key] = val
            else:
                k, m, p = line.split()
                rows.append((int(k), float(m), float(p)))
        idx, mag, ph = zip(*rows)
        combo = (
            None if meta["tx_id"] == "None" else meta["tx_id"],
            None if meta["rx_id"] == "None" else meta["rx_id"],
            meta["channel_mode"],
            float(meta["bandwidth"]),
        )
        return cls(
            np.array(idx),
            np.array(mag),
            np.array(ph),
            int(meta["n_frames"]),
            combo,
            float(meta.get("spacing", 312_500.0)),
        )


def build_distortion_template(frames: list[CsiFrame]) -> DistortionTemplate:
    """Average per-tone magnitude and detrended unwrapped phase over frames.

    Per-frame linear phase (timing/synchronization residue) is removed before
    averaging so the template carries only the front-end response.
    """
    if not frames:
        raise CsiError("need at least one frame to build a template")
    key = frames[0].combo_key
    for f in frames[1:]:
        if f.combo_key != key:
            raise CsiError(f"mixed combo keys in template input: {key} vs {f.combo_key}")
    indices = frames[0].grid.indices
    mags = np.stack([f.magnitude_db() for f in frames])
    phases = np.stack([f.phase_detrended() for f in frames])
    mean_phase = phases.mean(axis=0)
    detrended, _, _ = detrend_linear(mean_phase, indices)
    return DistortionTemplate(
        indices=indices,
        mag_db=mags.mean(axis=0),
        phase_rad=detrended,
        n_frames=len(frames),
        combo_key=key,
        spacing=frames[0].grid.spacing,
    )


def remove_distortion(frame: CsiFrame, template: DistortionTemplate) -> CsiFrame:
    """Subtract the template in the log-magnitude and phase domains."""
    if not np.array_equal(frame.grid.indices, template.indices):
        raise CsiError("frame and template tone grids differ")
    mag = frame.magnitude_db() - template.mag_db
    phase = np.angle(frame.values) - template.phase_rad
    values = 10.0 ** (mag / 20.0) * np.exp(1j * phase)
    return CsiFrame(
        values,
        frame.grid,
        frame.center_freq,
        frame.bandwidth,
        frame.channel_mode,
        frame.timestamp,
        dict(frame.source_meta),
    )


def stitch(frames: list[CsiFrame]) -> dict:
    """Merge overlapping-channel CSI into one wideband response.

    Each frame is aligned to the running merge with one complex scale fitted
    on the shared tones (absorbing per-capture gain and synchronization
    phase); the post-alignment disagreement on shared tones is reported.
    """
    if not frames:
        raise CsiError("nothing to stitch")
    ordered = sorted(frames, key=lambda f: (f.center_freq, f.timestamp))

    acc: dict[int, complex] = {}
    counts: dict[int, int] = {}
    mag_res: list[np.ndarray] = []
    phase_res: list[np.ndarray] = []

    for n, frame in enumerate(ordered):
        freqs = np.rint(frame.tone_frequencies()).astype(np.int64)
        vals = frame.values
        if n == 0:
            scale = 1.0 + 0j
        else:
            shared = np.array([i for i, f in enumerate(freqs) if f in acc])
            if shared.size == 0:
                raise CsiError(
                    f"frame at {frame.center_freq / 1e6:.3f} MHz shares no tones "
                    "with the frames merged so far"
                )
            ref = np.array([acc[freqs[i]] / counts[freqs[i]] for i in shared])
            h = vals[shared]
            scale = np.vdot(h, ref) / np.vdot(h, h)
            aligned = scale * h
            mag_res.append(20 * np.log10(np.abs(aligned) / np.abs(ref)))
            phase_res.append(np.angle(aligned / ref))
        for i, f in enumerate(freqs):
            acc[f] = acc.get(f, 0j) + scale * vals[i]
            counts[f] = counts.get(f, 0) + 1

    wideband = [(float(f), acc[f] / counts[f]) for f in sorted(acc)]
    if mag_res:
        mag_rms = float(np.sqrt(np.mean(np.concatenate(mag_res) ** 2)))
        phase_rms = float(np.sqrt(np.mean(np.concatenate(phase_res) ** 2)))
    else:
        mag_rms = phase_rms = 0.0
    return {
        "wideband": wideband,
        "overlap_residual": {"mag_db_rms": mag_rms, "phase_rad_rms": phase_rms},
    }


class DistortionType(Enum):
    TYPE1 = "type1"
    TYPE2 = "type2"
    TYPE3 = "type3"
    FLAT = "flat"


def _smooth(x: np.ndarray, w: int = 3) -> np.ndarray:
    if len(x) < w:
        return x
    kernel = np.ones(w) / w
    pad = w // 2
    padded = np.concatenate([np.full(pad, x[0]), x, np.full(pad, x[-1])])
    return np.convolve(padded, kernel, mode="valid")


def classify_distortion(template: DistortionTemplate) -> DistortionType:
    """Sort a magnitude template into the M / inverted-V / half-band taxonomy."""
    mag = _smooth(template.mag_db - template.mag_db.mean())
    k = template.indices
    span = float(mag.max() - mag.min())
    if span < 0.5:
        return DistortionType.FLAT

    # A grid entirely on one side of DC is a half-band capture: the response
    # covers only one half of the full-band shape.
    if k.min() > 0 or k.max() < 0:
        return DistortionType.TYPE3

    left = k < 0
    right = k > 0
    left_peak = float(mag[left].max())
    right_peak = float(mag[right].max())
    if abs(left_peak - right_peak) > 1.5:
        return DistortionType.TYPE3

    li = int(np.flatnonzero(left)[np.argmax(mag[left])])
    ri = int(np.flatnonzero(right)[np.argmax(mag[right])])
    dip = float(mag[li : ri + 1].min())
    edge_drop = min(left_peak - float(mag[0]), right_peak - float(mag[-1]))
    if min(left_peak, right_peak) - dip >= 0.5 and edge_drop >= 3.0:
        return DistortionType.TYPE1

    center = int(np.argmin(np.abs(k)))
    if np.argmax(mag) in range(center - max(2, len(k) // 10), center + max(3, len(k) // 10)):
        return DistortionType.TYPE2
    return DistortionType.TYPE3


def shoulder_metrics(template: DistortionTemplate) -> dict:
    """Shape metrics used by the classifier, exposed for tests and reports."""
    mag = _smooth(template.mag_db - template.mag_db.mean())
    k = template.indices
    out = {"span_db": float(mag.max() - mag.min())}
    if k.min() > 0 or k.max() < 0:
        out["single_sided"] = True
        return out
    left = k < 0
    right = k > 0
    li = int(np.flatnonzero(left)[np.argmax(mag[left])])
    ri = int(np.flatnonzero(right)[np.argmax(mag[right])])
    peaks, _ = find_peaks(mag, prominence=0.1)
    out.update(
        single_sided=False,
        left_peak_db=float(mag[left].max()),
        right_peak_db=float(mag[right].max()),
        left_peak_tone=int(k[li]),
        right_peak_tone=int(k[ri]),
        dip_db=float(min(mag[left].max(), mag[right].max()) - mag[li : ri + 1].min()),
        edge_drop_db=float(
            min(mag[left].max() - mag[0], mag[right].max() - mag[-1])
        ),
        asymmetry_db=float(abs(mag[left].max() - mag[right].max())),
        n_local_maxima=int(len(peaks)),
    )
    return out

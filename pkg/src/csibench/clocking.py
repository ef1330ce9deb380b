"""Baseband PLL and carrier-synthesizer tuning arithmetic for the QCA9300-class front end.

All frequency math is carried out on exact rationals (``fractions.Fraction``)
and only converted to float at the API boundary, so table lookups and grid
quantization are bit-stable across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

__all__ = [
    "F_XTAL_HZ",
    "SYNTH_STEP_HZ",
    "Band",
    "PllQuadruple",
    "ClockSet",
    "SynthesizerSetting",
    "pll_frequency",
    "derived_clocks",
    "bandwidth_for_quad",
    "quad_for_bandwidth",
    "synth_frequency",
    "chansel_for_carrier",
    "carrier_setting",
    "tuning_resolution",
    "quantize_carrier",
]

# Core crystal oscillator. Fixed by the hardware, not a tunable.
F_XTAL_HZ = 40_000_000

# Synthesizer tuning word granularity: f_xtal / 2^17.
SYNTH_STEP = Fraction(F_XTAL_HZ, 1 << 17)
SYNTH_STEP_HZ = float(SYNTH_STEP)

# Bandwidth tracks the PLL clock through the 10<->11 rate interpolator:
# an 88 MHz PLL clock carries a 20 MHz channel.
_BW_PER_PLL = Fraction(20, 88)


class Band(Enum):
    """Carrier band selector; determines the synthesizer-to-RF conversion ratio."""

    BAND_2G4 = "2g4"
    BAND_5G = "5g"


# RF carrier = _RF_RATIO[band] * f_syn.
_RF_RATIO = {Band.BAND_2G4: Fraction(3, 4), Band.BAND_5G: Fraction(3, 2)}

# Effective carrier grid step per band. The 5 GHz path only reaches every
# third synthesizer step (3 * f_xtal / 2^17 = 915.527 Hz); the 2.4 GHz path
# scales the synthesizer step by 3/4.
_CARRIER_STEP = {
    Band.BAND_2G4: SYNTH_STEP * Fraction(3, 4),
    Band.BAND_5G: SYNTH_STEP * 3,
}

# The vendor table quotes 203.3 Hz for the 2.4 GHz band, which is not
# consistent with the 3/4 conversion ratio (228.9 Hz). We implement the
# ratio-derived step and keep the quoted figure for reference only.
DOCUMENTED_RESOLUTION_2G4_HZ = 203.3

# Carrier ranges actually reachable per band (synthesizer span 3.0-4.0 GHz
# times the conversion ratio).
_CARRIER_RANGE = {
    Band.BAND_2G4: (2.25e9, 3.0e9),
    Band.BAND_5G: (4.5e9, 6.0e9),
}

_SYN_RANGE_HZ = (3.0e9, 4.0e9)


class ClockingError(ValueError):
    """Raised for out-of-domain tuning parameters."""


@dataclass(frozen=True)
class PllQuadruple:
    """PLL tuning word (DIV_INT, REF_DIV, CLK_SEL, HT20_40)."""

    div_int: int
    ref_div: int
    clk_sel: int
    ht20_40: int

    def __post_init__(self):
        if self.div_int < 1:
            raise ClockingError(f"div_int must be >= 1, got {self.div_int}")
        if self.ref_div < 1:
            raise ClockingError(f"ref_div must be >= 1, got {self.ref_div}")
        if self.clk_sel not in (0, 1, 2):
            raise ClockingError(f"clk_sel must be in {{0,1,2}}, got {self.clk_sel}")
        if self.ht20_40 not in (0, 1):
            raise ClockingError(f"ht20_40 must be in {{0,1}}, got {self.ht20_40}")


@dataclass(frozen=True)
class ClockSet:
    """Clocks derived from one PLL setting, all in Hz."""

    f_pll: float
    f_digi_bb: float
    f_rx_adc: float
    f_tx_dac: float
    bandwidth: float


@dataclass(frozen=True)
class SynthesizerSetting:
    """One synthesizer tuning point and its RF carrier."""

    chansel: int
    band: Band
    f_syn: float
    f_rf: float

    @property
    def valid(self) -> bool:
        """True when the VCO frequency lies inside its 3.0-4.0 GHz span."""
        return _SYN_RANGE_HZ[0] <= self.f_syn <= _SYN_RANGE_HZ[1]


def _pll_fraction(quad: PllQuadruple) -> Fraction:
    return (
        Fraction(F_XTAL_HZ, quad.ref_div)
        * quad.div_int
        * Fraction(2**quad.ht20_40, 2 ** (2 + quad.clk_sel))
    )


def pll_frequency(quad: PllQuadruple) -> float:
    """Core baseband PLL frequency in Hz for a tuning quadruple."""
    return float(_pll_fraction(quad))


def bandwidth_for_quad(quad: PllQuadruple) -> float:
    """Channel bandwidth in Hz carried by the PLL setting."""
    return float(_pll_fraction(quad) * _BW_PER_PLL)


def derived_clocks(quad: PllQuadruple) -> ClockSet:
    """Derive the digital-baseband, ADC and DAC clocks from one PLL setting."""
    f = _pll_fraction(quad)
    return ClockSet(
        f_pll=float(f),
        f_digi_bb=float(f / 2),
        f_rx_adc=float(f),
        f_tx_dac=float(f * 2),
        bandwidth=float(f * _BW_PER_PLL),
    )


# Hardware-validated quadruples (vendor bandwidth table rows, both HT20_40
# settings). Preferred on exact bandwidth match so callers get the canonical
# configuration rather than an arbitrary algebraic equivalent; the HT20_40=0
# rows come first so 20 MHz resolves to (44, 5, 0, 0) as on the hardware.
CANONICAL_QUADS = tuple(
    PllQuadruple(d, r, c, h)
    for h in (0, 1)
    for (d, r, c) in [
        (22, 10, 1),
        (22, 10, 0),
        (22, 5, 1),
        (22, 5, 0),
        (33, 5, 0),
        (44, 5, 0),
        (88, 5, 0),
    ]
)

_SEARCH_DIV_INT = range(1, 256)
_SEARCH_REF_DIV = range(1, 11)


@lru_cache(maxsize=256)
def quad_for_bandwidth(target_hz: float) -> PllQuadruple:
    """Find the PLL quadruple whose bandwidth is closest to ``target_hz``.

    Exact matches found in the canonical hardware table win outright;
    otherwise the full (div_int <= 255, ref_div <= 10) space is searched,
    with ties broken by smaller ref_div then smaller div_int.
    """
    if not 2.5e6 <= target_hz <= 80e6:
        raise ClockingError(
            f"target bandwidth {target_hz} Hz outside supported 2.5-80 MHz range"
        )
    target = Fraction(target_hz)

    for quad in CANONICAL_QUADS:
        if _pll_fraction(quad) * _BW_PER_PLL == target:
            return quad

    best = None
    best_key = None
    for ref_div in _SEARCH_REF_DIV:
        for div_int in _SEARCH_DIV_INT:
            for clk_sel in (0, 1, 2):
                for ht in (0, 1):
                    quad = PllQuadruple(div_int, ref_div, clk_sel, ht)
                    err = abs(_pll_fraction(quad) * _BW_PER_PLL - target)
                    key = (err, ref_div, div_int, clk_sel, ht)
                    if best_key is None or key < best_key:
                        best, best_key = quad, key
    return best


def synth_frequency(chansel: int) -> float:
    """Synthesizer VCO frequency in Hz for a CHANSEL tuning word."""
    if chansel < 0:
        raise ClockingError(f"chansel must be unsigned, got {chansel}")
    return float(chansel * SYNTH_STEP)


def chansel_for_carrier(f_rf_hz: float, band: Band) -> int:
    """Nearest CHANSEL word for a requested RF carrier (ties toward lower)."""
    f_syn = Fraction(f_rf_hz) / _RF_RATIO[band]
    n, rem = divmod(f_syn, SYNTH_STEP)
    if rem * 2 > SYNTH_STEP:
        n += 1
    return int(n)


def carrier_setting(f_rf_hz: float, band: Band) -> SynthesizerSetting:
    """Quantized synthesizer setting nearest to a requested carrier."""
    chansel = chansel_for_carrier(f_rf_hz, band)
    f_syn = chansel * SYNTH_STEP
    return SynthesizerSetting(
        chansel=chansel,
        band=band,
        f_syn=float(f_syn),
        f_rf=float(f_syn * _RF_RATIO[band]),
    )


def tuning_resolution(band: Band | None = None) -> float:
    """Carrier grid step in Hz for a band; ``None`` gives the raw synthesizer step."""
    if band is None:
        return float(SYNTH_STEP)
    return float(_CARRIER_STEP[band])


@dataclass(frozen=True)
class CarrierQuantization:
    """Nearest achievable carriers around a requested frequency, in Hz."""

    lower: float
    upper: float
    chosen: float
    step: float


def quantize_carrier(target_hz: float, band: Band) -> CarrierQuantization:
    """Bracket ``target_hz`` between the nearest achievable carrier grid points.

    ``chosen`` is the closer of the two (ties resolve to ``lower``); when the
    target sits exactly on the grid all three coincide.
    """
    lo, hi = _CARRIER_RANGE[band]
    if not lo <= target_hz <= hi:
        raise ClockingError(
            f"carrier {target_hz} Hz outside supported "
            f"{lo / 1e9:.2f}-{hi / 1e9:.2f} GHz range for {band.value}"
        )
    step = _CARRIER_STEP[band]
    target = Fraction(target_hz)
    n, rem = divmod(target, step)
    if rem == 0:
        exact = float(n * step)
        return CarrierQuantization(exact, exact, exact, float(step))
    lower = n * step
    upper = (n + 1) * step
    chosen = lower if target - lower <= upper - target else upper
    return CarrierQuantization(float(lower), float(upper), float(chosen), float(step))

"""PLL quadruple, synthesizer and carrier-grid arithmetic."""

import pytest
from fractions import Fraction

from hypothesis import given, strategies as st

from csibench import clocking
from csibench.clocking import (
    Band,
    ClockingError,
    PllQuadruple,
    bandwidth_for_quad,
    carrier_setting,
    derived_clocks,
    pll_frequency,
    quad_for_bandwidth,
    quantize_carrier,
    synth_frequency,
    tuning_resolution,
)

# Vendor bandwidth table: (div_int, ref_div, clk_sel) -> (bw@ht0, bw@ht1).
BANDWIDTH_TABLE = {
    (22, 10, 1): (2.5e6, 5e6),
    (22, 10, 0): (5e6, 10e6),
    (22, 5, 1): (5e6, 10e6),
    (22, 5, 0): (10e6, 20e6),
    (33, 5, 0): (15e6, 30e6),
    (44, 5, 0): (20e6, 40e6),
    (88, 5, 0): (40e6, 80e6),
}


def test_pll_frequency_reference_points():
    assert pll_frequency(PllQuadruple(44, 5, 0, 0)) == 88e6
    assert pll_frequency(PllQuadruple(44, 5, 0, 1)) == 176e6
    assert pll_frequency(PllQuadruple(22, 10, 1, 0)) == 11e6


def test_bandwidth_table_reproduced_exactly():
    for (d, r, c), (bw0, bw1) in BANDWIDTH_TABLE.items():
        assert bandwidth_for_quad(PllQuadruple(d, r, c, 0)) == bw0
        assert bandwidth_for_quad(PllQuadruple(d, r, c, 1)) == bw1


def test_derived_clocks_ht20_point():
    clocks = derived_clocks(PllQuadruple(44, 5, 0, 0))
    assert clocks.f_pll == 88e6
    assert clocks.f_digi_bb == 44e6
    assert clocks.f_rx_adc == 88e6
    assert clocks.f_tx_dac == 176e6
    assert clocks.bandwidth == 20e6


def test_derived_clock_invariants():
    for quad in clocking.CANONICAL_QUADS:
        c = derived_clocks(quad)
        assert c.f_digi_bb == c.f_pll / 2
        assert c.f_rx_adc == c.f_pll
        assert c.f_tx_dac == 2 * c.f_pll


@given(
    st.integers(1, 127),
    st.integers(1, 10),
    st.integers(0, 2),
    st.integers(0, 1),
)
def test_pll_linear_in_div_int(div_int, ref_div, clk_sel, ht):
    q1 = PllQuadruple(div_int, ref_div, clk_sel, ht)
    q2 = PllQuadruple(2 * div_int, ref_div, clk_sel, ht)
    assert pll_frequency(q2) == 2 * pll_frequency(q1)


def test_quad_validation():
    with pytest.raises(ClockingError):
        PllQuadruple(44, 5, 3, 0)
    with pytest.raises(ClockingError):
        PllQuadruple(44, 5, 0, 2)
    with pytest.raises(ClockingError):
        PllQuadruple(0, 5, 0, 0)


def test_quad_for_bandwidth_canonical_points():
    assert quad_for_bandwidth(20e6) == PllQuadruple(44, 5, 0, 0)
    assert quad_for_bandwidth(2.5e6) == PllQuadruple(22, 10, 1, 0)
    q30 = quad_for_bandwidth(30e6)
    assert bandwidth_for_quad(q30) == 30e6
    assert (q30.div_int, q30.ref_div, q30.clk_sel, q30.ht20_40) == (33, 5, 0, 1)


def test_quad_for_bandwidth_exhaustive_oracle_on_nonexact_target():
    # brute-force reference over the full stated search space
    target = 23.7e6

    def bw(d, r, c, h):
        return Fraction(40_000_000, r) * d * Fraction(2**h, 2 ** (2 + c)) * Fraction(20, 88)

    best = None
    best_quad = None
    for r in range(1, 11):
        for d in range(1, 256):
            for c in (0, 1, 2):
                for h in (0, 1):
                    err = abs(bw(d, r, c, h) - Fraction(target))
                    key = (err, r, d, c, h)
                    if best is None or key < best:
                        best = key
                        best_quad = (d, r, c, h)
    got = quad_for_bandwidth(target)
    assert (got.div_int, got.ref_div, got.clk_sel, got.ht20_40) == best_quad


def test_quad_for_bandwidth_range_errors():
    with pytest.raises(ClockingError):
        quad_for_bandwidth(1e6)
    with pytest.raises(ClockingError):
        quad_for_bandwidth(100e6)


def test_synth_frequency_points():
    assert synth_frequency(1) == pytest.approx(305.17578125, abs=0)
    assert synth_frequency(0) == 0.0
    assert synth_frequency(10_485_760) == 3.2e9


@given(st.integers(0, 2**24), st.integers(0, 2**24))
def test_synth_frequency_additive(a, b):
    # exact in integers scaled by 2^17 / 40 MHz
    scale = 2**17
    fa = synth_frequency(a) * scale
    fb = synth_frequency(b) * scale
    fab = synth_frequency(a + b) * scale
    assert fab == fa + fb


def test_tuning_resolution_constants():
    assert tuning_resolution(Band.BAND_5G) == pytest.approx(915.52734375, abs=1e-9)
    assert tuning_resolution(Band.BAND_2G4) == pytest.approx(228.881835938, abs=1e-6)
    assert tuning_resolution(None) == pytest.approx(305.17578125, abs=0)
    assert clocking.DOCUMENTED_RESOLUTION_2G4_HZ == 203.3


def test_quantize_5200mhz_bracket():
    q = quantize_carrier(5.2e9, Band.BAND_5G)
    assert q.lower == pytest.approx(5199.999389e6, abs=1.0)
    assert q.upper == pytest.approx(5200.000305e6, abs=1.0)
    assert q.step == pytest.approx(915.52734375, abs=1e-9)
    assert q.upper - q.lower == pytest.approx(q.step, abs=1e-9)
    assert q.lower <= 5.2e9 <= q.upper


def test_quantize_2400mhz_exact_grid_point():
    # 2.4 GHz / (3/4 * 40 MHz / 2^17) is an exact integer
    step = Fraction(3, 4) * Fraction(40_000_000, 2**17)
    assert Fraction(2_400_000_000, 1) % step == 0
    q = quantize_carrier(2.4e9, Band.BAND_2G4)
    assert q.lower == q.upper == q.chosen == 2.4e9


def test_quantize_idempotent():
    q = quantize_carrier(5.2e9, Band.BAND_5G)
    q2 = quantize_carrier(q.chosen, Band.BAND_5G)
    assert q2.lower == q2.upper == q2.chosen == q.chosen


@given(st.floats(4.5e9, 6.0e9))
def test_quantize_bracketing_properties(target):
    q = quantize_carrier(target, Band.BAND_5G)
    assert q.lower <= target <= q.upper
    assert abs(q.chosen - target) <= q.step / 2 + 1e-6
    assert q.chosen in (q.lower, q.upper)


def test_quantize_range_errors():
    with pytest.raises(ClockingError):
        quantize_carrier(3.5e9, Band.BAND_2G4)
    with pytest.raises(ClockingError):
        quantize_carrier(7e9, Band.BAND_5G)


def test_carrier_setting_synthesizer_range():
    s = carrier_setting(5.2e9, Band.BAND_5G)
    assert s.valid
    assert 3.0e9 <= s.f_syn <= 4.0e9
    assert s.f_rf == pytest.approx(1.5 * s.f_syn, abs=1e-3)
    s24 = carrier_setting(2.4e9, Band.BAND_2G4)
    assert s24.f_syn == pytest.approx(3.2e9, abs=1e-3)
    assert s24.chansel == 10_485_760

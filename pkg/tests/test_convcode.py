"""Convolutional codec: encoder reference, puncturing, Viterbi correction."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csibench.phy.convcode import (
    CodeRate,
    _viterbi_numpy,
    _branch_costs,
    _depuncture,
    bcc_decode,
    bcc_encode,
)


def encode_reference(bits):
    """Shift-register reference encoder (133/171 octal, oldest-first taps)."""
    g_a = [1, 0, 1, 1, 0, 1, 1]  # b_i, b_{i-1}, ..., b_{i-6}
    g_b = [1, 1, 1, 1, 0, 0, 1]
    window = [0] * 7
    out = []
    for b in bits:
        window = [int(b)] + window[:6]
        out.append(sum(w * g for w, g in zip(window, g_a)) % 2)
        out.append(sum(w * g for w, g in zip(window, g_b)) % 2)
    return np.array(out, dtype=np.uint8)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=200))
def test_encoder_matches_reference(bits):
    bits = np.array(bits, dtype=np.uint8)
    assert np.array_equal(bcc_encode(bits, CodeRate.R1_2), encode_reference(bits))


def test_all_zero_input_gives_zero_codeword():
    for rate, period in [
        (CodeRate.R1_2, 1),
        (CodeRate.R2_3, 2),
        (CodeRate.R3_4, 3),
        (CodeRate.R5_6, 5),
    ]:
        bits = np.zeros(30 * period, dtype=np.uint8)
        assert not bcc_encode(bits, rate).any()


@pytest.mark.parametrize(
    "rate,period,coded_per_period",
    [
        (CodeRate.R1_2, 1, 2),
        (CodeRate.R2_3, 2, 3),
        (CodeRate.R3_4, 3, 4),
        (CodeRate.R5_6, 5, 6),
    ],
)
def test_roundtrip_all_rates(rate, period, coded_per_period):
    rng = np.random.default_rng(7)
    n = 60 * period
    bits = rng.integers(0, 2, n).astype(np.uint8)
    coded = bcc_encode(bits, rate)
    assert len(coded) == (n // period) * coded_per_period
    assert np.array_equal(bcc_decode(coded, rate, n), bits)


def test_coded_length_matches_rate():
    n = 300
    assert len(bcc_encode(np.zeros(n, np.uint8), CodeRate.R1_2)) == 2 * n
    assert len(bcc_encode(np.zeros(n, np.uint8), CodeRate.R2_3)) == 3 * n // 2
    assert len(bcc_encode(np.zeros(n, np.uint8), CodeRate.R3_4)) == 4 * n // 3
    assert len(bcc_encode(np.zeros(n, np.uint8), CodeRate.R5_6)) == 6 * n // 5


def test_thousand_bit_roundtrip():
    rng = np.random.default_rng(11)
    bits = rng.integers(0, 2, 1020).astype(np.uint8)  # multiple of all periods
    for rate in CodeRate:
        coded = bcc_encode(bits, rate)
        assert np.array_equal(bcc_decode(coded, rate, len(bits)), bits)


def test_single_coded_bit_error_corrected():
    # tail zeros terminate the trellis, as every real frame does
    rng = np.random.default_rng(3)
    bits = np.concatenate([rng.integers(0, 2, 394), np.zeros(6, np.int64)]).astype(np.uint8)
    coded = bcc_encode(bits, CodeRate.R1_2)
    for pos in (0, 57, 399, 799):
        corrupted = coded.copy()
        corrupted[pos] ^= 1
        assert np.array_equal(bcc_decode(corrupted, CodeRate.R1_2, 400), bits)


def test_two_bit_bursts_far_apart_corrected():
    rng = np.random.default_rng(5)
    bits = np.concatenate([rng.integers(0, 2, 594), np.zeros(6, np.int64)]).astype(np.uint8)
    coded = bcc_encode(bits, CodeRate.R1_2)
    corrupted = coded.copy()
    corrupted[100] ^= 1
    corrupted[101] ^= 1
    corrupted[700] ^= 1
    corrupted[701] ^= 1
    assert np.array_equal(bcc_decode(corrupted, CodeRate.R1_2, 600), bits)


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        bcc_decode(np.zeros(99, np.uint8), CodeRate.R1_2, 50)
    with pytest.raises(ValueError):
        bcc_encode(np.zeros(7, np.uint8), CodeRate.R2_3)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_kernel_agreement(seed):
    # the accelerated path must match the reference numpy trellis
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, 120).astype(np.uint8)
    coded = bcc_encode(bits, CodeRate.R3_4)
    noisy = coded.copy()
    flips = rng.choice(len(coded), 4, replace=False)
    noisy[flips] ^= 1
    full = _depuncture(noisy, CodeRate.R3_4, 120)
    costs = _branch_costs(full.reshape(-1, 2))
    via_numpy = _viterbi_numpy(costs)
    assert np.array_equal(bcc_decode(noisy, CodeRate.R3_4, 120), via_numpy)

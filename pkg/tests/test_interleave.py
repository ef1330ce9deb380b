"""Block interleaver vs an independently coded two-step oracle."""

import numpy as np
import pytest

from csibench.phy.interleave import deinterleave, interleave, interleaver_permutation

GEOMETRIES = [
    # legacy 48 data tones
    (48, 1), (96, 2), (192, 4), (288, 6),
    # HT20 52 data tones
    (52, 1), (104, 2), (208, 4), (312, 6),
    # HT40 108 data tones
    (108, 1), (216, 2), (432, 4), (648, 6),
]


def oracle_table(n_cbps, n_bpsc):
    """Brute-force index table with matrix fill/read mechanics for step one.

    The block is written row-major into an (n_row x n_col) matrix and read
    back column-major; the second step then cycles each bit inside its
    s-sized group by the standard lag term.
    """
    n_col = {48: 16, 52: 13, 108: 18}[n_cbps // n_bpsc]
    n_row = n_cbps // n_col
    s = max(n_bpsc // 2, 1)

    matrix = [[None] * n_col for _ in range(n_row)]
    for k in range(n_cbps):
        matrix[k // n_col][k % n_col] = k
    first = []
    for c in range(n_col):
        for r in range(n_row):
            first.append(matrix[r][c])
    # first[i] = source bit index occupying intermediate position i

    out = [None] * n_cbps
    for i, src in enumerate(first):
        group = (i // s) * s
        j = group + (i + n_cbps - (n_col * i) // n_cbps) % s
        out[src] = j
    return out


@pytest.mark.parametrize("n_cbps,n_bpsc", GEOMETRIES)
def test_permutation_matches_oracle(n_cbps, n_bpsc):
    assert list(interleaver_permutation(n_cbps, n_bpsc)) == oracle_table(n_cbps, n_bpsc)


@pytest.mark.parametrize("n_cbps,n_bpsc", GEOMETRIES)
def test_roundtrip_identity(n_cbps, n_bpsc):
    rng = np.random.default_rng(n_cbps)
    bits = rng.integers(0, 2, n_cbps).astype(np.uint8)
    assert np.array_equal(deinterleave(interleave(bits, n_cbps, n_bpsc), n_cbps, n_bpsc), bits)


def test_output_is_permutation():
    rng = np.random.default_rng(0)
    vals = rng.integers(0, 255, 52).astype(np.uint8)
    out = interleave(vals, 52, 1)
    assert sorted(out) == sorted(vals)
    assert not np.array_equal(out, vals)


def test_adjacent_coded_bits_spread_across_tones():
    # neighbouring input bits must land on well-separated subcarriers
    perm = interleaver_permutation(52, 1)
    assert all(abs(int(perm[k + 1]) - int(perm[k])) >= 4 for k in range(51))


def test_length_mismatch():
    with pytest.raises(ValueError):
        interleave(np.zeros(50, np.uint8), 52, 1)
    with pytest.raises(ValueError):
        interleave(np.zeros(64, np.uint8), 64, 1)

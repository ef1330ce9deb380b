"""Binary convolutional code: K=7 (133/171) encoder, puncturing, Viterbi decoder."""

from __future__ import annotations

from enum import Enum

import numpy as np

__all__ = ["CodeRate", "bcc_encode", "bcc_decode"]

G_A = 0o133
G_B = 0o171
N_STATES = 64

# Branch erasure marker in depunctured hard-bit streams.
ERASED = 2


class CodeRate(Enum):
    R1_2 = "1/2"
    R2_3 = "2/3"
    R3_4 = "3/4"
    R5_6 = "5/6"


# Puncture patterns per info-bit period: (A mask, B mask).
_PUNCTURE = {
    CodeRate.R1_2: (np.array([1]), np.array([1])),
    CodeRate.R2_3: (np.array([1, 1]), np.array([1, 0])),
    CodeRate.R3_4: (np.array([1, 1, 0]), np.array([1, 0, 1])),
    CodeRate.R5_6: (np.array([1, 1, 0, 1, 0]), np.array([1, 0, 1, 0, 1])),
}

_PARITY = np.array([bin(i).count("1") & 1 for i in range(128)], dtype=np.uint8)

# Trellis tables indexed by next-state: the two predecessor states and the
# expected (a, b) output pair for each of the two incoming branches.
_PREV = np.empty((2, N_STATES), dtype=np.int64)
_OUT = np.empty((2, N_STATES), dtype=np.int64)  # packed 2*a + b
for _s_next in range(N_STATES):
    _b = _s_next >> 5
    for _t in range(2):
        _s_prev = ((_s_next & 0x1F) << 1) | _t
        _reg = (_b << 6) | _s_prev
        _PREV[_t, _s_next] = _s_prev
        _OUT[_t, _s_next] = 2 * int(_PARITY[_reg & G_A]) + int(_PARITY[_reg & G_B])


def _mother_encode(bits: np.ndarray) -> np.ndarray:
    """Rate-1/2 mother code output, interleaved (a0, b0, a1, b1, ...)."""
    padded = np.concatenate([np.zeros(6, dtype=np.uint8), bits])
    win = np.lib.stride_tricks.sliding_window_view(padded, 7)
    # window position 0 is the oldest bit and maps to register bit 0
    weights = np.array([1, 2, 4, 8, 16, 32, 64], dtype=np.int64)
    regs = win.astype(np.int64) @ weights
    out = np.empty(2 * len(bits), dtype=np.uint8)
    out[0::2] = _PARITY[regs & G_A]
    out[1::2] = _PARITY[regs & G_B]
    return out


def _pair_mask(rate: CodeRate, n_info: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = _PUNCTURE[rate]
    period = len(a)
    if n_info % period:
        raise ValueError(
            f"{n_info} info bits not a multiple of the rate-{rate.value} "
            f"puncture period {period}"
        )
    reps = n_info // period
    return np.tile(a, reps).astype(bool), np.tile(b, reps).astype(bool)


def bcc_encode(bits: np.ndarray, rate: CodeRate = CodeRate.R1_2) -> np.ndarray:
    """Encode hard bits at the given rate (mother code plus puncturing)."""
    bits = np.asarray(bits, dtype=np.uint8)
    mother = _mother_encode(bits)
    mask_a, mask_b = _pair_mask(rate, len(bits))
    keep = np.empty(2 * len(bits), dtype=bool)
    keep[0::2] = mask_a
    keep[1::2] = mask_b
    return mother[keep]


def _depuncture(coded: np.ndarray, rate: CodeRate, n_info: int) -> np.ndarray:
    mask_a, mask_b = _pair_mask(rate, n_info)
    keep = np.empty(2 * n_info, dtype=bool)
    keep[0::2] = mask_a
    keep[1::2] = mask_b
    if len(coded) != int(keep.sum()):
        raise ValueError(
            f"coded length {len(coded)} inconsistent with rate {rate.value} "
            f"and {n_info} info bits (expected {int(keep.sum())})"
        )
    full = np.full(2 * n_info, ERASED, dtype=np.uint8)
    full[keep] = coded
    return full


def _branch_costs(pairs: np.ndarray) -> np.ndarray:
    """Per-step cost of each of the four (a, b) hypotheses; erasures cost 0."""
    a = pairs[:, 0]
    b = pairs[:, 1]
    hyp_a = np.array([0, 0, 1, 1], dtype=np.uint8)
    hyp_b = np.array([0, 1, 0, 1], dtype=np.uint8)
    cost_a = np.where(a[:, None] == ERASED, 0, a[:, None] != hyp_a[None, :])
    cost_b = np.where(b[:, None] == ERASED, 0, b[:, None] != hyp_b[None, :])
    return (cost_a + cost_b).astype(np.float32)


def _viterbi_numpy(costs: np.ndarray) -> np.ndarray:
    n = len(costs)
    pm = np.full(N_STATES, 1e9, dtype=np.float32)
    pm[0] = 0.0
    decisions = np.empty((n, N_STATES), dtype=np.uint8)
    prev0, prev1 = _PREV[0], _PREV[1]
    out0, out1 = _OUT[0], _OUT[1]
    for t in range(n):
        c = costs[t]
        cand0 = pm[prev0] + c[out0]
        cand1 = pm[prev1] + c[out1]
        take1 = cand1 < cand0
        decisions[t] = take1
        pm = np.where(take1, cand1, cand0)
    state = int(np.argmin(pm))
    bits = np.empty(n, dtype=np.uint8)
    for t in range(n - 1, -1, -1):
        bits[t] = state >> 5
        state = int(_PREV[decisions[t, state], state])
    return bits


try:  # pragma: no cover - exercised implicitly when numba is installed
    from numba import njit

    @njit(cache=True)
    def _viterbi_kernel(costs, prev, out):
        n = costs.shape[0]
        pm = np.full(N_STATES, 1e9, dtype=np.float32)
        pm[0] = 0.0
        nxt = np.empty(N_STATES, dtype=np.float32)
        decisions = np.empty((n, N_STATES), dtype=np.uint8)
        for t in range(n):
            for s in range(N_STATES):
                c0 = pm[prev[0, s]] + costs[t, out[0, s]]
                c1 = pm[prev[1, s]] + costs[t, out[1, s]]
                if c1 < c0:
                    nxt[s] = c1
                    decisions[t, s] = 1
                else:
                    nxt[s] = c0
                    decisions[t, s] = 0
            pm[:] = nxt
        state = 0
        best = pm[0]
        for s in range(1, N_STATES):
            if pm[s] < best:
                best = pm[s]
                state = s
        bits = np.empty(n, dtype=np.uint8)
        for t in range(n - 1, -1, -1):
            bits[t] = state >> 5
            state = prev[decisions[t, state], state]
        return bits

    def _viterbi(costs: np.ndarray) -> np.ndarray:
        return _viterbi_kernel(costs, _PREV, _OUT)

except ImportError:  # pragma: no cover
    _viterbi = _viterbi_numpy


def bcc_decode(coded: np.ndarray, rate: CodeRate, n_info: int) -> np.ndarray:
    """Viterbi-decode ``n_info`` bits from a (punctured) hard-bit stream."""
    coded = np.asarray(coded, dtype=np.uint8)
    full = _depuncture(coded, rate, n_info)
    costs = _branch_costs(full.reshape(-1, 2))
    return _viterbi(costs)

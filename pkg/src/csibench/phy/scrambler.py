"""Frame-synchronous data scrambler (x^7 + x^4 + 1 LFSR)."""

from __future__ import annotations

import numpy as np

__all__ = ["keystream", "scramble", "recover_seed", "pilot_polarity"]

_CYCLES: dict[int, np.ndarray] = {}
_HEAD_TO_SEED: dict[tuple, int] = {}


def _cycle(seed: int) -> np.ndarray:
    """One full 127-bit period of the LFSR output for a 7-bit state.

    State bit 6 is the oldest register stage; the feedback (stage 7 XOR
    stage 4) is emitted and shifted back in.
    """
    cyc = _CYCLES.get(seed)
    if cyc is None:
        out = np.empty(127, dtype=np.uint8)
        s = seed
        for i in range(127):
            b = ((s >> 6) ^ (s >> 3)) & 1
            out[i] = b
            s = ((s << 1) | b) & 0x7F
        cyc = out
        _CYCLES[seed] = cyc
    return cyc


def keystream(seed: int, n: int) -> np.ndarray:
    """Generate ``n`` LFSR output bits starting from a 7-bit state."""
    if not 1 <= seed <= 127:
        raise ValueError(f"scrambler seed must be in [1,127], got {seed}")
    cyc = _cycle(seed)
    reps = -(-n // 127)
    return np.tile(cyc, reps)[:n]


def scramble(seed: int, bits: np.ndarray) -> np.ndarray:
    """XOR a bit sequence with the seed's keystream. Self-inverse."""
    bits = np.asarray(bits, dtype=np.uint8)
    return bits ^ keystream(seed, len(bits))


def recover_seed(scrambled_head: np.ndarray) -> int:
    """Recover the initial state from the first 7 scrambled bits.

    The service field starts with 7 zero bits, so the first 7 received
    scrambled bits are the raw keystream.
    """
    if not _HEAD_TO_SEED:
        for seed in range(1, 128):
            _HEAD_TO_SEED[tuple(_cycle(seed)[:7])] = seed
    head = tuple(int(b) for b in np.asarray(scrambled_head[:7], dtype=np.uint8))
    seed = _HEAD_TO_SEED.get(head)
    if seed is None:
        raise ValueError("no scrambler seed reproduces the received service bits")
    return seed


_PILOT_POLARITY = None


def pilot_polarity() -> np.ndarray:
    """The 127-element +/-1 pilot polarity sequence (all-ones LFSR keystream)."""
    global _PILOT_POLARITY
    if _PILOT_POLARITY is None:
        _PILOT_POLARITY = (1 - 2 * _cycle(127).astype(np.int8)).astype(np.float64)
    return _PILOT_POLARITY

"""Complex-sample burst container and raw I/Q file exchange."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["BasebandBurst", "write_iq", "read_iq"]


@dataclass
class BasebandBurst:
    """A contiguous stream of complex baseband samples.

    ``center_freq`` is carried as an annotation only; the samples are always
    at baseband.
    """

    samples: np.ndarray
    sample_rate: float
    center_freq: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("burst contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def copy_with(self, samples: np.ndarray) -> "BasebandBurst":
        return BasebandBurst(samples, self.sample_rate, self.center_freq)


def write_iq(burst: BasebandBurst, path: str | Path) -> None:
    """Write interleaved little-endian float32 I/Q plus a JSON sidecar."""
    path = Path(path)
    iq = np.empty(2 * len(burst.samples), dtype="<f4")
    iq[0::2] = burst.samples.real
    iq[1::2] = burst.samples.imag
    iq.tofile(path)
    meta = {"sample_rate": burst.sample_rate, "center_freq": burst.center_freq}
    path.with_suffix(path.suffix + ".meta").write_text(json.dumps(meta))


def read_iq(path: str | Path) -> BasebandBurst:
    path = Path(path)
    iq = np.fromfile(path, dtype="<f4")
    meta = json.loads(path.with_suffix(path.suffix + ".meta").read_text())
    samples = iq[0::2].astype(np.float64) + 1j * iq[1::2].astype(np.float64)
    return BasebandBurst(samples, meta["sample_rate"], meta["center_freq"])

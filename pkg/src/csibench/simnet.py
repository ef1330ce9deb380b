"""Deterministic virtual-time harness linking two virtual NICs.

All timing is virtual microseconds driven by an event heap; there are no
wall-clock reads, so identical inputs give identical traces and identical
delivered sample streams.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import clocking
from .impairments import (
    ImpairmentProfile,
    apply_awgn,
    apply_cfo,
    apply_multipath,
    apply_sfo,
    rx_chain,
    tx_chain,
)
from .phy.burst import BasebandBurst

__all__ = ["Scheduler", "VirtualNic", "VirtualLink", "NetworkSim"]


class Scheduler:
    """Min-heap event loop over virtual microseconds.

    Events at equal times run in insertion order.
    """

    def __init__(self):
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self._cancelled: set[int] = set()
        self.trace: list[tuple[float, str, dict]] = []

    def schedule(self, delay_us: float, callback, label: str = "event", **detail) -> int:
        """Queue a callback ``delay_us`` after the current virtual time."""
        if delay_us < 0:
            raise ValueError("cannot schedule into the past")
        self._seq += 1
        handle = self._seq
        heapq.heappush(self._heap, (self.now + delay_us, handle, callback, label, detail))
        return handle

    def cancel(self, handle: int) -> None:
        self._cancelled.add(handle)

    def run_until_idle(self) -> list[tuple[float, str, dict]]:
        while self._heap:
            at, handle, callback, label, detail = heapq.heappop(self._heap)
            if handle in self._cancelled:
                self._cancelled.discard(handle)
                continue
            self.now = at
            self.trace.append((at, label, detail))
            callback()
        return self.trace

    def export_trace(self) -> str:
        lines = [f"{t:.3f}us {label} {detail}" for t, label, detail in self.trace]
        return "\n".join(lines)


@dataclass
class VirtualNic:
    """One radio endpoint: quantized tuning state plus front-end profiles."""

    node_id: str
    tx_profile: ImpairmentProfile = field(default_factory=ImpairmentProfile)
    rx_profile: ImpairmentProfile = field(default_factory=ImpairmentProfile)
    txcm: int = 1
    rxcm: int = 1
    cf_nominal: float = 2.412e9
    sf_nominal: float = 20e6
    cf_tuned: float = 0.0
    sf_tuned: float = 0.0
    on_receive = None  # callback(burst_or_payload, meta)

    def __post_init__(self):
        if self.txcm <= 0 or self.rxcm <= 0:
            raise ValueError("chain masks need at least one active chain")
        self.tune(self.cf_nominal, self.sf_nominal)

    @property
    def tx_chain_index(self) -> int:
        """Lowest selected transmit chain (single-stream operation)."""
        return (self.txcm & -self.txcm).bit_length() - 1

    def tune(self, cf_hz: float, sf_hz: float, prefer: str = "nearest") -> None:
        """Retune to the nearest achievable carrier grid point and bandwidth.

        ``prefer`` picks the lower or upper neighbouring carrier grid point
        instead of the nearest one, mirroring the two achievable carriers
        around an unreachable target.
        """
        band = clocking.Band.BAND_2G4 if cf_hz < 3.6e9 else clocking.Band.BAND_5G
        q = clocking.quantize_carrier(cf_hz, band)
        if prefer == "lower":
            self.cf_tuned = q.lower
        elif prefer == "upper":
            self.cf_tuned = q.upper
        else:
            self.cf_tuned = q.chosen
        quad = clocking.quad_for_bandwidth(sf_hz)
        self.sf_tuned = clocking.bandwidth_for_quad(quad)
        self.cf_nominal = cf_hz
        self.sf_nominal = sf_hz

    def overlaps(self, other: "VirtualNic") -> bool:
        gap = abs(self.cf_tuned - other.cf_tuned)
        return gap < (self.sf_tuned + other.sf_tuned) / 2


@dataclass
class VirtualLink:
    """Channel between two NICs: latency, deterministic loss, impairments."""

    latency_us: float = 10.0
    loss_prob: float = 0.0
    seed: int = 0
    channel_ab: ImpairmentProfile = field(default_factory=ImpairmentProfile.identity)
    channel_ba: ImpairmentProfile = field(default_factory=ImpairmentProfile.identity)

    @classmethod
    def symmetric(cls, channel: ImpairmentProfile, **kwargs) -> "VirtualLink":
        """Both directions share one channel; oscillator offsets mirror."""
        return cls(channel_ab=channel, channel_ba=channel.mirrored(), **kwargs)


class NetworkSim:
    """Two NICs, one link, one scheduler."""

    def __init__(self, nic_a: VirtualNic, nic_b: VirtualNic, link: VirtualLink):
        self.scheduler = Scheduler()
        self.nic_a = nic_a
        self.nic_b = nic_b
        self.link = link
        self._msg_index = 0
        self.drops: list[dict] = []

    def _peer(self, nic: VirtualNic) -> VirtualNic:
        return self.nic_b if nic is self.nic_a else self.nic_a

    def _direction(self, src: VirtualNic) -> ImpairmentProfile:
        return self.link.channel_ab if src is self.nic_a else self.link.channel_ba

    def _lost(self, msg_index: int) -> bool:
        if self.link.loss_prob <= 0:
            return False
        rng = np.random.Generator(
            np.random.Philox(key=np.uint64(self.link.seed), counter=np.uint64(msg_index))
        )
        return bool(rng.random() < self.link.loss_prob)

    def transmit(self, nic: VirtualNic, burst: BasebandBurst, meta: dict | None = None):
        """Send a burst through tx chain, channel and the peer's rx chain.

        The effective carrier offset is the difference of the two NICs'
        quantized carriers plus the channel's oscillator offset. Frames on
        non-overlapping tunes are dropped and recorded, not raised.
        """
        peer = self._peer(nic)
        channel = self._direction(nic)
        idx = self._msg_index
        self._msg_index += 1
        airtime_us = burst.duration * 1e6

        if not nic.overlaps(peer):
            self.drops.append(
                {"at": self.scheduler.now, "msg": idx, "reason": "no spectral overlap",
                 "tx": (nic.cf_tuned, nic.sf_tuned), "rx": (peer.cf_tuned, peer.sf_tuned)}
            )
            return None
        if self._lost(idx):
            self.drops.append({"at": self.scheduler.now, "msg": idx, "reason": "loss"})
            return None

        shaped = tx_chain(burst, nic.tx_profile)
        shaped = apply_multipath(shaped, channel.multipath)
        cfo = (nic.cf_tuned - peer.cf_tuned) + channel.cfo_hz
        shaped = apply_cfo(shaped, cfo)
        if channel.sfo_ppm:
            shaped = apply_sfo(shaped, channel.sfo_ppm)
        if channel.snr_db is not None:
            shaped = apply_awgn(shaped, channel.snr_db, self.link.seed, stream=idx)
        delivered = rx_chain(shaped, peer.rx_profile)

        def deliver():
            if peer.on_receive is not None:
                peer.on_receive(delivered, dict(meta or {}, msg_index=idx))

        self.scheduler.schedule(
            self.link.latency_us + airtime_us,
            deliver,
            label="deliver",
            src=nic.node_id,
            dst=peer.node_id,
            msg=idx,
        )
        return idx

    def transmit_payload(self, nic: VirtualNic, payload: bytes, airtime_us: float,
                         meta: dict | None = None):
        """Protocol-fidelity shortcut: same loss/timing bookkeeping, no DSP."""
        peer = self._peer(nic)
        idx = self._msg_index
        self._msg_index += 1
        if not nic.overlaps(peer):
            self.drops.append(
                {"at": self.scheduler.now, "msg": idx, "reason": "no spectral overlap",
                 "tx": (nic.cf_tuned, nic.sf_tuned), "rx": (peer.cf_tuned, peer.sf_tuned)}
            )
            return None
        if self._lost(idx):
            self.drops.append({"at": self.scheduler.now, "msg": idx, "reason": "loss"})
            return None

        def deliver():
            if peer.on_receive is not None:
                peer.on_receive(payload, dict(meta or {}, msg_index=idx))

        self.scheduler.schedule(
            self.link.latency_us + airtime_us,
            deliver,
            label="deliver",
            src=nic.node_id,
            dst=peer.node_id,
            msg=idx,
        )
        return idx

"""Round-trip CSI measurement protocol: initiator/responder state machines,
synchronized frequency jumps, and the scan runner over the virtual link."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .capture import CaptureRecord, decode_record, encode_record
from .measure import estimate_airtime_us, record_from_rx
from .phy.frame import FrameConfig
from .phy.grids import ChannelMode, grid_for_mode
from .phy.rx import DecodeError, receive_frame
from .simnet import NetworkSim, VirtualLink, VirtualNic

__all__ = [
    "MessageKind",
    "ProbeMessage",
    "ScanPlan",
    "ScanReport",
    "expand_range",
    "InitiatorState",
    "ResponderState",
    "initiator_step",
    "responder_step",
    "run_scan",
]

MAGIC = b"EPB1"
_HEADER = struct.Struct("<4sBBHII")
_POINT = struct.Struct("<QQ")


class MessageKind(IntEnum):
    CSI_PROBE_REQUEST = 1
    CSI_PROBE_REPLY = 2
    FREQ_CHANGE_REQUEST = 3
    FREQ_CHANGE_ACK = 4


@dataclass(frozen=True)
class ProbeMessage:
    """Protocol frame payload. Replies echo the request's sequence number."""

    kind: MessageKind
    session_id: int
    seq: int
    cf_hz: int
    sf_hz: int
    record: CaptureRecord | None = None

    def serialize(self) -> bytes:
        out = bytearray()
        out += _HEADER.pack(MAGIC, int(self.kind), 0, 0, self.session_id, self.seq)
        out += _POINT.pack(self.cf_hz, self.sf_hz)
        if self.kind == MessageKind.CSI_PROBE_REPLY:
            if self.record is None:
                raise ValueError("probe replies must carry a CSI record")
            out += encode_record(self.record)
        return bytes(out)

    @classmethod
    def parse(cls, buf: bytes) -> "ProbeMessage":
        if len(buf) < _HEADER.size + _POINT.size:
            raise ValueError("message shorter than the fixed header")
        magic, kind, _flags, _res, session, seq = _HEADER.unpack_from(buf, 0)
        if magic != MAGIC:
            raise ValueError(f"bad message magic {magic!r}")
        cf, sf = _POINT.unpack_from(buf, _HEADER.size)
        record = None
        if kind == MessageKind.CSI_PROBE_REPLY:
            record, _ = decode_record(buf, _HEADER.size + _POINT.size)
        return cls(MessageKind(kind), session, seq, cf, sf, record)


def expand_range(spec: str) -> list[float]:
    """Parse start:step:stop into an inclusive arithmetic sequence of Hz."""
    parts = spec.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise ValueError(f"range must be 'value' or 'start:step:stop', got {spec!r}")
    start, step, stop = (float(p) for p in parts)
    if step <= 0:
        raise ValueError(f"range step must be positive, got {step}")
    if stop < start:
        raise ValueError(f"range stop {stop} below start {start}")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


@dataclass(frozen=True)
class ScanPlan:
    cf_points: tuple
    sf_points: tuple
    repeat: int = 1
    delay_us: float = 5000.0
    mcs: int = 0
    n_ess: int = 0
    txcm: int = 1
    rxcm: int = 1
    retry_limit: int = 5
    retry_timeout_us: float = 2000.0
    turnaround_us: float = 5.0

    def __post_init__(self):
        if not self.cf_points or not self.sf_points:
            raise ValueError("scan plan needs at least one cf and one sf point")
        if list(self.cf_points) != sorted(self.cf_points) or len(set(self.cf_points)) != len(self.cf_points):
            raise ValueError("cf points must be strictly increasing")
        if list(self.sf_points) != sorted(self.sf_points) or len(set(self.sf_points)) != len(self.sf_points):
            raise ValueError("sf points must be strictly increasing")
        if self.repeat < 1:
            raise ValueError("repeat must be >= 1")

    @property
    def points(self) -> list[tuple[float, float]]:
        return [(cf, sf) for cf in self.cf_points for sf in self.sf_points]


# --- protocol actions (interpreted by the runner) ---


@dataclass(frozen=True)
class Send:
    msg: ProbeMessage


@dataclass(frozen=True)
class SetTimer:
    key: str
    delay_us: float


@dataclass(frozen=True)
class CancelTimer:
    key: str


@dataclass(frozen=True)
class Retune:
    cf_hz: float
    sf_hz: float


@dataclass(frozen=True)
class Record:
    point_index: int
    repeat_index: int
    local: CaptureRecord | None
    remote: CaptureRecord | None


@dataclass(frozen=True)
class MarkFailed:
    point_index: int
    repeat_index: int | None
    reason: str


@dataclass(frozen=True)
class Finish:
    pass


# --- events ---


@dataclass(frozen=True)
class PlanStarted:
    pass


@dataclass(frozen=True)
class FrameReceived:
    msg: ProbeMessage
    local_record: CaptureRecord | None = None


@dataclass(frozen=True)
class TimeoutFired:
    key: str


@dataclass(frozen=True)
class InitiatorState:
    plan: ScanPlan
    session_id: int
    phase: str = "idle"  # idle | probe | wait_delay | fc | done
    point_index: int = 0
    repeat_index: int = 0
    retries_left: int = 0
    seq: int = 0

    def point(self, idx: int | None = None) -> tuple[float, float]:
        return self.plan.points[self.point_index if idx is None else idx]


@dataclass(frozen=True)
class ResponderState:
    session_id: int | None = None
    cf_hz: float = 0.0
    sf_hz: float = 0.0


def _request(state: InitiatorState) -> ProbeMessage:
    cf, sf = state.point()
    return ProbeMessage(
        MessageKind.CSI_PROBE_REQUEST, state.session_id, state.seq, int(cf), int(sf)
    )


def _advance_after_exchange(
    state: InitiatorState, actions: list
) -> tuple[InitiatorState, list]:
    """Move to the next repeat, the next grid point, or finish."""
    plan = state.plan
    if state.repeat_index + 1 < plan.repeat:
        state = replace(
            state, phase="wait_delay", repeat_index=state.repeat_index + 1
        )
        actions.append(SetTimer("delay", plan.delay_us))
        return state, actions
    if state.point_index + 1 >= len(plan.points):
        state = replace(state, phase="done")
        actions.append(Finish())
        return state, actions
    nxt = plan.points[state.point_index + 1]
    state = replace(
        state,
        phase="fc",
        seq=state.seq + 1,
        retries_left=plan.retry_limit,
    )
    actions.append(
        Send(
            ProbeMessage(
                MessageKind.FREQ_CHANGE_REQUEST,
                state.session_id,
                state.seq,
                int(nxt[0]),
                int(nxt[1]),
            )
        )
    )
    actions.append(SetTimer("retry", plan.retry_timeout_us))
    return state, actions


def _enter_point(state: InitiatorState, point_index: int) -> tuple[InitiatorState, list]:
    state = replace(
        state,
        phase="probe",
        point_index=point_index,
        repeat_index=0,
        retries_left=state.plan.retry_limit,
        seq=state.seq + 1,
    )
    cf, sf = state.point()
    actions = [Retune(cf, sf), Send(_request(state)), SetTimer("retry", state.plan.retry_timeout_us)]
    return state, actions


def initiator_step(state: InitiatorState, event) -> tuple[InitiatorState, list]:
    """Pure initiator transition: (state, event) -> (state', actions)."""
    plan = state.plan
    if isinstance(event, PlanStarted) and state.phase == "idle":
        return _enter_point(state, 0)

    if isinstance(event, FrameReceived):
        msg = event.msg
        if msg.session_id != state.session_id or msg.seq != state.seq:
            return state, []
        if state.phase == "probe" and msg.kind == MessageKind.CSI_PROBE_REPLY:
            actions = [
                CancelTimer("retry"),
                Record(state.point_index, state.repeat_index, event.local_record, msg.record),
            ]
            return _advance_after_exchange(state, actions)
        if state.phase == "fc" and msg.kind == MessageKind.FREQ_CHANGE_ACK:
            nxt = plan.points[state.point_index + 1]
            actions = [CancelTimer("retry"), Retune(*nxt)]
            state = replace(
                state,
                phase="probe",
                point_index=state.point_index + 1,
                repeat_index=0,
                retries_left=plan.retry_limit,
                seq=state.seq + 1,
            )
            actions += [Send(_request(state)), SetTimer("retry", plan.retry_timeout_us)]
            return state, actions
        return state, []

    if isinstance(event, TimeoutFired):
        if event.key == "delay" and state.phase == "wait_delay":
            state = replace(
                state,
                phase="probe",
                retries_left=plan.retry_limit,
                seq=state.seq + 1,
            )
            return state, [Send(_request(state)), SetTimer("retry", plan.retry_timeout_us)]
        if event.key == "retry" and state.phase == "probe":
            if state.retries_left > 0:
                state = replace(state, retries_left=state.retries_left - 1)
                return state, [Send(_request(state)), SetTimer("retry", plan.retry_timeout_us)]
            actions = [
                MarkFailed(state.point_index, state.repeat_index, "probe retries exhausted")
            ]
            return _advance_after_exchange(state, actions)
        if event.key == "retry" and state.phase == "fc":
            nxt_index = state.point_index + 1
            nxt = plan.points[nxt_index]
            if state.retries_left > 0:
                state = replace(state, retries_left=state.retries_left - 1)
                return state, [
                    Send(
                        ProbeMessage(
                            MessageKind.FREQ_CHANGE_REQUEST,
                            state.session_id,
                            state.seq,
                            int(nxt[0]),
                            int(nxt[1]),
                        )
                    ),
                    SetTimer("retry", plan.retry_timeout_us),
                ]
            # Unacknowledged jump: retune anyway. The responder either heard
            # the request (and jumped) or will miss this point entirely.
            actions = [
                MarkFailed(nxt_index, None, "freq-change retries exhausted"),
                Retune(*nxt),
            ]
            state = replace(
                state,
                phase="probe",
                point_index=nxt_index,
                repeat_index=0,
                retries_left=plan.retry_limit,
                seq=state.seq + 1,
            )
            actions += [Send(_request(state)), SetTimer("retry", plan.retry_timeout_us)]
            return state, actions
        return state, []

    return state, []


def responder_step(state: ResponderState, event) -> tuple[ResponderState, list]:
    """Pure responder transition: reply to probes, ack-then-retune on jumps."""
    if not isinstance(event, FrameReceived):
        return state, []
    msg = event.msg
    if state.session_id is not None and msg.session_id != state.session_id:
        return state, []
    state = replace(state, session_id=msg.session_id)

    if msg.kind == MessageKind.CSI_PROBE_REQUEST:
        if event.local_record is None:
            return state, []
        reply = ProbeMessage(
            MessageKind.CSI_PROBE_REPLY,
            msg.session_id,
            msg.seq,
            msg.cf_hz,
            msg.sf_hz,
            record=event.local_record,
        )
        return state, [Send(reply)]

    if msg.kind == MessageKind.FREQ_CHANGE_REQUEST:
        ack = ProbeMessage(
            MessageKind.FREQ_CHANGE_ACK, msg.session_id, msg.seq, msg.cf_hz, msg.sf_hz
        )
        state = replace(state, cf_hz=float(msg.cf_hz), sf_hz=float(msg.sf_hz))
        # ack leaves on the old channel; the retune follows it
        return state, [Send(ack), Retune(float(msg.cf_hz), float(msg.sf_hz))]

    return state, []


@dataclass
class ScanReport:
    plan: dict
    fidelity: str
    seed: int
    records: list = field(default_factory=list)  # (point, repeat, t_us, rt_us)
    failures: list = field(default_factory=list)
    failed_points: set = field(default_factory=set)
    decode_failures: int = 0
    duration_us: float = 0.0

    @property
    def n_records(self) -> int:
        return len(self.records)

    def max_roundtrip_us(self) -> float:
        return max((r[3] for r in self.records), default=0.0)

    def to_json(self) -> str:
        return json.dumps(
            {
                "plan": self.plan,
                "fidelity": self.fidelity,
                "seed": self.seed,
                "n_records": self.n_records,
                "records": [
                    {"point": p, "repeat": r, "t_us": t, "roundtrip_us": rt}
                    for p, r, t, rt in self.records
                ],
                "failures": self.failures,
                "failed_points": sorted(self.failed_points),
                "decode_failures": self.decode_failures,
                "duration_us": self.duration_us,
                "max_roundtrip_us": self.max_roundtrip_us(),
            },
            indent=2,
            sort_keys=True,
        )


def _flat_record(timestamp_us: float, cf: float, sf: float, plan: ScanPlan) -> CaptureRecord:
    grid = grid_for_mode(ChannelMode.HT20)
    n = len(grid.indices)
    return CaptureRecord(
        timestamp_us=int(round(timestamp_us)),
        cf_hz=int(cf),
        sf_hz=int(sf),
        channel_mode=ChannelMode.HT20,
        mcs=plan.mcs,
        seed=1,
        tone_indices=grid.indices.astype(np.int16),
        csi=np.ones(n, dtype=np.complex128),
        data_csi=np.empty((0, n)),
        cfo_uhz=0,
        evm_cdb=-10000,
    )


class _Node:
    """Runner-side adapter: executes FSM actions against the simulation."""

    def __init__(self, name, nic, sim, plan, fidelity, step_fn, state, runner):
        self.name = name
        self.nic = nic
        self.sim = sim
        self.plan = plan
        self.fidelity = fidelity
        self.step_fn = step_fn
        self.state = state
        self.runner = runner
        self.timers: dict[str, int] = {}
        nic.on_receive = self.on_receive

    def dispatch(self, event) -> None:
        self.state, actions = self.step_fn(self.state, event)
        for action in actions:
            self.execute(action)

    def execute(self, action) -> None:
        sched = self.sim.scheduler
        if isinstance(action, Send):
            payload = action.msg.serialize()
            seed = (action.msg.seq - 1) % 127 + 1
            cfg = FrameConfig.make(
                "ht20",
                mcs=self.plan.mcs,
                n_ess=self.plan.n_ess,
                payload=payload,
                scrambler_seed=seed,
            )
            if action.msg.kind == MessageKind.CSI_PROBE_REQUEST:
                self.runner.note_request_sent(sched.now + self.plan.turnaround_us)

            def do_send(cfg=cfg, payload=payload):
                if self.fidelity == "phy":
                    from .phy.frame import assemble_frame

                    burst = assemble_frame(cfg, sample_rate=self.nic.sf_tuned)
                    self.sim.transmit(self.nic, burst, meta={"cfg": cfg})
                else:
                    airtime = estimate_airtime_us(cfg, self.nic.sf_tuned)
                    self.sim.transmit_payload(self.nic, payload, airtime, meta={"cfg": cfg})

            sched.schedule(self.plan.turnaround_us, do_send, label="send",
                           node=self.name, kind=int(action.msg.kind), seq=action.msg.seq)
        elif isinstance(action, SetTimer):
            self.timers[action.key] = sched.schedule(
                action.delay_us,
                lambda key=action.key: self.dispatch(TimeoutFired(key)),
                label="timer",
                node=self.name,
                key=action.key,
            )
        elif isinstance(action, CancelTimer):
            handle = self.timers.pop(action.key, None)
            if handle is not None:
                sched.cancel(handle)
        elif isinstance(action, Retune):
            # Same processing delay as sends so a Send emitted before a
            # Retune really leaves on the pre-retune channel.
            sched.schedule(
                self.plan.turnaround_us,
                lambda a=action: self.nic.tune(a.cf_hz, a.sf_hz),
                label="retune",
                node=self.name,
                cf=action.cf_hz,
                sf=action.sf_hz,
            )
        elif isinstance(action, Record):
            self.runner.add_record(action, sched.now)
        elif isinstance(action, MarkFailed):
            self.runner.add_failure(action, sched.now)
        elif isinstance(action, Finish):
            self.runner.finish(sched.now)

    def on_receive(self, delivered, meta) -> None:
        if self.fidelity == "phy":
            cfg_hint = FrameConfig.make(
                "ht20", mcs=self.plan.mcs, n_ess=self.plan.n_ess
            )
            try:
                res = receive_frame(delivered, cfg_hint)
            except DecodeError:
                self.runner.report.decode_failures += 1
                return
            if not res.fcs_ok:
                self.runner.report.decode_failures += 1
                return
            try:
                msg = ProbeMessage.parse(res.payload)
            except ValueError:
                self.runner.report.decode_failures += 1
                return
            include_train = self.name == "initiator"
            local = record_from_rx(
                res,
                self.sim.scheduler.now,
                self.nic.cf_nominal,
                self.nic.sf_nominal,
                cfg_hint,
                include_train=include_train,
            )
        else:
            try:
                msg = ProbeMessage.parse(bytes(delivered))
            except ValueError:
                self.runner.report.decode_failures += 1
                return
            local = _flat_record(
                self.sim.scheduler.now, self.nic.cf_nominal, self.nic.sf_nominal, self.plan
            )
        self.dispatch(FrameReceived(msg, local))


class ScanRunner:
    """Drives one initiator/responder pair over a virtual link."""

    def __init__(
        self,
        plan: ScanPlan,
        link: VirtualLink,
        fidelity: str = "phy",
        session_id: int = 0xC51,
        nic_profiles: tuple | None = None,
    ):
        if fidelity not in ("phy", "protocol"):
            raise ValueError(f"unknown fidelity {fidelity!r}")
        self.plan = plan
        self.fidelity = fidelity
        tx_prof, rx_prof = nic_profiles if nic_profiles else (None, None)
        from .impairments import ImpairmentProfile

        prof_a = tx_prof or ImpairmentProfile.identity()
        prof_b = rx_prof or ImpairmentProfile.identity()
        cf0, sf0 = plan.points[0]
        nic_a = VirtualNic("initiator", tx_profile=prof_a, rx_profile=prof_a,
                           txcm=plan.txcm, rxcm=plan.rxcm, cf_nominal=cf0, sf_nominal=sf0)
        nic_b = VirtualNic("responder", tx_profile=prof_b, rx_profile=prof_b,
                           txcm=plan.rxcm, rxcm=plan.txcm, cf_nominal=cf0, sf_nominal=sf0)
        self.sim = NetworkSim(nic_a, nic_b, link)
        self.report = ScanReport(
            plan={
                "cf_points": list(plan.cf_points),
                "sf_points": list(plan.sf_points),
                "repeat": plan.repeat,
                "delay_us": plan.delay_us,
                "mcs": plan.mcs,
                "n_ess": plan.n_ess,
                "txcm": plan.txcm,
                "rxcm": plan.rxcm,
            },
            fidelity=fidelity,
            seed=link.seed,
        )
        self.local_records: list[CaptureRecord] = []
        self.remote_records: list[CaptureRecord] = []
        self._last_request_sent = 0.0
        self._finished = False

        self.initiator = _Node(
            "initiator", nic_a, self.sim, plan, fidelity,
            initiator_step, InitiatorState(plan, session_id), self,
        )
        self.responder = _Node(
            "responder", nic_b, self.sim, plan, fidelity,
            responder_step, ResponderState(), self,
        )

    def note_request_sent(self, t_us: float) -> None:
        self._last_request_sent = t_us

    def add_record(self, action: Record, now_us: float) -> None:
        rt = now_us - self._last_request_sent
        self.report.records.append(
            (action.point_index, action.repeat_index, now_us, rt)
        )
        if action.local is not None:
            self.local_records.append(action.local)
        if action.remote is not None:
            self.remote_records.append(action.remote)

    def add_failure(self, action: MarkFailed, now_us: float) -> None:
        self.report.failures.append(
            {"point": action.point_index, "repeat": action.repeat_index,
             "reason": action.reason, "t_us": now_us}
        )
        self.report.failed_points.add(action.point_index)

    def finish(self, now_us: float) -> None:
        self.report.duration_us = now_us
        self._finished = True

    def run(self) -> ScanReport:
        self.initiator.dispatch(PlanStarted())
        self.sim.scheduler.run_until_idle()
        if not self._finished:
            self.report.duration_us = self.sim.scheduler.now
        return self.report


def run_scan(
    plan: ScanPlan,
    link: VirtualLink | None = None,
    fidelity: str = "phy",
    nic_profiles: tuple | None = None,
) -> tuple[ScanReport, list[CaptureRecord], list[CaptureRecord]]:
    """Execute a full scan; returns (report, initiator records, responder records)."""
    runner = ScanRunner(plan, link or VirtualLink(latency_us=5.0), fidelity,
                        nic_profiles=nic_profiles)
    report = runner.run()
    return report, runner.local_records, runner.remote_records

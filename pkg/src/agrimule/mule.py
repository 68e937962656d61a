"""Data-mule protocol: lossy links, node-side ARQ, and the drone tour machine.

Transfer is stop-and-wait: the node samples a reading just before each DATA
send, the drone acknowledges every DATA, lost frames are retransmitted with
the same sequence number up to the retry limit. Retransmit timers use a
two-phase check (the timer fires, then re-examines state in a same-instant
follow-up event) so an ACK arriving in the very millisecond the timer
expires still wins and no spurious retransmission happens.

The drone walks Idle -> EnRoute -> Associating -> Collecting -> Relaying ->
(EnRoute | Returning) -> Idle. Unreachable nodes are skipped and reported;
upload failures leave readings buffered for the next relay window or the
docked flush at base, which is modeled lossless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from . import wire
from .cloud import CalibrationCurve, calibrate_moisture
from .errors import DroneBusyError, EmptyTourError, SimError
from .farm import Farm, PumpCommand
from .kernel import Event, Kernel, SimTime
from .store import KIND_PUMP, KIND_TOUR, TelemetryStore
from .wire import Frame, FrameType, SensorReading


@dataclass(frozen=True)
class LinkModel:
    latency_ms: int
    jitter_ms: int = 0
    loss_prob: float = 0.0

    def ack_timeout_ms(self) -> int:
        """Default retransmit timeout: one round trip plus jitter headroom."""
        return max(1, 2 * self.latency_ms + 4 * self.jitter_ms)


@dataclass(frozen=True)
class TxRecord:
    t: SimTime
    ftype: FrameType
    seq: int
    delivered: bool
    arrive_at: SimTime | None


class Link:
    """One direction of a radio link; draws loss and jitter from its own stream."""

    def __init__(self, kernel: Kernel, model: LinkModel, dest: str, label: str):
        self.kernel = kernel
        self.model = model
        self.dest = dest
        self.label = label
        self.reverse: Link | None = None
        self._rng = kernel.rng_stream(f"link:{label}")
        self.sent: list[TxRecord] = []

    def transmit(self, frame: Frame) -> bool:
        """Send one frame; returns whether the link delivered it."""
        now = self.kernel.now
        raw = wire.encode_frame(frame)
        lost = self.model.loss_prob > 0 and self._rng.random() < self.model.loss_prob
        arrive_at = None
        if not lost:
            jitter = self._rng.randint(0, self.model.jitter_ms) if self.model.jitter_ms else 0
            arrive_at = now + self.model.latency_ms + jitter
            self.kernel.schedule(arrive_at, self.dest, ("frame", raw, self.reverse, self.label))
        self.sent.append(TxRecord(now, frame.ftype, frame.seq, not lost, arrive_at))
        return not lost


def make_duplex(
    kernel: Kernel, model: LinkModel, end_a: str, end_b: str, label: str
) -> tuple[Link, Link]:
    """Two directed links with independent impairment streams, cross-wired."""
    a_to_b = Link(kernel, model, dest=end_b, label=f"{label}:fwd")
    b_to_a = Link(kernel, model, dest=end_a, label=f"{label}:rev")
    a_to_b.reverse = b_to_a
    b_to_a.reverse = a_to_b
    return a_to_b, b_to_a


@dataclass(frozen=True)
class ProtocolParams:
    max_retries: int = 5
    assoc_timeout_ms: int = 200
    data_timeout_ms: int | None = None  # None: derived from the node link
    upload_timeout_ms: int | None = None  # None: derived from the uplink
    readings_per_region: int = 3


# ---------------------------------------------------------------------------
# Tour planning and kinematics


class DroneMode(str, Enum):
    IDLE = "idle"
    EN_ROUTE = "en_route"
    ASSOCIATING = "associating"
    COLLECTING = "collecting"
    RELAYING = "relaying"
    RETURNING = "returning"


@dataclass(frozen=True)
class TourStop:
    region_id: int | None  # None is the base return leg
    position: tuple[float, float]
    eta_ms: SimTime  # relative to tour departure


@dataclass(frozen=True)
class FlightPlan:
    stops: tuple[TourStop, ...]
    total_distance_m: float


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def plan_tour(
    regions: list, base: tuple[float, float], speed_mps: float
) -> FlightPlan:
    """Visit regions in configured order, then return to base."""
    if not regions:
        raise EmptyTourError("no regions to tour")
    if speed_mps <= 0:
        raise SimError(f"drone speed must be positive, got {speed_mps}")
    stops: list[TourStop] = []
    pos = base
    eta = 0
    total = 0.0
    for region in regions:
        d = _dist(pos, region.position)
        total += d
        eta += int(round(d / speed_mps * 1000))
        stops.append(TourStop(region.id, region.position, eta))
        pos = region.position
    d = _dist(pos, base)
    total += d
    eta += int(round(d / speed_mps * 1000))
    stops.append(TourStop(None, base, eta))
    return FlightPlan(stops=tuple(stops), total_distance_m=total)


@dataclass(frozen=True)
class DroneState:
    mode: DroneMode
    position: tuple[float, float]
    speed_mps: float
    target: tuple[float, float] | None = None
    target_region: int | None = None
    buffer: tuple[SensorReading, ...] = ()


def advance_drone(state: DroneState, dt_ms: int) -> DroneState:
    """Move along the current leg by at most speed*dt; transition on arrival."""
    if dt_ms <= 0:
        raise SimError(f"dt must be positive, got {dt_ms}")
    if state.mode not in (DroneMode.EN_ROUTE, DroneMode.RETURNING) or state.target is None:
        return state
    step = state.speed_mps * dt_ms / 1000.0
    remaining = _dist(state.position, state.target)
    if remaining <= step:
        arrived = state.target
        if state.mode is DroneMode.EN_ROUTE:
            return replace(state, position=arrived, mode=DroneMode.ASSOCIATING, target=None)
        if state.buffer:
            return replace(state, position=arrived, target=None)  # flush before idle
        return replace(state, position=arrived, mode=DroneMode.IDLE, target=None, target_region=None)
    frac = step / remaining
    nxt = (
        state.position[0] + (state.target[0] - state.position[0]) * frac,
        state.position[1] + (state.target[1] - state.position[1]) * frac,
    )
    return replace(state, position=nxt)


# ---------------------------------------------------------------------------
# Node agent


@dataclass
class _NodeSession:
    nonce: int
    start_seq: int
    count: int
    idx: int = 0
    current: SensorReading | None = None
    attempts: int = 0
    timer_id: int | None = None
    done: bool = False


class NodeAgent:
    """Region-side endpoint: answers association, streams readings, drives its pump."""

    def __init__(
        self,
        kernel: Kernel,
        farm: Farm,
        region_id: int,
        curve: CalibrationCurve,
        store: TelemetryStore | None,
        proto: ProtocolParams,
        soil_tick_ms: int = 1000,
    ):
        self.kernel = kernel
        self.farm = farm
        self.region_id = region_id
        self.curve = curve
        self.store = store
        self.proto = proto
        self.soil_tick_ms = soil_tick_ms
        self.target = f"node:{region_id}"
        self.to_drone: Link | None = None
        self.to_cloud: Link | None = None
        self.seq_counter = 0
        self.session: _NodeSession | None = None
        self.sampled: list[SensorReading] = []
        self.give_ups = 0
        kernel.register(self.target, self._handle)

    def start_soil_ticks(self) -> None:
        self.kernel.schedule_in(self.soil_tick_ms, self.target, ("tick",))

    def _data_timeout(self) -> int:
        if self.proto.data_timeout_ms is not None:
            return self.proto.data_timeout_ms
        assert self.to_drone is not None
        return self.to_drone.model.ack_timeout_ms()

    def _handle(self, event: Event) -> None:
        kind = event.payload[0]
        if kind == "frame":
            self._on_frame(wire.decode_frame(event.payload[1]), event.payload[2])
        elif kind == "tick":
            self._on_tick()
        elif kind == "slot":
            _, nonce, seq = event.payload
            if self._awaiting(nonce, seq) and self.session.current is None:
                self._send_current()
        elif kind == "retx1":
            _, nonce, seq = event.payload
            if self._awaiting(nonce, seq) and self.session.current is not None:
                self.kernel.schedule(self.kernel.now, self.target, ("retx2", nonce, seq))
        elif kind == "retx2":
            _, nonce, seq = event.payload
            if self._awaiting(nonce, seq) and self.session.current is not None:
                if self.session.attempts < self.proto.max_retries:
                    self._send_current()
                else:
                    self.give_ups += 1
                    self.session.done = True  # collect-timeout: node stops; drone flags partial

    def _awaiting(self, nonce: int, seq: int) -> bool:
        s = self.session
        return (
            s is not None
            and not s.done
            and s.nonce == nonce
            and s.idx < s.count
            and (s.start_seq + s.idx) & 0xFFFF == seq
        )

    def _on_frame(self, frame: Frame, reply: Link | None) -> None:
        if frame.ftype == FrameType.BEACON:
            return
        if frame.ftype == FrameType.ASSOC_REQ:
            self._on_assoc_req(frame)
        elif frame.ftype == FrameType.DATA_ACK:
            self._on_data_ack(frame.seq)
        elif frame.ftype == FrameType.PUMP_CMD:
            self._on_pump_cmd(frame)

    def _on_assoc_req(self, frame: Frame) -> None:
        nonce = frame.seq
        if self.session is not None and self.session.nonce == nonce:
            # duplicate REQ: our ACK was lost; repeat it, ARQ handles the rest
            self._send_assoc_ack()
            return
        self.session = _NodeSession(
            nonce=nonce,
            start_seq=self.seq_counter,
            count=self.proto.readings_per_region,
        )
        self.seq_counter = (self.seq_counter + self.proto.readings_per_region) & 0xFFFF
        self._send_assoc_ack()
        self._schedule_slot()

    def _send_assoc_ack(self) -> None:
        payload = wire.encode_assoc_ack_payload(self.region_id, self.session.start_seq)
        self.to_drone.transmit(Frame(FrameType.ASSOC_ACK, self.session.nonce, payload))

    def _schedule_slot(self) -> None:
        # First transmission of each reading goes out on a whole-second slot,
        # sampled right at send time: the DATA payload's seconds timestamp is
        # then lossless and end-to-end latency is exact from wire data alone.
        s = self.session
        slot = -(-self.kernel.now // 1000) * 1000
        seq = (s.start_seq + s.idx) & 0xFFFF
        self.kernel.schedule(slot, self.target, ("slot", s.nonce, seq))

    def _send_current(self) -> None:
        s = self.session
        seq = (s.start_seq + s.idx) & 0xFFFF
        if s.current is None:
            s.current = self._sample(seq)
        s.attempts += 1
        payload = wire.encode_data_payload(s.current)
        self.to_drone.transmit(Frame(FrameType.DATA, seq, payload))
        s.timer_id = self.kernel.schedule_in(
            self._data_timeout(), self.target, ("retx1", s.nonce, seq)
        )

    def _sample(self, seq: int) -> SensorReading:
        now = self.kernel.now
        temp, hum = self.farm.sample_dht22(self.region_id, now)
        raw = self.farm.sample_fc28(self.region_id, now)
        moisture = calibrate_moisture(raw, self.curve)
        reading = SensorReading(
            region_id=self.region_id,
            seq_no=seq,
            sampled_at=now,
            temperature_c=temp,
            humidity_pct=hum,
            soil_moisture_pct=moisture,
        ).rounded()
        self.sampled.append(reading)
        return reading

    def _on_data_ack(self, seq: int) -> None:
        s = self.session
        if s is None or s.done or s.current is None or (s.start_seq + s.idx) & 0xFFFF != seq:
            return
        if s.timer_id is not None:
            self.kernel.cancel(s.timer_id)
        s.idx += 1
        s.current = None
        s.attempts = 0
        if s.idx >= s.count:
            s.done = True
        else:
            self._schedule_slot()

    def _on_pump_cmd(self, frame: Frame) -> None:
        region_id, on, quantity = wire.decode_pump_cmd_payload(frame.payload)
        if region_id != self.region_id:
            return
        command = PumpCommand.on(quantity) if on else PumpCommand.off()
        pump = self.farm.apply_pump(self.region_id, command)
        self._append_pump_event("on" if on else "off", "command", pump)
        if self.to_cloud is not None:
            ack = wire.encode_pump_ack_payload(self.region_id, pump.on)
            self.to_cloud.transmit(Frame(FrameType.PUMP_ACK, frame.seq, ack))

    def _on_tick(self) -> None:
        result = self.farm.step_soil(self.region_id, self.soil_tick_ms)
        if result.pump_stopped:
            pump = self.farm.plot(self.region_id).pump
            self._append_pump_event("off", "complete", pump)
            if self.to_cloud is not None:
                ack = wire.encode_pump_ack_payload(self.region_id, False)
                self.to_cloud.transmit(Frame(FrameType.PUMP_ACK, 0, ack))
        self.kernel.schedule_in(self.soil_tick_ms, self.target, ("tick",))

    def _append_pump_event(self, action: str, cause: str, pump) -> None:
        if self.store is None:
            return
        self.store.append(
            KIND_PUMP,
            {
                "region_id": self.region_id,
                "action": action,
                "cause": cause,
                "on": pump.on,
                "total_delivered_l": pump.total_delivered_l,
                "commanded_remaining_l": pump.commanded_remaining_l,
            },
            at=self.kernel.now,
        )


# ---------------------------------------------------------------------------
# Drone agent


@dataclass
class _Visit:
    region_id: int
    status: str = "pending"  # collected | partial | skipped
    readings: int = 0
    start_seq: int | None = None
    received: dict[int, SensorReading] = field(default_factory=dict)
    progress: int = 0


@dataclass
class _Upload:
    seq: int
    readings: tuple[SensorReading, ...]
    attempts: int = 0
    docked: bool = False


class DroneAgent:
    """The data mule: flies the tour, collects per-region batches, relays to the cloud."""

    TARGET = "drone"

    def __init__(
        self,
        kernel: Kernel,
        regions: list,
        base: tuple[float, float],
        speed_mps: float,
        store: TelemetryStore | None,
        proto: ProtocolParams,
        move_tick_ms: int = 100,
    ):
        self.kernel = kernel
        self.regions = list(regions)
        self.base = base
        self.store = store
        self.proto = proto
        self.move_tick_ms = move_tick_ms
        self.state = DroneState(mode=DroneMode.IDLE, position=base, speed_mps=speed_mps)
        self.node_links: dict[int, Link] = {}  # drone -> node
        self.uplink: Link | None = None
        self.dock: Link | None = None
        self.events: list[tuple[SimTime, str, object]] = []
        self.position_listeners = []
        self._tour_counter = 0
        self._visit_nonce = 0
        self._upload_counter = 0
        self._assoc_attempts = 0
        self._visits: list[_Visit] = []
        self._leg_index = 0
        self._plan: FlightPlan | None = None
        self._tour_id: int | None = None
        self._tour_started: SimTime | None = None
        self._current_visit: _Visit | None = None
        self._upload: _Upload | None = None
        self._guard_id: int | None = None
        self.decisions_seen: list[tuple[int, str, float]] = []
        kernel.register(self.TARGET, self._handle)

    # -- public surface -----------------------------------------------------

    def dispatch(self) -> int:
        """Begin a tour; raises if one is already underway."""
        if self.state.mode is not DroneMode.IDLE:
            raise DroneBusyError(f"drone is {self.state.mode.value}")
        self._plan = plan_tour(self.regions, self.base, self.state.speed_mps)
        self._tour_counter += 1
        self._tour_id = self._tour_counter
        self._tour_started = self.kernel.now
        self._visits = []
        self._leg_index = 0
        self._log("tour-start", self._tour_id)
        self._start_leg()
        return self._tour_id

    @property
    def mode(self) -> DroneMode:
        return self.state.mode

    # -- internals ----------------------------------------------------------

    def _log(self, what: str, detail: object = None) -> None:
        self.events.append((self.kernel.now, what, detail))

    def _upload_timeout(self, docked: bool) -> int:
        if docked:
            return max(1, self.dock.model.ack_timeout_ms())
        if self.proto.upload_timeout_ms is not None:
            return self.proto.upload_timeout_ms
        return self.uplink.model.ack_timeout_ms()

    def _collect_guard_ms(self) -> int:
        if self.proto.data_timeout_ms is not None:
            base = self.proto.data_timeout_ms
        else:
            link = self.node_links[self._current_visit.region_id]
            base = link.model.ack_timeout_ms()
        # covers the node's worst case: slot wait (up to 1 s) plus a full retry span
        return 1000 + (self.proto.max_retries + 2) * base

    def _start_leg(self) -> None:
        stop = self._plan.stops[self._leg_index]
        if stop.region_id is None:
            self.state = replace(
                self.state, mode=DroneMode.RETURNING, target=stop.position, target_region=None
            )
        else:
            self.state = replace(
                self.state, mode=DroneMode.EN_ROUTE, target=stop.position, target_region=stop.region_id
            )
        self.kernel.schedule_in(self.move_tick_ms, self.TARGET, ("move",))

    def _handle(self, event: Event) -> None:
        payload = event.payload
        kind = payload[0]
        if kind == "frame":
            self._on_frame(wire.decode_frame(payload[1]), payload[3])
        elif kind == "move":
            self._on_move()
        elif kind == "assoc1":
            if self._associating(payload[1]):
                self.kernel.schedule(self.kernel.now, self.TARGET, ("assoc2", payload[1]))
        elif kind == "assoc2":
            if self._associating(payload[1]):
                if self._assoc_attempts < self.proto.max_retries:
                    self._assoc_attempt()
                else:
                    self._assoc_failed()
        elif kind == "guard1":
            _, nonce, progress = payload
            if self._collecting(nonce):
                self.kernel.schedule(self.kernel.now, self.TARGET, ("guard2", nonce, progress))
        elif kind == "guard2":
            _, nonce, progress = payload
            if self._collecting(nonce):
                if self._current_visit.progress != progress:
                    self._arm_guard()
                else:
                    self._collect_partial()
        elif kind == "up1":
            _, seq = payload
            if self._uploading(seq):
                self.kernel.schedule(self.kernel.now, self.TARGET, ("up2", seq))
        elif kind == "up2":
            _, seq = payload
            if self._uploading(seq):
                if self._upload.attempts < self.proto.max_retries:
                    self._upload_attempt()
                else:
                    self._upload_failed()

    def _associating(self, nonce: int) -> bool:
        return self.state.mode is DroneMode.ASSOCIATING and self._visit_nonce == nonce

    def _collecting(self, nonce: int) -> bool:
        return self.state.mode is DroneMode.COLLECTING and self._visit_nonce == nonce

    def _uploading(self, seq: int) -> bool:
        return (
            self.state.mode in (DroneMode.RELAYING, DroneMode.RETURNING)
            and self._upload is not None
            and self._upload.seq == seq
        )

    # -- movement -----------------------------------------------------------

    def _on_move(self) -> None:
        if self.state.mode not in (DroneMode.EN_ROUTE, DroneMode.RETURNING):
            return
        before = self.state
        self.state = advance_drone(self.state, self.move_tick_ms)
        self._notify_position()
        if self.state.mode is DroneMode.ASSOCIATING:
            self._arrive_at_region()
        elif before.mode is DroneMode.RETURNING and self.state.target is None:
            self._arrive_at_base()
        else:
            self.kernel.schedule_in(self.move_tick_ms, self.TARGET, ("move",))

    def _notify_position(self) -> None:
        info = {
            "at": self.kernel.now,
            "x": self.state.position[0],
            "y": self.state.position[1],
            "mode": self.state.mode.value,
        }
        for listener in self.position_listeners:
            listener(info)

    def _arrive_at_region(self) -> None:
        rid = self.state.target_region
        self._current_visit = _Visit(region_id=rid)
        self._visits.append(self._current_visit)
        self._visit_nonce = (self._visit_nonce + 1) & 0xFFFF
        self._assoc_attempts = 0
        self._log("arrive", rid)
        link = self.node_links[rid]
        link.transmit(Frame(FrameType.BEACON, self._visit_nonce))
        self._assoc_attempt()

    def _assoc_attempt(self) -> None:
        rid = self._current_visit.region_id
        self._assoc_attempts += 1
        payload = wire.encode_assoc_req_payload(rid)
        self.node_links[rid].transmit(Frame(FrameType.ASSOC_REQ, self._visit_nonce, payload))
        self.kernel.schedule_in(
            self.proto.assoc_timeout_ms, self.TARGET, ("assoc1", self._visit_nonce)
        )

    def _assoc_failed(self) -> None:
        self._current_visit.status = "skipped"
        self._log("assoc-failed", self._current_visit.region_id)
        self._next_leg()

    def _establish(self, start_seq: int) -> None:
        self._current_visit.start_seq = start_seq
        self.state = replace(self.state, mode=DroneMode.COLLECTING)
        self._log("assoc-ok", self._current_visit.region_id)
        self._arm_guard()

    def _arm_guard(self) -> None:
        if self._guard_id is not None:
            self.kernel.cancel(self._guard_id)
        self._guard_id = self.kernel.schedule_in(
            self._collect_guard_ms(),
            self.TARGET,
            ("guard1", self._visit_nonce, self._current_visit.progress),
        )

    # -- frames -------------------------------------------------------------

    def _on_frame(self, frame: Frame, via: str) -> None:
        if frame.ftype == FrameType.ASSOC_ACK:
            region_id, start_seq = wire.decode_assoc_ack_payload(frame.payload)
            if (
                self.state.mode is DroneMode.ASSOCIATING
                and self._current_visit is not None
                and self._current_visit.region_id == region_id
                and frame.seq == self._visit_nonce
            ):
                self._establish(start_seq)
        elif frame.ftype == FrameType.DATA:
            self._on_data(frame)
        elif frame.ftype == FrameType.DATA_ACK:
            if via.startswith("uplink") or via.startswith("dock"):
                self._on_upload_ack(frame.seq)
        elif frame.ftype == FrameType.DECISION:
            region_id, command, quantity, _src = wire.decode_decision_payload(frame.payload)
            self.decisions_seen.append((region_id, command, quantity))

    def _on_data(self, frame: Frame) -> None:
        visit = self._current_visit
        if visit is None:
            return
        reading = wire.decode_data_payload(frame.payload, frame.seq)
        if reading.region_id != visit.region_id:
            return
        if self.state.mode is DroneMode.ASSOCIATING:
            # ASSOC_ACK was lost but DATA proves the node heard us; under
            # stop-and-wait the first DATA seen carries the starting seq.
            self._establish(frame.seq)
        if self.state.mode is not DroneMode.COLLECTING:
            return
        self.node_links[visit.region_id].transmit(Frame(FrameType.DATA_ACK, frame.seq))
        expected = {(visit.start_seq + i) & 0xFFFF for i in range(self.proto.readings_per_region)}
        if frame.seq in expected and frame.seq not in visit.received:
            visit.received[frame.seq] = reading
            visit.progress += 1
            self._arm_guard()
            if len(visit.received) >= self.proto.readings_per_region:
                self._collect_done()

    def _collect_done(self) -> None:
        visit = self._current_visit
        visit.status = "collected"
        visit.readings = len(visit.received)
        if self._guard_id is not None:
            self.kernel.cancel(self._guard_id)
        ordered = [visit.received[(visit.start_seq + i) & 0xFFFF] for i in range(len(visit.received))]
        self._log("collect-done", (visit.region_id, len(ordered)))
        self._begin_relay(ordered)

    def _collect_partial(self) -> None:
        visit = self._current_visit
        visit.status = "partial"
        visit.readings = len(visit.received)
        order = sorted(visit.received)
        ordered = [visit.received[s] for s in order]
        self._log("collect-partial", (visit.region_id, len(ordered)))
        self._begin_relay(ordered)

    # -- relay --------------------------------------------------------------

    def _begin_relay(self, readings: list[SensorReading]) -> None:
        self.state = replace(
            self.state, mode=DroneMode.RELAYING, buffer=self.state.buffer + tuple(readings)
        )
        if not self.state.buffer:
            self._next_leg()
            return
        self._upload_counter = (self._upload_counter + 1) & 0xFFFF
        self._upload = _Upload(seq=self._upload_counter, readings=self.state.buffer)
        self._upload_attempt()

    def _upload_attempt(self) -> None:
        up = self._upload
        up.attempts += 1
        link = self.dock if up.docked else self.uplink
        payload = wire.encode_upload_payload(list(up.readings))
        link.transmit(Frame(FrameType.UPLOAD, up.seq, payload))
        self.kernel.schedule_in(self._upload_timeout(up.docked), self.TARGET, ("up1", up.seq))

    def _on_upload_ack(self, seq: int) -> None:
        if self._upload is None or self._upload.seq != seq:
            return
        delivered = set((r.region_id, r.seq_no) for r in self._upload.readings)
        kept = tuple(r for r in self.state.buffer if (r.region_id, r.seq_no) not in delivered)
        self.state = replace(self.state, buffer=kept)
        self._log("upload-ok", seq)
        was_docked = self._upload.docked
        self._upload = None
        if was_docked or self.state.mode is DroneMode.RETURNING:
            self._finish_tour()
        else:
            self._next_leg()

    def _upload_failed(self) -> None:
        self._log("upload-failed", self._upload.seq)
        self._upload = None  # readings stay buffered for the next relay window
        if self.state.mode is DroneMode.RETURNING:
            self._finish_tour()
        else:
            self._next_leg()

    # -- tour sequencing ----------------------------------------------------

    def _next_leg(self) -> None:
        self._current_visit = None
        self._leg_index += 1
        self._start_leg()

    def _arrive_at_base(self) -> None:
        if self.state.buffer:
            # docked handoff: lossless, so buffered readings always land
            self._upload_counter = (self._upload_counter + 1) & 0xFFFF
            self._upload = _Upload(
                seq=self._upload_counter, readings=self.state.buffer, docked=True
            )
            self._upload_attempt()
        else:
            self._finish_tour()

    def _finish_tour(self) -> None:
        self.state = replace(
            self.state, mode=DroneMode.IDLE, target=None, target_region=None, buffer=()
        )
        self._log("tour-done", self._tour_id)
        self._notify_position()
        if self.store is not None:
            self.store.append(
                KIND_TOUR,
                {
                    "tour_id": self._tour_id,
                    "started_at": self._tour_started,
                    "ended_at": self.kernel.now,
                    "visits": [
                        {"region_id": v.region_id, "status": v.status, "readings": len(v.received)}
                        for v in self._visits
                    ],
                    "skipped_regions": [
                        v.region_id for v in self._visits if v.status == "skipped"
                    ],
                },
                at=self.kernel.now,
            )

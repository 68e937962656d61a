"""Cloud side: calibration, water-quantity computation, hysteretic pump control.

Soil moisture is gravimetric (water weight over dry-soil weight, percent).
The water quantity for a region is the deficit to the policy's upper
threshold converted to kilograms of water through the region's dry-soil
mass; with 1 L = 1 kg that is directly a volume in liters.

Pump control is a deadband: turn on below m_low, off at or above m_high,
otherwise leave the pump alone. Operator overrides preempt automation for a
hold period and are audit-logged.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import wire
from .errors import BadQuantityError, BadSampleError, PolicyError, UnknownRegionError
from .farm import ADC_MAX, RawSample, Region
from .kernel import Kernel, SimTime
from .store import KIND_DECISION, KIND_OVERRIDE, KIND_READING, TelemetryStore
from .wire import Frame, FrameType, SensorReading


@dataclass(frozen=True)
class CalibrationCurve:
    """Linear raw-to-percent map anchored at the dry (0 %) and wet (100 %) ADC readings."""

    dry_raw: int
    wet_raw: int

    def __post_init__(self):
        if not (0 <= self.wet_raw < self.dry_raw <= ADC_MAX):
            raise PolicyError(
                f"calibration needs 0 <= wet_raw < dry_raw <= {ADC_MAX}, "
                f"got wet={self.wet_raw} dry={self.dry_raw}"
            )


@dataclass(frozen=True)
class GravimetricSample:
    water_weight_g: float
    dry_soil_weight_g: float


@dataclass(frozen=True)
class IrrigationPolicy:
    m_low_pct: float  # pump-on threshold
    m_high_pct: float  # pump-off target
    max_quantity_l: float

    def __post_init__(self):
        if not (0 < self.m_low_pct < self.m_high_pct < 100):
            raise PolicyError(
                f"thresholds must satisfy 0 < m_low < m_high < 100, "
                f"got m_low={self.m_low_pct} m_high={self.m_high_pct}"
            )
        if self.max_quantity_l <= 0:
            raise PolicyError(f"max_quantity_l must be positive, got {self.max_quantity_l}")


@dataclass(frozen=True)
class IrrigationDecision:
    region_id: int
    command: str  # "on" | "off" | "none"
    water_quantity_l: float
    source_seq: int
    computed_at: SimTime


def gravimetric_moisture(sample: GravimetricSample) -> float:
    """Water weight over dry-soil weight, percent. Unclamped: saturated soil can exceed 100."""
    if sample.dry_soil_weight_g <= 0:
        raise BadSampleError(f"dry soil weight must be positive, got {sample.dry_soil_weight_g}")
    if sample.water_weight_g < 0:
        raise BadSampleError(f"water weight must be non-negative, got {sample.water_weight_g}")
    return 100.0 * sample.water_weight_g / sample.dry_soil_weight_g


def calibrate_moisture(raw: RawSample, curve: CalibrationCurve) -> float:
    pct = 100.0 * (curve.dry_raw - raw.adc_raw) / (curve.dry_raw - curve.wet_raw)
    return min(100.0, max(0.0, pct))


def compute_water_quantity(moisture_pct: float, region: Region, policy: IrrigationPolicy) -> float:
    """Liters needed to raise gravimetric moisture to m_high, capped by the policy."""
    deficit = max(0.0, policy.m_high_pct - moisture_pct)
    liters = deficit / 100.0 * region.dry_soil_mass_kg()
    return min(policy.max_quantity_l, liters)


def decide(
    reading: SensorReading,
    pump_on: bool,
    policy: IrrigationPolicy,
    region: Region,
    computed_at: SimTime,
) -> IrrigationDecision:
    """Hysteretic pump decision from one reading and the believed pump state."""
    moisture = reading.soil_moisture_pct
    if not pump_on and moisture < policy.m_low_pct:
        command, quantity = "on", compute_water_quantity(moisture, region, policy)
    elif pump_on and moisture >= policy.m_high_pct:
        command, quantity = "off", 0.0
    else:
        command, quantity = "none", 0.0
    return IrrigationDecision(
        region_id=reading.region_id,
        command=command,
        water_quantity_l=quantity,
        source_seq=reading.seq_no,
        computed_at=computed_at,
    )


class Cloud:
    """Ingests uploaded batches, stores telemetry, and issues pump commands.

    Dedupes by (region_id, seq_no) so retransmitted or re-uploaded readings
    are stored at most once; reruns of the same batch produce no new
    decisions either.
    """

    TARGET = "cloud"

    def __init__(
        self,
        kernel: Kernel,
        store: TelemetryStore,
        regions: dict[int, Region],
        policies: dict[int, IrrigationPolicy],
        compute_latency_ms: int = 50,
        override_hold_ms: int = 600_000,
    ):
        self.kernel = kernel
        self.store = store
        self.regions = regions
        self.policies = policies
        self.compute_latency_ms = compute_latency_ms
        self.override_hold_ms = override_hold_ms
        self.pump_believed_on: dict[int, bool] = {rid: False for rid in regions}
        self.override_until: dict[int, SimTime] = {}
        self.seen: set[tuple[int, int]] = set()
        self.latency_samples_ms: list[int] = []
        self.command_links: dict[int, object] = {}  # region id -> Link to that node
        self.notify_link = None  # Link back to the drone for DECISION frames
        kernel.register(self.TARGET, self._handle)
        for record in store.all_records():
            if record.kind == KIND_READING:
                self.seen.add((record.body["region_id"], record.body["seq_no"]))

    # -- wiring -----------------------------------------------------------

    def attach_command_link(self, region_id: int, link) -> None:
        self.command_links[region_id] = link

    def attach_notify_link(self, link) -> None:
        self.notify_link = link

    # -- event handling ----------------------------------------------------

    def _handle(self, event) -> None:
        kind = event.payload[0]
        if kind == "frame":
            frame = wire.decode_frame(event.payload[1])
            if frame.ftype == FrameType.UPLOAD:
                readings = wire.decode_upload_payload(frame.payload)
                self.ingest(readings)
                ack_to = event.payload[2] if len(event.payload) > 2 else None
                if ack_to is not None:
                    ack_to.transmit(Frame(FrameType.DATA_ACK, frame.seq))
            elif frame.ftype == FrameType.PUMP_ACK:
                region_id, on = wire.decode_pump_ack_payload(frame.payload)
                self.pump_believed_on[region_id] = on
        elif kind == "decide":
            self._emit_decision(event.payload[1])

    def ingest(self, readings: list[SensorReading]) -> list[SensorReading]:
        """Store new readings and schedule one decision per region on its newest."""
        now = self.kernel.now
        for r in readings:  # reject the whole batch before touching the store
            if r.region_id not in self.regions:
                raise UnknownRegionError(f"upload for unconfigured region {r.region_id}")
        accepted: list[SensorReading] = []
        for r in readings:
            key = (r.region_id, r.seq_no)
            if key in self.seen:
                continue
            self.seen.add(key)
            accepted.append(r)
            self.store.append(
                KIND_READING,
                {
                    "region_id": r.region_id,
                    "seq_no": r.seq_no,
                    "sampled_at": r.sampled_at,
                    "temperature_c": r.temperature_c,
                    "humidity_pct": r.humidity_pct,
                    "soil_moisture_pct": r.soil_moisture_pct,
                    "ingested_at": now,
                },
                at=now,
            )
        newest: dict[int, SensorReading] = {}
        for r in accepted:
            prev = newest.get(r.region_id)
            if prev is None or r.seq_no > prev.seq_no:
                newest[r.region_id] = r
        for r in newest.values():
            self.kernel.schedule_in(self.compute_latency_ms, self.TARGET, ("decide", r))
        return accepted

    def _emit_decision(self, reading: SensorReading) -> None:
        now = self.kernel.now
        rid = reading.region_id
        if self.override_until.get(rid, -1) >= now:
            return  # operator override holds; automation suppressed
        decision = decide(
            reading,
            self.pump_believed_on[rid],
            self.policies[rid],
            self.regions[rid],
            computed_at=now,
        )
        latency = now - reading.sampled_at
        self.latency_samples_ms.append(latency)
        self.store.append(
            KIND_DECISION,
            {
                "region_id": rid,
                "command": decision.command,
                "water_quantity_l": decision.water_quantity_l,
                "source_seq": decision.source_seq,
                "computed_at": decision.computed_at,
                "latency_ms": latency,
                "cause": "auto",
            },
            at=now,
        )
        if decision.command == "on":
            self.pump_believed_on[rid] = True
            self._send_pump_cmd(rid, True, decision.water_quantity_l)
        elif decision.command == "off":
            self.pump_believed_on[rid] = False
            self._send_pump_cmd(rid, False, 0.0)
        if self.notify_link is not None:
            payload = wire.encode_decision_payload(
                rid, decision.command, decision.water_quantity_l, decision.source_seq
            )
            self.notify_link.transmit(Frame(FrameType.DECISION, decision.source_seq, payload))

    def _send_pump_cmd(self, region_id: int, on: bool, quantity_l: float) -> None:
        link = self.command_links.get(region_id)
        if link is None:
            return
        payload = wire.encode_pump_cmd_payload(region_id, on, quantity_l)
        link.transmit(Frame(FrameType.PUMP_CMD, 0, payload))

    # -- operator surface ---------------------------------------------------

    def set_policy(self, region_id: int, policy: IrrigationPolicy) -> None:
        if region_id not in self.regions:
            raise UnknownRegionError(f"region {region_id} not configured")
        self.policies[region_id] = policy

    def override_pump(self, region_id: int, command: str, quantity_l: float, operator: str) -> dict:
        """Operator command: wins over automation for the hold period."""
        if region_id not in self.regions:
            raise UnknownRegionError(f"region {region_id} not configured")
        now = self.kernel.now
        if command == "on":
            if quantity_l <= 0:
                raise BadQuantityError(f"override quantity {quantity_l}")
            self.pump_believed_on[region_id] = True
            self._send_pump_cmd(region_id, True, quantity_l)
        elif command == "off":
            self.pump_believed_on[region_id] = False
            self._send_pump_cmd(region_id, False, 0.0)
        else:
            raise PolicyError(f"unknown override command {command!r}")
        hold_until = now + self.override_hold_ms
        self.override_until[region_id] = hold_until
        self.store.append(
            KIND_OVERRIDE,
            {
                "region_id": region_id,
                "command": command,
                "quantity_l": quantity_l,
                "operator": operator,
                "hold_until": hold_until,
            },
            at=now,
        )
        return {"region_id": region_id, "command": command, "hold_until": hold_until}

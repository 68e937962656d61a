"""Bit-exact wire protocol spoken between nodes, the drone, and the cloud.

Frame layout (all multi-byte fields big-endian):

    magic   2 bytes  0x41 0x47
    version 1 byte   0x01
    ftype   1 byte   see FrameType
    seq     2 bytes
    len     2 bytes  payload byte length
    payload len bytes
    crc     2 bytes  CRC-16/CCITT-FALSE over magic..payload

DATA payloads are fixed-point sensor readings, 11 bytes:

    region u8 | ts u32 (whole seconds) | temp i16 centi-degC
    | humidity u16 centi-% | moisture u16 centi-%

UPLOAD payloads are a concatenation of 13-byte batch records that carry the
sequence number and a millisecond sample timestamp instead of whole seconds:

    region u8 | seq u16 | sampled u32 (ms) | temp i16 | humidity u16 | moisture u16
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from .errors import (
    BadUploadError,
    CorruptFrameError,
    FrameTooBigError,
    NotAFrameError,
    ShortFrameError,
)

MAGIC = b"\x41\x47"
VERSION = 0x01
HEADER_LEN = 8
CRC_LEN = 2
MAX_PAYLOAD = 0xFFFF

DATA_PAYLOAD_LEN = 11
UPLOAD_RECORD_LEN = 13


class FrameType(IntEnum):
    BEACON = 0x01
    ASSOC_REQ = 0x02
    ASSOC_ACK = 0x03
    DATA = 0x04
    DATA_ACK = 0x05
    UPLOAD = 0x06
    DECISION = 0x07
    PUMP_CMD = 0x08
    PUMP_ACK = 0x09


_CRC_TABLE = []
for _byte in range(256):
    _reg = _byte << 8
    for _ in range(8):
        _reg = ((_reg << 1) ^ 0x1021) if (_reg & 0x8000) else (_reg << 1)
    _CRC_TABLE.append(_reg & 0xFFFF)


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[((crc >> 8) ^ b) & 0xFF]
    return crc


@dataclass(frozen=True)
class Frame:
    ftype: FrameType
    seq: int
    payload: bytes = b""


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise FrameTooBigError(f"payload of {len(frame.payload)} bytes exceeds {MAX_PAYLOAD}")
    ftype = FrameType(frame.ftype)
    head = MAGIC + struct.pack(">BBHH", VERSION, ftype, frame.seq & 0xFFFF, len(frame.payload))
    body = head + frame.payload
    return body + struct.pack(">H", crc16(body))


def decode_frame(buf: bytes) -> Frame:
    if len(buf) < len(MAGIC):
        raise ShortFrameError(f"{len(buf)} bytes; need at least {HEADER_LEN + CRC_LEN}")
    if buf[:2] != MAGIC:
        raise NotAFrameError(f"bad magic {buf[:2].hex()}")
    if len(buf) < HEADER_LEN + CRC_LEN:
        raise ShortFrameError(f"{len(buf)} bytes; need at least {HEADER_LEN + CRC_LEN}")
    version, ftype_raw, seq, length = struct.unpack(">BBHH", buf[2:HEADER_LEN])
    total = HEADER_LEN + length + CRC_LEN
    if len(buf) < total:
        raise ShortFrameError(f"{len(buf)} bytes; frame declares {total}")
    if len(buf) > total:
        raise CorruptFrameError(f"{len(buf) - total} trailing bytes")
    (crc_got,) = struct.unpack(">H", buf[total - CRC_LEN : total])
    if crc16(buf[: total - CRC_LEN]) != crc_got:
        raise CorruptFrameError("crc mismatch")
    if version != VERSION:
        raise CorruptFrameError(f"unsupported version {version}")
    try:
        ftype = FrameType(ftype_raw)
    except ValueError:
        raise CorruptFrameError(f"unknown frame type 0x{ftype_raw:02x}") from None
    return Frame(ftype=ftype, seq=seq, payload=buf[HEADER_LEN : total - CRC_LEN])


@dataclass(frozen=True)
class SensorReading:
    """One region's (temperature, humidity, moisture) triple.

    `sampled_at` is sim-time milliseconds; the DATA wire field truncates it
    to whole seconds, the UPLOAD batch record keeps the milliseconds.
    """

    region_id: int
    seq_no: int
    sampled_at: int
    temperature_c: float
    humidity_pct: float
    soil_moisture_pct: float

    def rounded(self) -> "SensorReading":
        """The reading as it survives the centi-unit wire encoding."""
        return SensorReading(
            region_id=self.region_id,
            seq_no=self.seq_no,
            sampled_at=self.sampled_at,
            temperature_c=_from_centi(_to_centi_signed(self.temperature_c)),
            humidity_pct=_from_centi(_to_centi_unsigned(self.humidity_pct)),
            soil_moisture_pct=_from_centi(_to_centi_unsigned(self.soil_moisture_pct)),
        )


def _to_centi_signed(value: float) -> int:
    return max(-32768, min(32767, int(round(value * 100))))


def _to_centi_unsigned(value: float) -> int:
    return max(0, min(0xFFFF, int(round(value * 100))))


def _from_centi(raw: int) -> float:
    return raw / 100.0


def encode_data_payload(reading: SensorReading) -> bytes:
    return struct.pack(
        ">BIhHH",
        reading.region_id & 0xFF,
        (reading.sampled_at // 1000) & 0xFFFFFFFF,
        _to_centi_signed(reading.temperature_c),
        _to_centi_unsigned(reading.humidity_pct),
        _to_centi_unsigned(reading.soil_moisture_pct),
    )


def decode_data_payload(payload: bytes, seq_no: int) -> SensorReading:
    if len(payload) != DATA_PAYLOAD_LEN:
        raise CorruptFrameError(f"DATA payload is {len(payload)} bytes, expected {DATA_PAYLOAD_LEN}")
    region, ts, temp, hum, moist = struct.unpack(">BIhHH", payload)
    return SensorReading(
        region_id=region,
        seq_no=seq_no,
        sampled_at=ts * 1000,
        temperature_c=_from_centi(temp),
        humidity_pct=_from_centi(hum),
        soil_moisture_pct=_from_centi(moist),
    )


def encode_upload_payload(readings: list[SensorReading]) -> bytes:
    out = bytearray()
    for r in readings:
        out += struct.pack(
            ">BHIhHH",
            r.region_id & 0xFF,
            r.seq_no & 0xFFFF,
            r.sampled_at & 0xFFFFFFFF,
            _to_centi_signed(r.temperature_c),
            _to_centi_unsigned(r.humidity_pct),
            _to_centi_unsigned(r.soil_moisture_pct),
        )
    return bytes(out)


def decode_upload_payload(payload: bytes) -> list[SensorReading]:
    if len(payload) % UPLOAD_RECORD_LEN != 0:
        raise BadUploadError(f"upload payload of {len(payload)} bytes is not a record multiple")
    readings = []
    for i in range(0, len(payload), UPLOAD_RECORD_LEN):
        region, seq, sampled, temp, hum, moist = struct.unpack(
            ">BHIhHH", payload[i : i + UPLOAD_RECORD_LEN]
        )
        readings.append(
            SensorReading(
                region_id=region,
                seq_no=seq,
                sampled_at=sampled,
                temperature_c=_from_centi(temp),
                humidity_pct=_from_centi(hum),
                soil_moisture_pct=_from_centi(moist),
            )
        )
    return readings


def encode_pump_cmd_payload(region_id: int, on: bool, quantity_l: float) -> bytes:
    centi = max(0, min(0xFFFFFFFF, int(round(quantity_l * 100))))
    return struct.pack(">BBI", region_id & 0xFF, 1 if on else 0, centi)


def decode_pump_cmd_payload(payload: bytes) -> tuple[int, bool, float]:
    if len(payload) != 6:
        raise CorruptFrameError(f"PUMP_CMD payload is {len(payload)} bytes, expected 6")
    region, on, centi = struct.unpack(">BBI", payload)
    return region, bool(on), centi / 100.0


def encode_pump_ack_payload(region_id: int, on: bool) -> bytes:
    return struct.pack(">BB", region_id & 0xFF, 1 if on else 0)


def decode_pump_ack_payload(payload: bytes) -> tuple[int, bool]:
    if len(payload) != 2:
        raise CorruptFrameError(f"PUMP_ACK payload is {len(payload)} bytes, expected 2")
    region, on = struct.unpack(">BB", payload)
    return region, bool(on)


_DECISION_CODES = {"on": 1, "off": 0, "none": 2}
_DECISION_NAMES = {v: k for k, v in _DECISION_CODES.items()}


def encode_decision_payload(region_id: int, command: str, quantity_l: float, source_seq: int) -> bytes:
    centi = max(0, min(0xFFFFFFFF, int(round(quantity_l * 100))))
    return struct.pack(">BBIH", region_id & 0xFF, _DECISION_CODES[command], centi, source_seq & 0xFFFF)


def decode_decision_payload(payload: bytes) -> tuple[int, str, float, int]:
    if len(payload) != 8:
        raise CorruptFrameError(f"DECISION payload is {len(payload)} bytes, expected 8")
    region, code, centi, source_seq = struct.unpack(">BBIH", payload)
    if code not in _DECISION_NAMES:
        raise CorruptFrameError(f"unknown decision code {code}")
    return region, _DECISION_NAMES[code], centi / 100.0, source_seq


def encode_assoc_req_payload(region_id: int) -> bytes:
    return struct.pack(">B", region_id & 0xFF)


def decode_assoc_req_payload(payload: bytes) -> int:
    if len(payload) != 1:
        raise CorruptFrameError(f"ASSOC_REQ payload is {len(payload)} bytes, expected 1")
    return payload[0]


def encode_assoc_ack_payload(region_id: int, start_seq: int) -> bytes:
    return struct.pack(">BH", region_id & 0xFF, start_seq & 0xFFFF)


def decode_assoc_ack_payload(payload: bytes) -> tuple[int, int]:
    if len(payload) != 3:
        raise CorruptFrameError(f"ASSOC_ACK payload is {len(payload)} bytes, expected 3")
    region, start_seq = struct.unpack(">BH", payload)
    return region, start_seq


def golden_frames() -> list[tuple[str, Frame]]:
    """One representative frame per type; the repo ships their hex dumps.

    The shipped file is generated with an independent bit-by-bit CRC, so it
    cross-checks this codec rather than restating it.
    """
    reading_a = SensorReading(1, 7, 25_000, 36.5, 22.25, 25.0)
    reading_b = SensorReading(2, 12, 26_000, 39.25, 14.5, 60.0)
    return [
        ("BEACON", Frame(FrameType.BEACON, seq=1)),
        ("ASSOC_REQ", Frame(FrameType.ASSOC_REQ, seq=2, payload=encode_assoc_req_payload(1))),
        ("ASSOC_ACK", Frame(FrameType.ASSOC_ACK, seq=2, payload=encode_assoc_ack_payload(1, 7))),
        ("DATA", Frame(FrameType.DATA, seq=7, payload=encode_data_payload(reading_a))),
        ("DATA_ACK", Frame(FrameType.DATA_ACK, seq=7)),
        ("UPLOAD", Frame(FrameType.UPLOAD, seq=3, payload=encode_upload_payload([reading_a, reading_b]))),
        ("DECISION", Frame(FrameType.DECISION, seq=7, payload=encode_decision_payload(1, "on", 390.0, 7))),
        ("PUMP_CMD", Frame(FrameType.PUMP_CMD, seq=0, payload=encode_pump_cmd_payload(1, True, 390.0))),
        ("PUMP_ACK", Frame(FrameType.PUMP_ACK, seq=0, payload=encode_pump_ack_payload(1, True))),
    ]

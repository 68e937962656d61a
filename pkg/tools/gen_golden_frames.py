#!/usr/bin/env python3
"""Regenerate docs/golden-frames.hex from the canonical sample frames.

The CRC here is an independent bit-by-bit implementation (check value
0x29B1 for b"123456789"), so the golden file is an oracle for the
table-driven codec rather than a copy of its output.
"""

import struct
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from agrimule import wire  # noqa: E402


def reference_crc16(data: bytes) -> int:
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
    return crc


assert reference_crc16(b"123456789") == 0x29B1


def render(frame: wire.Frame) -> bytes:
    head = wire.MAGIC + struct.pack(
        ">BBHH", wire.VERSION, int(frame.ftype), frame.seq, len(frame.payload)
    )
    body = head + frame.payload
    return body + struct.pack(">H", reference_crc16(body))


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "docs" / "golden-frames.hex"
    lines = [f"{name} {render(frame).hex()}" for name, frame in wire.golden_frames()]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(lines)} frames)")


if __name__ == "__main__":
    main()

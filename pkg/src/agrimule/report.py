"""Run reports computed purely from the telemetry log.

Because every figure here is derived from store records plus the header
metadata, replaying a log always reproduces the original run's report byte
for byte.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .store import KIND_DECISION, KIND_OVERRIDE, KIND_PUMP, KIND_READING, KIND_TOUR, Record


def nearest_rank(sorted_values: list, pct: float):
    """Classic nearest-rank percentile; deterministic, no interpolation."""
    if not sorted_values:
        return None
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def build_report(meta: dict[str, Any], records: list[Record]) -> dict[str, Any]:
    readings_by_region: dict[str, int] = {}
    decisions_by_region: dict[str, dict[str, int]] = {}
    commanded_by_region: dict[str, float] = {}
    delivered_by_region: dict[str, float] = {}
    latencies: list[int] = []
    tours = 0
    skipped = 0
    overrides = 0

    for r in records:
        rid = str(r.body.get("region_id"))
        if r.kind == KIND_READING:
            readings_by_region[rid] = readings_by_region.get(rid, 0) + 1
        elif r.kind == KIND_DECISION:
            per = decisions_by_region.setdefault(rid, {"on": 0, "off": 0, "none": 0})
            per[r.body["command"]] += 1
            if r.body["command"] == "on":
                commanded_by_region[rid] = (
                    commanded_by_region.get(rid, 0.0) + r.body["water_quantity_l"]
                )
            if "latency_ms" in r.body:
                latencies.append(r.body["latency_ms"])
        elif r.kind == KIND_PUMP:
            delivered_by_region[rid] = r.body["total_delivered_l"]
        elif r.kind == KIND_TOUR:
            tours += 1
            skipped += len(r.body.get("skipped_regions", []))
        elif r.kind == KIND_OVERRIDE:
            overrides += 1
            if r.body.get("command") == "on":
                commanded_by_region[rid] = (
                    commanded_by_region.get(rid, 0.0) + r.body.get("quantity_l", 0.0)
                )

    latencies.sort()
    latency_stats: dict[str, Any] = {"count": len(latencies)}
    if latencies:
        latency_stats.update(
            min=latencies[0],
            max=latencies[-1],
            mean=sum(latencies) / len(latencies),
            p50=nearest_rank(latencies, 50),
            p95=nearest_rank(latencies, 95),
        )

    return {
        "scenario": meta.get("scenario"),
        "seed": meta.get("seed"),
        "duration_ms": meta.get("duration_ms"),
        "readings": {
            "total": sum(readings_by_region.values()),
            "by_region": dict(sorted(readings_by_region.items())),
        },
        "decisions": {
            "total": sum(sum(v.values()) for v in decisions_by_region.values()),
            "by_region": dict(sorted(decisions_by_region.items())),
        },
        "water_l": {
            "commanded": dict(sorted(commanded_by_region.items())),
            "delivered": dict(sorted(delivered_by_region.items())),
        },
        "latency_ms": latency_stats,
        "tours": {"completed": tours, "skipped_region_visits": skipped},
        "overrides": overrides,
        "records": len(records),
    }


def render_report(report: dict[str, Any]) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"

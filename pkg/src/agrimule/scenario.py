"""Scenario configuration and the wiring that turns one into a live simulation.

A scenario is a single JSON document: regions with soil/sensor/pump/policy
parameters, a weather trace, link impairments, drone flight parameters, and
the latency components of the cloud. `parse_config` validates everything up
front and reports every bad field at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .cloud import CalibrationCurve, Cloud, IrrigationPolicy
from .errors import ConfigError, DroneBusyError
from .farm import (
    DEFAULT_DRY_RAW,
    DEFAULT_WET_RAW,
    Farm,
    PumpState,
    Region,
    SoilState,
    WeatherTrace,
)
from .kernel import Kernel
from .mule import DroneAgent, LinkModel, NodeAgent, ProtocolParams, make_duplex
from .report import build_report
from .store import KIND_PUMP, TelemetryStore


@dataclass(frozen=True)
class RegionConfig:
    region: Region
    initial_moisture_pct: float
    target_pct: float
    dry_rate_pct_per_hour: float
    temp_coeff_per_degc: float
    dry_raw: int
    wet_raw: int
    sensor_noise: bool
    flow_rate_lpm: float
    policy: IrrigationPolicy


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    duration_ms: int
    soil_tick_ms: int
    regions: tuple[RegionConfig, ...]
    weather: tuple[tuple[int, float, float], ...]
    node_link: LinkModel
    uplink: LinkModel
    command_link: LinkModel
    dock_latency_ms: int
    proto: ProtocolParams
    compute_latency_ms: int
    override_hold_ms: int
    drone_speed_mps: float
    drone_base: tuple[float, float]
    move_tick_ms: int
    tour_times_ms: tuple[int, ...]
    service_host: str
    service_port: int


def _get(obj: dict, path: str, issues: list[str], default=None, required=False):
    cur: Any = obj
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required:
                issues.append(f"{path}: missing")
            return default
        cur = cur[part]
    return cur


def _link(obj: dict, name: str, issues: list[str], default_latency: int) -> LinkModel:
    latency = _get(obj, f"links.{name}.latency_ms", issues, default_latency)
    jitter = _get(obj, f"links.{name}.jitter_ms", issues, 0)
    loss = _get(obj, f"links.{name}.loss_prob", issues, 0.0)
    if latency < 0:
        issues.append(f"links.{name}.latency_ms: must be >= 0, got {latency}")
    if jitter < 0:
        issues.append(f"links.{name}.jitter_ms: must be >= 0, got {jitter}")
    if not (0.0 <= loss <= 1.0):
        issues.append(f"links.{name}.loss_prob: must be in [0, 1], got {loss}")
    return LinkModel(latency_ms=latency, jitter_ms=jitter, loss_prob=loss)


def parse_config(obj: dict[str, Any]) -> ScenarioConfig:
    issues: list[str] = []
    name = _get(obj, "name", issues, "scenario")
    seed = _get(obj, "seed", issues, 0)
    duration_s = _get(obj, "duration_s", issues, required=True)
    soil_tick_ms = _get(obj, "soil_tick_ms", issues, 1000)
    if duration_s is not None and duration_s <= 0:
        issues.append(f"duration_s: must be positive, got {duration_s}")
    if soil_tick_ms <= 0:
        issues.append(f"soil_tick_ms: must be positive, got {soil_tick_ms}")

    regions: list[RegionConfig] = []
    seen_ids: set[int] = set()
    for i, robj in enumerate(obj.get("regions") or []):
        prefix = f"regions[{i}]"
        rid = robj.get("id")
        if rid is None:
            issues.append(f"{prefix}.id: missing")
            continue
        if rid in seen_ids:
            issues.append(f"{prefix}.id: duplicate region id {rid}")
        seen_ids.add(rid)
        area = robj.get("area_m2", 0)
        depth = robj.get("root_depth_m", 0)
        density = robj.get("bulk_density_kg_m3", 0)
        if area <= 0:
            issues.append(f"{prefix}.area_m2: must be positive, got {area}")
        if depth <= 0:
            issues.append(f"{prefix}.root_depth_m: must be positive, got {depth}")
        if not (800 <= density <= 2000):
            issues.append(f"{prefix}.bulk_density_kg_m3: must be in [800, 2000], got {density}")
        pos = robj.get("position", [0.0, 0.0])
        soil = robj.get("soil", {})
        moisture = soil.get("initial_moisture_pct", 20.0)
        if not (0 <= moisture <= 100):
            issues.append(f"{prefix}.soil.initial_moisture_pct: must be in [0, 100], got {moisture}")
        fc28 = robj.get("fc28", {})
        dry_raw = fc28.get("dry_raw", DEFAULT_DRY_RAW)
        wet_raw = fc28.get("wet_raw", DEFAULT_WET_RAW)
        if not (0 <= wet_raw < dry_raw <= 1023):
            issues.append(f"{prefix}.fc28: need 0 <= wet_raw < dry_raw <= 1023, got {wet_raw}/{dry_raw}")
        pol = robj.get("policy", {})
        m_low = pol.get("m_low_pct", 30.0)
        m_high = pol.get("m_high_pct", 45.0)
        max_q = pol.get("max_quantity_l", 5000.0)
        policy = None
        if not (0 < m_low < m_high < 100):
            issues.append(
                f"{prefix}.policy: need 0 < m_low_pct < m_high_pct < 100, got {m_low}/{m_high}"
            )
        elif max_q <= 0:
            issues.append(f"{prefix}.policy.max_quantity_l: must be positive, got {max_q}")
        else:
            policy = IrrigationPolicy(m_low, m_high, max_q)
        flow = robj.get("pump", {}).get("flow_rate_lpm", 54.0)
        if flow <= 0:
            issues.append(f"{prefix}.pump.flow_rate_lpm: must be positive, got {flow}")
        if policy is None or area <= 0 or depth <= 0 or not (800 <= density <= 2000):
            continue
        regions.append(
            RegionConfig(
                region=Region(
                    id=rid,
                    name=robj.get("name", f"Region {rid}"),
                    position=(float(pos[0]), float(pos[1])),
                    area_m2=area,
                    root_depth_m=depth,
                    bulk_density_kg_m3=density,
                ),
                initial_moisture_pct=moisture,
                target_pct=m_high,
                dry_rate_pct_per_hour=soil.get("dry_rate_pct_per_hour", 0.0),
                temp_coeff_per_degc=soil.get("temp_coeff_per_degc", 0.05),
                dry_raw=dry_raw,
                wet_raw=wet_raw,
                sensor_noise=bool(robj.get("sensor_noise", True)),
                flow_rate_lpm=flow,
                policy=policy,
            )
        )
    if not obj.get("regions"):
        issues.append("regions: at least one region is required")

    weather_raw = obj.get("weather") or []
    weather: list[tuple[int, float, float]] = []
    last_t = None
    for i, point in enumerate(weather_raw):
        if not isinstance(point, (list, tuple)) or len(point) != 3:
            issues.append(f"weather[{i}]: expected [t_ms, temp_c, humidity_pct]")
            continue
        t, temp, hum = point
        if last_t is not None and t <= last_t:
            issues.append(f"weather[{i}]: times must be strictly increasing")
        last_t = t
        if not (0 <= hum <= 100):
            issues.append(f"weather[{i}]: humidity must be in [0, 100], got {hum}")
        weather.append((int(t), float(temp), float(hum)))
    duration_ms = int(duration_s * 1000) if duration_s else 0
    if weather and duration_s and (weather[0][0] > 0 or weather[-1][0] < duration_ms):
        issues.append(
            f"weather: trace [{weather[0][0]}, {weather[-1][0]}] ms must cover the full run "
            f"[0, {duration_ms}] ms"
        )
    if not weather_raw:
        issues.append("weather: trace is required")

    node_link = _link(obj, "node", issues, 100)
    uplink = _link(obj, "uplink", issues, 350)
    command_link = _link(obj, "command", issues, 100)
    dock_latency = _get(obj, "links.dock_latency_ms", issues, 0)

    max_retries = _get(obj, "protocol.max_retries", issues, 5)
    if max_retries < 1:
        issues.append(f"protocol.max_retries: must be >= 1, got {max_retries}")
    readings_per_region = _get(obj, "protocol.readings_per_region", issues, 3)
    if readings_per_region < 1:
        issues.append(f"protocol.readings_per_region: must be >= 1, got {readings_per_region}")
    proto = ProtocolParams(
        max_retries=max_retries,
        assoc_timeout_ms=_get(obj, "protocol.assoc_timeout_ms", issues, 200),
        data_timeout_ms=_get(obj, "protocol.data_timeout_ms", issues, None),
        upload_timeout_ms=_get(obj, "protocol.upload_timeout_ms", issues, None),
        readings_per_region=readings_per_region,
    )

    compute_latency = _get(obj, "cloud.compute_latency_ms", issues, 50)
    override_hold_s = _get(obj, "cloud.override_hold_s", issues, 600)

    speed = _get(obj, "drone.speed_mps", issues, 5.0)
    if speed <= 0:
        issues.append(f"drone.speed_mps: must be positive, got {speed}")
    base = _get(obj, "drone.base", issues, [0.0, 0.0])
    move_tick = _get(obj, "drone.move_tick_ms", issues, 100)
    if move_tick <= 0:
        issues.append(f"drone.move_tick_ms: must be positive, got {move_tick}")
    tour_times_s = _get(obj, "drone.tour_times_s", issues, [])
    tour_times_ms = tuple(int(t * 1000) for t in tour_times_s)
    if duration_s and any(t > duration_ms for t in tour_times_ms):
        issues.append("drone.tour_times_s: a scheduled tour starts after the run ends")

    if issues:
        raise ConfigError(issues)

    return ScenarioConfig(
        name=name,
        seed=seed,
        duration_ms=duration_ms,
        soil_tick_ms=soil_tick_ms,
        regions=tuple(regions),
        weather=tuple(weather),
        node_link=node_link,
        uplink=uplink,
        command_link=command_link,
        dock_latency_ms=dock_latency,
        proto=proto,
        compute_latency_ms=compute_latency,
        override_hold_ms=int(override_hold_s * 1000),
        drone_speed_mps=speed,
        drone_base=(float(base[0]), float(base[1])),
        move_tick_ms=move_tick,
        tour_times_ms=tour_times_ms,
        service_host=_get(obj, "service.host", issues, "127.0.0.1"),
        service_port=_get(obj, "service.port", issues, 8787),
    )


def load_config(path: Path | str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    except ValueError as exc:
        raise ConfigError([f"config {path} is not valid json: {exc}"]) from exc
    return parse_config(obj)


def default_config() -> dict[str, Any]:
    """The stock two-region scenario: clean links, quiescent soil, hot dry weather."""

    def region(rid: int, pos: list[float], moisture: float) -> dict[str, Any]:
        return {
            "id": rid,
            "name": f"Region {rid}",
            "position": pos,
            "area_m2": 10.0,
            "root_depth_m": 0.3,
            "bulk_density_kg_m3": 1300.0,
            "soil": {
                "initial_moisture_pct": moisture,
                "dry_rate_pct_per_hour": 0.0,
                "temp_coeff_per_degc": 0.05,
            },
            "fc28": {"dry_raw": 850, "wet_raw": 350},
            "sensor_noise": False,
            "pump": {"flow_rate_lpm": 54.0},
            "policy": {"m_low_pct": 30.0, "m_high_pct": 45.0, "max_quantity_l": 5000.0},
        }

    return {
        "name": "default",
        "seed": 7,
        "duration_s": 3600,
        "soil_tick_ms": 1000,
        "regions": [region(1, [60.0, 0.0], 25.0), region(2, [60.0, 40.0], 60.0)],
        "weather": [
            [0, 43.0, 8.0],
            [1_800_000, 41.5, 10.0],
            [3_600_000, 39.0, 12.0],
        ],
        "links": {
            "node": {"latency_ms": 100, "jitter_ms": 0, "loss_prob": 0.0},
            "uplink": {"latency_ms": 350, "jitter_ms": 0, "loss_prob": 0.0},
            "command": {"latency_ms": 100, "jitter_ms": 0, "loss_prob": 0.0},
            "dock_latency_ms": 0,
        },
        "protocol": {"max_retries": 5, "assoc_timeout_ms": 200, "readings_per_region": 3},
        "cloud": {"compute_latency_ms": 50, "override_hold_s": 600},
        "drone": {
            "speed_mps": 5.0,
            "base": [0.0, 0.0],
            "move_tick_ms": 100,
            "tour_times_s": [10, 1210, 2410],
        },
        "service": {"host": "127.0.0.1", "port": 8787},
    }


def lossy_config() -> dict[str, Any]:
    """Demo scenario with sensor noise, soil drying, and impaired links."""
    obj = default_config()
    obj["name"] = "lossy"
    for region in obj["regions"]:
        region["sensor_noise"] = True
        region["soil"]["dry_rate_pct_per_hour"] = 0.8
    obj["links"]["node"].update(jitter_ms=20, loss_prob=0.05)
    obj["links"]["uplink"].update(jitter_ms=40, loss_prob=0.05)
    return obj


class Simulation:
    """A fully wired scenario: kernel, farm, nodes, drone, cloud, store."""

    SCHEDULER = "scheduler"

    def __init__(self, config: ScenarioConfig, store_path: Path | str | None, sync: bool = True):
        self.config = config
        self.kernel = Kernel(config.seed)
        self.weather = WeatherTrace(list(config.weather))
        self.farm = Farm(self.kernel, self.weather)
        meta = {"scenario": config.name, "seed": config.seed, "duration_ms": config.duration_ms}
        self.store = TelemetryStore(store_path, meta=meta, sync=sync)
        self.nodes: dict[int, NodeAgent] = {}
        regions = [rc.region for rc in config.regions]
        self.drone = DroneAgent(
            self.kernel,
            regions,
            base=config.drone_base,
            speed_mps=config.drone_speed_mps,
            store=self.store,
            proto=config.proto,
            move_tick_ms=config.move_tick_ms,
        )
        self.cloud = Cloud(
            self.kernel,
            self.store,
            regions={r.id: r for r in regions},
            policies={rc.region.id: rc.policy for rc in config.regions},
            compute_latency_ms=config.compute_latency_ms,
            override_hold_ms=config.override_hold_ms,
        )

        drone_to_cloud, cloud_to_drone = make_duplex(
            self.kernel, config.uplink, DroneAgent.TARGET, Cloud.TARGET, "uplink"
        )
        self.drone.uplink = drone_to_cloud
        self.cloud.attach_notify_link(cloud_to_drone)
        dock_model = LinkModel(latency_ms=config.dock_latency_ms, jitter_ms=0, loss_prob=0.0)
        dock_up, _dock_down = make_duplex(
            self.kernel, dock_model, DroneAgent.TARGET, Cloud.TARGET, "dock"
        )
        self.drone.dock = dock_up

        for rc in config.regions:
            rid = rc.region.id
            self.farm.add_region(
                rc.region,
                SoilState(
                    moisture_pct=rc.initial_moisture_pct,
                    target_pct=rc.target_pct,
                    dry_rate_pct_per_hour=rc.dry_rate_pct_per_hour,
                    temp_coeff_per_degc=rc.temp_coeff_per_degc,
                ),
                PumpState(flow_rate_lpm=rc.flow_rate_lpm),
                dry_raw=rc.dry_raw,
                wet_raw=rc.wet_raw,
                sensor_noise=rc.sensor_noise,
            )
            node = NodeAgent(
                self.kernel,
                self.farm,
                rid,
                curve=CalibrationCurve(dry_raw=rc.dry_raw, wet_raw=rc.wet_raw),
                store=self.store,
                proto=config.proto,
                soil_tick_ms=config.soil_tick_ms,
            )
            drone_to_node, node_to_drone = make_duplex(
                self.kernel, config.node_link, DroneAgent.TARGET, node.target, f"node{rid}"
            )
            self.drone.node_links[rid] = drone_to_node
            node.to_drone = node_to_drone
            cloud_to_node, node_to_cloud = make_duplex(
                self.kernel, config.command_link, Cloud.TARGET, node.target, f"cmd{rid}"
            )
            self.cloud.attach_command_link(rid, cloud_to_node)
            node.to_cloud = node_to_cloud
            node.start_soil_ticks()
            self.nodes[rid] = node

        self.kernel.register(self.SCHEDULER, self._on_scheduled)
        for t in config.tour_times_ms:
            self.kernel.schedule(t, self.SCHEDULER, ("dispatch",))

    def _on_scheduled(self, event) -> None:
        if event.payload[0] == "dispatch":
            try:
                self.drone.dispatch()
            except DroneBusyError:
                pass  # previous tour still running; skip this slot

    # -- operator commands (also used by the control service) ---------------

    def dispatch_drone(self) -> int:
        return self.drone.dispatch()

    def override_pump(self, region_id: int, command: str, quantity_l: float, operator: str) -> dict:
        return self.cloud.override_pump(region_id, command, quantity_l, operator)

    def set_policy(self, region_id: int, policy: IrrigationPolicy) -> None:
        self.cloud.set_policy(region_id, policy)

    # -- running -------------------------------------------------------------

    def run_headless(self) -> dict[str, Any]:
        self.kernel.run_until(self.config.duration_ms)
        self.finalize()
        return self.build_report()

    def finalize(self) -> None:
        """Append one final pump snapshot per region so reports replay from the log."""
        for rid in sorted(self.nodes):
            pump = self.farm.plot(rid).pump
            self.store.append(
                KIND_PUMP,
                {
                    "region_id": rid,
                    "action": "snapshot",
                    "cause": "run-end",
                    "on": pump.on,
                    "total_delivered_l": pump.total_delivered_l,
                    "commanded_remaining_l": pump.commanded_remaining_l,
                },
                at=self.kernel.now,
            )

    def build_report(self) -> dict[str, Any]:
        return build_report(self.store.meta, self.store.all_records())

    def close(self) -> None:
        self.store.close()

import dataclasses
import math
import random

import pytest

from agrimule.errors import DroneBusyError, EmptyTourError
from agrimule.farm import Region
from agrimule.kernel import Kernel
from agrimule.mule import (
    DroneMode,
    DroneState,
    LinkModel,
    advance_drone,
    plan_tour,
)
from agrimule.scenario import Simulation, default_config, parse_config
from agrimule.store import KIND_READING, KIND_TOUR
from agrimule.wire import FrameType


def region(rid, x, y):
    return Region(id=rid, name=f"Region {rid}", position=(float(x), float(y)),
                  area_m2=10.0, root_depth_m=0.3, bulk_density_kg_m3=1300.0)


def mini_config(n_regions=1, node_loss=0.0, uplink_loss=0.0, node_jitter=0, seed=7):
    obj = default_config()
    obj["seed"] = seed
    obj["duration_s"] = 120
    obj["soil_tick_ms"] = 3_600_000  # park the soil; these tests are about the protocol
    obj["regions"] = obj["regions"][:n_regions]
    for i, robj in enumerate(obj["regions"]):
        robj["position"] = [2.0 + 2.0 * i, 0.0]
    obj["drone"]["tour_times_s"] = [1]
    obj["links"]["node"].update(loss_prob=node_loss, jitter_ms=node_jitter)
    obj["links"]["uplink"].update(loss_prob=uplink_loss)
    obj["weather"] = [[0, 43.0, 8.0], [120_000, 43.0, 8.0]]
    return parse_config(obj)


# -- tour planning -------------------------------------------------------------


def test_plan_tour_eta_is_distance_over_speed():
    plan = plan_tour([region(1, 100, 0)], base=(0.0, 0.0), speed_mps=5.0)
    assert plan.stops[0].eta_ms == 20_000
    assert plan.stops[-1].region_id is None
    assert plan.stops[-1].eta_ms == 40_000
    assert plan.total_distance_m == pytest.approx(200.0)


def test_plan_tour_region_at_base_eta_zero():
    plan = plan_tour([region(1, 0, 0)], base=(0.0, 0.0), speed_mps=5.0)
    assert plan.stops[0].eta_ms == 0


def test_plan_tour_two_regions_total_length_matches_geometry():
    plan = plan_tour([region(1, 60, 0), region(2, 60, 40)], base=(0.0, 0.0), speed_mps=5.0)
    expected = 60.0 + 40.0 + math.hypot(60.0, 40.0)
    assert plan.total_distance_m == pytest.approx(expected)
    assert plan.stops[0].eta_ms == 12_000
    assert plan.stops[1].eta_ms == 20_000


def test_plan_tour_empty_rejected():
    with pytest.raises(EmptyTourError):
        plan_tour([], base=(0.0, 0.0), speed_mps=5.0)


# -- kinematics -----------------------------------------------------------------


def test_advance_idle_is_a_noop():
    state = DroneState(mode=DroneMode.IDLE, position=(1.0, 2.0), speed_mps=5.0)
    assert advance_drone(state, 1000) == state


def test_advance_arrival_switches_to_associating():
    state = DroneState(
        mode=DroneMode.EN_ROUTE, position=(99.9, 0.0), speed_mps=5.0,
        target=(100.0, 0.0), target_region=1,
    )
    nxt = advance_drone(state, 100)
    assert nxt.mode is DroneMode.ASSOCIATING
    assert nxt.position == (100.0, 0.0)


def test_advance_displacement_never_exceeds_speed_times_dt():
    rng = random.Random(5)
    for _ in range(10_000):
        pos = (rng.uniform(-100, 100), rng.uniform(-100, 100))
        target = (rng.uniform(-100, 100), rng.uniform(-100, 100))
        speed = rng.uniform(0.1, 20.0)
        dt = rng.randint(1, 2000)
        state = DroneState(mode=DroneMode.EN_ROUTE, position=pos, speed_mps=speed,
                           target=target, target_region=1)
        nxt = advance_drone(state, dt)
        moved = math.dist(pos, nxt.position)
        assert moved <= speed * dt / 1000.0 + 1e-9


# -- association ------------------------------------------------------------------


def test_association_completes_in_exactly_one_round_trip():
    sim = Simulation(mini_config(), None)
    sim.kernel.run_until(120_000)
    events = {what: t for t, what, _ in sim.drone.events}
    assert events["arrive"] == 1_400  # dispatch at 1 s + 2 m at 5 m/s
    assert events["assoc-ok"] == 1_400 + 2 * 100
    # two-phase timers: no spurious second ASSOC_REQ on a clean link
    reqs = [r for r in sim.drone.node_links[1].sent if r.ftype == FrameType.ASSOC_REQ]
    assert len(reqs) == 1


def test_association_fails_after_r_times_timeout():
    sim = Simulation(mini_config(node_loss=1.0), None)
    sim.kernel.run_until(120_000)
    events = {what: t for t, what, _ in sim.drone.events}
    assert events["assoc-failed"] == events["arrive"] + 5 * 200
    tours = [r for r in sim.store.all_records() if r.kind == KIND_TOUR]
    assert tours[0].body["skipped_regions"] == [1]
    assert sim.drone.mode is DroneMode.IDLE


def test_association_failure_rate_matches_analytic_model():
    # per-attempt round trip survives with (1-0.2)^2; R=5 attempts
    p_fail = (1 - 0.8 ** 2) ** 5
    trials = 1000
    base = mini_config(node_loss=0.2)
    failures = 0
    for i in range(trials):
        sim = Simulation(dataclasses.replace(base, seed=i), None)
        sim.kernel.run_until(30_000)
        if any(what == "assoc-failed" for _, what, _ in sim.drone.events):
            failures += 1
    sigma = math.sqrt(trials * p_fail * (1 - p_fail))
    assert abs(failures - trials * p_fail) <= 3 * sigma


# -- collection ---------------------------------------------------------------------


def test_clean_collection_is_three_data_three_acks():
    sim = Simulation(mini_config(), None)
    sim.kernel.run_until(120_000)
    node_tx = sim.nodes[1].to_drone.sent
    drone_tx = sim.drone.node_links[1].sent
    assert len([r for r in node_tx if r.ftype == FrameType.DATA]) == 3
    assert len([r for r in drone_tx if r.ftype == FrameType.DATA_ACK]) == 3
    readings = sim.store.query(kind=KIND_READING)
    assert [r.body["seq_no"] for r in readings] == [0, 1, 2]


class DropFirstDataAck:
    """Link wrapper that eats exactly one DATA_ACK, forcing a retransmission."""

    def __init__(self, inner):
        self.inner = inner
        self.dropped = False

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def transmit(self, frame):
        if frame.ftype == FrameType.DATA_ACK and not self.dropped:
            self.dropped = True
            return False
        return self.inner.transmit(frame)


def test_duplicate_data_is_kept_once():
    sim = Simulation(mini_config(), None)
    sim.drone.node_links[1] = DropFirstDataAck(sim.drone.node_links[1])
    sim.kernel.run_until(120_000)
    node_tx = sim.nodes[1].to_drone.sent
    data_tx = [r for r in node_tx if r.ftype == FrameType.DATA]
    assert len(data_tx) == 4  # one retransmission
    seqs = [r.seq for r in data_tx]
    assert len(seqs) == len(set(seqs)) + 1
    readings = sim.store.query(kind=KIND_READING)
    assert sorted(r.body["seq_no"] for r in readings) == [0, 1, 2]  # deduped


# -- relay ---------------------------------------------------------------------------


def test_relay_latency_decomposition_under_zero_jitter():
    sim = Simulation(mini_config(), None)
    sim.kernel.run_until(120_000)
    uploads = [r for r in sim.drone.uplink.sent if r.ftype == FrameType.UPLOAD]
    assert len(uploads) == 1
    readings = sim.store.query(kind=KIND_READING)
    newest = max(readings, key=lambda r: r.body["seq_no"])
    ingest_minus_sample = newest.body["ingested_at"] - newest.body["sampled_at"]
    assert ingest_minus_sample == 100 + 350  # node link + zero dwell + uplink
    for r in readings:
        dwell = uploads[0].t - (r.body["sampled_at"] + 100)
        assert r.body["ingested_at"] - r.body["sampled_at"] == 100 + dwell + 350


def test_cloud_receives_batch_in_order_exactly_once():
    sim = Simulation(mini_config(n_regions=2), None)
    sim.kernel.run_until(120_000)
    readings = sim.store.query(kind=KIND_READING)
    keys = [(r.body["region_id"], r.body["seq_no"]) for r in readings]
    assert len(keys) == len(set(keys)) == 6
    per_region = [r.body["seq_no"] for r in readings if r.body["region_id"] == 1]
    assert per_region == sorted(per_region)


def test_uplink_down_for_whole_tour_flushes_at_base():
    sim = Simulation(mini_config(n_regions=2, uplink_loss=1.0), None)
    sim.kernel.run_until(120_000)
    events = [what for _, what, _ in sim.drone.events]
    assert events.count("upload-failed") == 2
    assert events.count("upload-ok") == 1  # the docked flush
    keys = [(r.body["region_id"], r.body["seq_no"]) for r in sim.store.query(kind=KIND_READING)]
    assert len(keys) == len(set(keys)) == 6
    assert sim.drone.state.buffer == ()
    assert sim.drone.mode is DroneMode.IDLE


class DropUploadsBefore:
    """Link wrapper that loses every UPLOAD transmitted before a cutoff time."""

    def __init__(self, inner, until_ms):
        self.inner = inner
        self.until_ms = until_ms

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def transmit(self, frame):
        if frame.ftype == FrameType.UPLOAD and self.inner.kernel.now < self.until_ms:
            return False
        return self.inner.transmit(frame)


def test_failed_upload_retries_at_next_relay_window():
    sim = Simulation(mini_config(n_regions=2), None)
    sim.drone.uplink = DropUploadsBefore(sim.drone.uplink, until_ms=9_000)
    sim.kernel.run_until(120_000)
    events = [what for _, what, _ in sim.drone.events]
    assert "upload-failed" in events and "upload-ok" in events
    keys = [(r.body["region_id"], r.body["seq_no"]) for r in sim.store.query(kind=KIND_READING)]
    assert len(keys) == len(set(keys)) == 6  # both batches landed, once each


# -- tour sequencing -----------------------------------------------------------------


def test_dispatch_while_touring_is_busy():
    sim = Simulation(mini_config(), None)
    sim.kernel.run_until(2_000)  # mid-tour
    with pytest.raises(DroneBusyError):
        sim.dispatch_drone()


def test_mode_sequence_is_legal_for_two_region_tour():
    sim = Simulation(mini_config(n_regions=2), None)
    modes = [sim.drone.state.mode]

    def spy(handler):
        def wrapped(ev):
            handler(ev)
            if modes[-1] != sim.drone.state.mode:
                modes.append(sim.drone.state.mode)
        return wrapped

    for target in ("drone", "scheduler"):
        sim.kernel.register(target, spy(sim.kernel._handlers[target]))
    sim.kernel.run_until(120_000)
    assert [m.value for m in modes] == [
        "idle",
        "en_route", "associating", "collecting", "relaying",
        "en_route", "associating", "collecting", "relaying",
        "returning", "idle",
    ]


def test_tour_liveness_under_heavy_loss():
    cfg = mini_config(n_regions=2, node_loss=0.5, uplink_loss=0.5, seed=3)
    sim = Simulation(cfg, None)
    sim.kernel.run_until(120_000)
    events = [what for _, what, _ in sim.drone.events]
    assert "tour-done" in events
    assert sim.drone.mode is DroneMode.IDLE
    assert sim.drone.state.buffer == ()

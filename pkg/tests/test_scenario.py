import dataclasses

import pytest

from agrimule.errors import ConfigError
from agrimule.report import render_report
from agrimule.scenario import Simulation, default_config, lossy_config, parse_config
from agrimule.store import KIND_DECISION, KIND_READING


def test_shipped_scenario_files_match_builders():
    import json
    from pathlib import Path

    root = Path(__file__).resolve().parent.parent / "scenarios"
    assert json.loads((root / "default.json").read_text()) == default_config()
    assert json.loads((root / "lossy.json").read_text()) == lossy_config()


def test_default_config_parses_with_two_named_regions():
    cfg = parse_config(default_config())
    assert [rc.region.name for rc in cfg.regions] == ["Region 1", "Region 2"]
    assert cfg.node_link.latency_ms == 100
    assert cfg.uplink.latency_ms == 350
    assert cfg.compute_latency_ms == 50


def test_lossy_config_parses():
    cfg = parse_config(lossy_config())
    assert cfg.node_link.loss_prob == 0.05


def test_validation_reports_every_bad_field_by_name():
    obj = default_config()
    obj["regions"][0]["policy"] = {"m_low_pct": 50.0, "m_high_pct": 45.0}
    obj["regions"][1]["bulk_density_kg_m3"] = 100.0
    obj["links"]["node"]["loss_prob"] = 1.5
    with pytest.raises(ConfigError) as err:
        parse_config(obj)
    text = str(err.value)
    assert "regions[0].policy" in text
    assert "regions[1].bulk_density_kg_m3" in text
    assert "links.node.loss_prob" in text


def test_validation_requires_weather_coverage():
    obj = default_config()
    obj["weather"] = [[0, 40.0, 10.0], [1_000, 40.0, 10.0]]
    with pytest.raises(ConfigError) as err:
        parse_config(obj)
    assert "weather" in str(err.value)


def test_validation_rejects_duplicate_region_ids():
    obj = default_config()
    obj["regions"][1]["id"] = 1
    with pytest.raises(ConfigError) as err:
        parse_config(obj)
    assert "duplicate region id" in str(err.value)


def test_validation_rejects_nonincreasing_weather_times():
    obj = default_config()
    obj["weather"] = [[0, 40.0, 10.0], [0, 41.0, 10.0], [3_600_000, 41.0, 10.0]]
    with pytest.raises(ConfigError) as err:
        parse_config(obj)
    assert "strictly increasing" in str(err.value)


def test_same_config_and_seed_reproduce_report_and_trace():
    cfg = parse_config(default_config())

    def run():
        sim = Simulation(cfg, None)
        sim.kernel.trace = []
        report = sim.run_headless()
        return render_report(report), sim.kernel.trace

    text1, trace1 = run()
    text2, trace2 = run()
    assert text1 == text2
    assert trace1 == trace2


def test_different_seed_changes_noisy_run():
    cfg = parse_config(lossy_config())
    runs = []
    for seed in (1, 2):
        sim = Simulation(dataclasses.replace(cfg, seed=seed, duration_ms=200_000), None)
        sim.kernel.run_until(200_000)
        runs.append([r.body["soil_moisture_pct"] for r in sim.store.query(kind=KIND_READING)])
    assert runs[0] != runs[1]


def test_every_decision_references_a_stored_reading_at_lower_offset():
    sim = Simulation(parse_config(default_config()), None)
    sim.run_headless()
    records = sim.store.all_records()
    readings = {}
    for r in records:
        if r.kind == KIND_READING:
            readings[(r.body["region_id"], r.body["seq_no"])] = r.offset
    decisions = [r for r in records if r.kind == KIND_DECISION]
    assert decisions
    for d in decisions:
        key = (d.body["region_id"], d.body["source_seq"])
        assert key in readings
        assert readings[key] < d.offset


def test_busy_tour_slots_are_skipped_not_queued():
    obj = default_config()
    obj["drone"]["tour_times_s"] = [10, 11, 12]  # overlapping slots
    sim = Simulation(parse_config(obj), None)
    sim.run_headless()
    tours = [r for r in sim.store.all_records() if r.kind == "tour_report"]
    assert len(tours) == 1

import json

import pytest

from agrimule.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from agrimule.scenario import default_config


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(default_config()))
    return path


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_twice_is_byte_identical(config_path, tmp_path, capsys):
    code1, out1, _ = run_cli(capsys, "run", config_path, "--out", tmp_path / "a")
    code2, out2, _ = run_cli(capsys, "run", config_path, "--out", tmp_path / "b")
    assert code1 == code2 == EXIT_OK
    assert out1 == out2
    assert (tmp_path / "a/report.json").read_bytes() == (tmp_path / "b/report.json").read_bytes()
    assert (tmp_path / "a/telemetry.log").read_bytes() == (tmp_path / "b/telemetry.log").read_bytes()


def test_report_latency_p50_is_half_a_second(config_path, tmp_path, capsys):
    code, out, _ = run_cli(capsys, "run", config_path, "--out", tmp_path / "o")
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["latency_ms"]["p50"] == 500


def test_seed_override_changes_the_report_seed(config_path, tmp_path, capsys):
    _, out, _ = run_cli(capsys, "run", config_path, "--seed", "99", "--out", tmp_path / "o")
    assert json.loads(out)["seed"] == 99


def test_replay_reproduces_the_run_report(config_path, tmp_path, capsys):
    _, out, _ = run_cli(capsys, "run", config_path, "--out", tmp_path / "o")
    code, replayed, _ = run_cli(capsys, "replay", tmp_path / "o/telemetry.log")
    assert code == EXIT_OK
    assert replayed == out


def test_replay_tolerates_torn_final_line(config_path, tmp_path, capsys):
    run_cli(capsys, "run", config_path, "--out", tmp_path / "o")
    log = tmp_path / "o/telemetry.log"
    log.write_bytes(log.read_bytes()[:-7])
    code, replayed, _ = run_cli(capsys, "replay", log)
    assert code == EXIT_OK
    report = json.loads(replayed)
    assert report["records"] >= 1


def test_replay_empty_log_is_ok(tmp_path, capsys):
    log = tmp_path / "empty.log"
    log.write_text("")
    code, out, _ = run_cli(capsys, "replay", log)
    assert code == EXIT_OK
    assert json.loads(out)["records"] == 0


def test_invalid_config_exits_2_and_names_the_field(tmp_path, capsys):
    obj = default_config()
    obj["regions"][0]["policy"]["m_low_pct"] = 80.0  # above m_high
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(obj))
    code, _, err = run_cli(capsys, "run", path, "--out", tmp_path / "o")
    assert code == EXIT_CONFIG
    assert "regions[0].policy" in err


def test_unreadable_config_exits_2(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", tmp_path / "missing.json", "--out", tmp_path / "o")
    assert code == EXIT_CONFIG


def test_store_path_collision_exits_3(config_path, tmp_path, capsys):
    out_dir = tmp_path / "o"
    (out_dir / "telemetry.log").mkdir(parents=True)  # a directory where the log goes
    code, _, err = run_cli(capsys, "run", config_path, "--out", out_dir)
    assert code == EXIT_IO
    assert "storage error" in err


def test_replay_missing_log_exits_3(tmp_path, capsys):
    code, _, err = run_cli(capsys, "replay", tmp_path / "nope.log")
    assert code == EXIT_IO

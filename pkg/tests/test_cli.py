import json
import socket

import pytest

from gaterace.cli import build_parser, main
from tests.test_harness import ONE_GATE


@pytest.fixture
def course_file(tmp_path):
    p = tmp_path / "course.json"
    p.write_text(json.dumps(ONE_GATE))
    return str(p)


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_pose_accuracy(capsys, tmp_path):
    assert main(["pose-accuracy", "--samples", "30", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] and out["samples"] == 30 and out["profile"] == "desk"
    assert (tmp_path / "pose_accuracy.json").is_file()


def test_campaign_one_run(capsys, course_file, tmp_path):
    rc = main(["campaign", "--course", course_file, "--runs", "1", "--profile", "ideal", "--out", str(tmp_path)])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0 and out["overall"]["passes"] == 1 and out["ok"]
    assert (tmp_path / "run_s2_ideal_000.csv").is_file()


def test_config_file_with_override(capsys, course_file, tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"course": course_file, "strategy": 1, "profile": "ideal", "runs": 2}))
    assert main(["campaign", "--config", str(cfg), "--runs", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["strategy"] == 1 and len(out["rows"]) == 1


def test_missing_course(capsys, tmp_path):
    assert main(["campaign", "--course", str(tmp_path / "none.json")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_empty_course(capsys, tmp_path):
    p = tmp_path / "empty.json"
    p.write_text('{"gates": []}')
    assert main(["campaign", "--course", str(p)]) == 2
    assert capsys.readouterr().err


def test_live_connect_dead_port(capsys):
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    rc = main(["live", "--connect", f"127.0.0.1:{port}", "--timeout", "0.3", "--telemetry-port", "0"])
    err = capsys.readouterr().err
    assert rc != 0
    assert "link timeout" in err and "gaterace serve" in err

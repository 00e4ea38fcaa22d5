import json
import os

import jsonschema
import pytest

from galpreint import cli
from galpreint.checks import REPORT_SCHEMA

CLEAN = os.path.join(os.path.dirname(__file__), "data", "euroc_clean")


def test_check_passes_and_json_matches_schema(capsys):
    assert cli.main(["check", "--json"]) == cli.EXIT_OK
    report = json.loads(capsys.readouterr().out)
    jsonschema.validate(report, REPORT_SCHEMA)
    assert report["passed"] and report["first_failure"] is None


def test_injected_fault_fails_and_names_the_check(capsys):
    assert cli.main(["check", "--inject-fault", "kappa3"]) == cli.EXIT_FAIL
    assert "closed_form_series" in capsys.readouterr().err


def test_fault_injection_is_undone():
    from galpreint import so3

    original = so3.kappa3
    cli.main(["check", "--inject-fault", "kappa3"])
    assert so3.kappa3 is original


def test_simulate_is_reproducible(tmp_path, capsys):
    args = ["simulate", "--M", "10", "--seed", "1", "--duration", "0.5"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == cli.EXIT_OK
    assert cli.main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == cli.EXIT_OK
    a = (tmp_path / "a" / "sim_lambda1.csv").read_text()
    assert a == (tmp_path / "b" / "sim_lambda1.csv").read_text()
    assert a.startswith("time,method,anees,ale,excluded_count")


def test_simulate_zero_noise_is_reported_degenerate(capsys):
    assert cli.main(["simulate", "--M", "2", "--lambda", "0", "--duration", "0.2", "--json"]) == cli.EXIT_OK
    out = capsys.readouterr()
    assert "degenerate" in out.err
    assert json.loads(out.out)["0"]["summary"]["equivariant"]["degenerate"]


@pytest.mark.parametrize("argv", [
    ["euroc", "--dataset", "/nonexistent/sequence"],
    ["euroc"],
    ["simulate", "--M", "0"],
    ["simulate", "--lambda", "-1"],
    ["simulate", "--sigma0", "1,2,3"],
    ["simulate", "--gravity", "0,0,-3"],
    ["check", "--workers", "0"],
    ["make-fixture"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults for a quick run\nM = 7\nseed = 5\nlambda = 1, 4\nduration = 0.3\n")
    args = cli.parse_args(["simulate", "--config", str(cfg), "--seed", "9"])
    assert args.M == 7 and args.seed == 9 and args.lam == [1.0, 4.0] and args.duration == 0.3


def test_bad_config_exits_2(tmp_path):
    bad_key = tmp_path / "a.cfg"
    bad_key.write_text("dataset = x\n")
    assert cli.main(["simulate", "--config", str(bad_key)]) == cli.EXIT_USAGE
    bad_line = tmp_path / "b.cfg"
    bad_line.write_text("M 7\n")
    assert cli.main(["simulate", "--config", str(bad_line)]) == cli.EXIT_USAGE
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_USAGE


def test_euroc_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["euroc", "--dataset", CLEAN, "--dt-ij", "0.5", "--out", str(out), "--json"]) == cli.EXIT_OK
    doc = json.loads((out / "table.json").read_text())
    name = os.path.basename(CLEAN)
    assert doc["table"][name]["0.5"]["equivariant"]["median"] < 1e-9
    assert (out / "segments.csv").exists()
    assert name in json.loads(capsys.readouterr().out)["table"]


def test_make_fixture_round_trips_through_euroc(tmp_path, capsys):
    root = tmp_path / "seq"
    assert cli.main(["make-fixture", "--out", str(root), "--duration", "1"]) == cli.EXIT_OK
    assert cli.main(["euroc", "--dataset", str(root), "--dt-ij", "0.2"]) == cli.EXIT_OK
    assert "median NEES" in capsys.readouterr().out

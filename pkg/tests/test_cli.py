import csv
import filecmp

import pytest

from fleetreloc.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_DATA, EXIT_OK, build_parser, load_config, main

SMALL = """
[instance]
fleet = 60
staff = 3
[synthetic]
n_zones = 12
radius_m = 3000.0
daily_trips = 400.0
fleet = 60
[tune]
trials = 3
scenarios = 2
[bench]
staff_max = 2
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return str(p)


def run(cmd, config, out, *extra):
    return main([cmd, "--config", config, "--out", str(out), "--seed", "3", "--scenarios", "4", *extra])


def test_parser_lists_every_command():
    text = build_parser().format_help()
    for cmd in ["gen-data", "zone", "validate-zones", "calibrate", "simulate", "tune", "bench-staff",
                "bench-zoning", "bench-predictors", "bench-mip", "bench-scale", "export-lp"]:
        assert cmd in text


def test_flags_override_config(config):
    cfg = load_config(config, {"seed": 9, "out": None})
    assert cfg["run"]["seed"] == 9 and cfg["run"]["out"] == "out"
    assert cfg["synthetic"]["n_zones"] == 12


@pytest.mark.parametrize("cmd", ["simulate", "tune", "bench-staff"])
def test_rerun_is_byte_identical(tmp_path, config, cmd):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(cmd, config, a) == EXIT_OK
    assert run(cmd, config, b) == EXIT_OK
    results = sorted(p.name for p in a.glob("*.csv") if not p.name.endswith("_timing.csv"))
    assert results
    match, mismatch, errors = filecmp.cmpfiles(a, b, results, shallow=False)
    assert mismatch == [] and errors == []


def test_simulate_from_generated_files_matches_in_memory(tmp_path, config):
    data = tmp_path / "data"
    assert run("gen-data", config, data) == EXIT_OK
    assert run("simulate", config, tmp_path / "mem") == EXIT_OK
    cfg2 = tmp_path / "files.toml"
    cfg2.write_text(SMALL.replace("[tune]", f'[data]\ndir = "{data}"\n[tune]'))
    assert run("simulate", str(cfg2), tmp_path / "files") == EXIT_OK
    assert filecmp.cmp(tmp_path / "mem" / "metrics.csv", tmp_path / "files" / "metrics.csv", shallow=False)


def test_threads_do_not_change_results(tmp_path, config):
    assert run("simulate", config, tmp_path / "one") == EXIT_OK
    assert run("simulate", config, tmp_path / "two", "--threads", "2") == EXIT_OK
    assert filecmp.cmp(tmp_path / "one" / "metrics.csv", tmp_path / "two" / "metrics.csv", shallow=False)


def test_metrics_csv_layout(tmp_path, config):
    assert run("simulate", config, tmp_path, "--logs", "1") == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "metrics.csv")))
    assert len(rows) == 4 and rows[0]["policy"] == "RB"
    assert (tmp_path / "decisions_0.csv").exists()
    assert (tmp_path / "simulate_timing.csv").exists()


def test_unknown_section_is_a_config_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[nonsense]\nx = 1\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unknown_key_and_bad_toml_are_config_errors(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[policy]\nwtt = 1\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG
    p.write_text("[policy\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG


def test_missing_data_is_a_data_error(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(f'[data]\ndir = "{tmp_path / "nowhere"}"\n')
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_travel_gaps_are_a_data_error(tmp_path, config):
    data = tmp_path / "data"
    assert run("gen-data", config, data) == EXIT_OK
    lines = (data / "travel.csv").read_text().splitlines()
    (data / "travel.csv").write_text("\n".join(lines[:-5]) + "\n")
    p = tmp_path / "c.toml"
    p.write_text(SMALL.replace("[tune]", f'[data]\ndir = "{data}"\n[tune]'))
    assert run("simulate", str(p), tmp_path / "o") == EXIT_DATA


def test_solver_budget_exit_code(tmp_path, config):
    p = tmp_path / "mip.toml"
    p.write_text(SMALL + '[policy]\nkind = "mip"\nsolver = "exact"\n')
    # a zero budget stops every non-trivial program at its first incumbent
    code = main(["simulate", "--config", str(p), "--out", str(tmp_path), "--scenarios", "1",
                 "--time-budget-ms", "0"])
    assert code == EXIT_BUDGET
    assert (tmp_path / "metrics.csv").exists()

"""Command-line behaviour: outputs, seed precedence, exit codes."""

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from dualsim.cli import SEED_ENV, main
from dualsim.output import parse_trajectory_csv


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(SEED_ENV, raising=False)
    return tmp_path


def run_cli(*argv, capsys=None):
    code = main(list(argv))
    if capsys is None:
        return code, "", ""
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_list_scenarios(capsys):
    code, out, _ = run_cli("list-scenarios", capsys=capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 7
    assert lines[0].startswith("case0")
    assert any(line.startswith("case3") for line in lines)


def test_run_ode_dormant_plateau(tmp_path, capsys):
    code, out, _ = run_cli("run-ode", "--scenario", "case1-s2", capsys=capsys)
    assert code == 0
    times, values, species = parse_trajectory_csv(
        (tmp_path / "case1-s2-ode.csv").read_text()
    )
    assert species == ("Tumour", "Effector")
    assert times[-1] == 100.0
    assert 216.0 <= values[-1, 0] <= 264.0
    assert "final state" in out


def test_run_abm_writes_mean(tmp_path, capsys):
    code, out, _ = run_cli(
        "run-abm", "--scenario", "case1-s2", "--n-reps", "3",
        "--horizon", "10", "--seed", "5", capsys=capsys,
    )
    assert code == 0
    assert "seed=5" in out
    times, values, _ = parse_trajectory_csv(
        (tmp_path / "case1-s2-abm-mean.csv").read_text()
    )
    assert times.size == 11
    assert np.all(values >= 0)


def test_compare_stock_cytokine_model(tmp_path, capsys):
    # The documented smoke test: both paradigms agree on the
    # tumour/effector/IL-2 model with the first seed.
    code, out, _ = run_cli(
        "compare", "--scenario", "case2", "--seed", "1", capsys=capsys
    )
    assert code == 0
    assert out.strip().splitlines()[-1] == "fail to reject (3/3 species)"
    for suffix in ("ode", "abm-mean", "report"):
        assert (tmp_path / f"case2-{suffix}.csv").exists()
    report = (tmp_path / "case2-report.csv").read_text()
    assert report.splitlines()[0] == "species,u,p_value,decision"
    assert report.count("fail-to-reject") == 3


def test_compare_plot_writes_svgs(tmp_path, capsys):
    code, _, _ = run_cli(
        "compare", "--scenario", "case1-s2", "--n-reps", "4",
        "--horizon", "10", "--seed", "2", "--plot", capsys=capsys,
    )
    assert code == 0
    for name in ("Tumour", "Effector"):
        path = tmp_path / f"case1-s2-{name}.svg"
        assert path.exists()
        ET.fromstring(path.read_text())


def test_census_counts_extinctions(tmp_path, capsys):
    code, out, _ = run_cli(
        "census", "--scenario", "case1-s1", "--n-reps", "6",
        "--horizon", "20", "--seed", "3", capsys=capsys,
    )
    assert code == 0
    text = (tmp_path / "case1-s1-census.csv").read_text()
    lines = text.strip().splitlines()
    assert lines[0] == "predicate,count,n_reps,frequency"
    assert len(lines) == 3  # one predicate per species
    for line in lines[1:]:
        _, count, n, freq = line.split(",")
        assert 0 <= int(count) <= int(n) == 6
        assert 0.0 <= float(freq) <= 1.0
    assert "Tumour_extinct_by_20" in out


def test_census_day_beyond_horizon(capsys):
    code, _, err = run_cli(
        "census", "--scenario", "case1-s1", "--horizon", "10",
        "--extinct-by", "50", capsys=capsys,
    )
    assert code == 1
    assert "extinct-by" in err


def test_seed_precedence(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "plan.json"
    cfg.write_text(json.dumps({
        "scenario": "case1-s2", "seed": 7, "n_reps": 2, "horizon": 5,
    }))
    # Flag beats config.
    code, out, _ = run_cli(
        "run-abm", "--config", str(cfg), "--seed", "12", capsys=capsys
    )
    assert code == 0 and "seed=12" in out
    # Config beats environment.
    monkeypatch.setenv(SEED_ENV, "99")
    code, out, _ = run_cli("run-abm", "--config", str(cfg), capsys=capsys)
    assert code == 0 and "seed=7" in out
    # Environment beats the default 0.
    noseed = tmp_path / "noseed.json"
    noseed.write_text(json.dumps({"scenario": "case1-s2", "n_reps": 2, "horizon": 5}))
    code, out, _ = run_cli("run-abm", "--config", str(noseed), capsys=capsys)
    assert code == 0 and "seed=99" in out
    monkeypatch.delenv(SEED_ENV)
    code, out, _ = run_cli("run-abm", "--config", str(noseed), capsys=capsys)
    assert code == 0 and "seed=0" in out


def test_bad_seed_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "lucky")
    code, _, err = run_cli(
        "run-abm", "--scenario", "case1-s2", "--n-reps", "2",
        "--horizon", "5", capsys=capsys,
    )
    assert code == 1
    assert SEED_ENV in err


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "plan.json"
    cfg.write_text(json.dumps({"scenario": "case1-s2", "horizon": 50}))
    code, _, _ = run_cli(
        "run-ode", "--config", str(cfg), "--horizon", "10", capsys=capsys
    )
    assert code == 0
    times, _, _ = parse_trajectory_csv((tmp_path / "case1-s2-ode.csv").read_text())
    assert times[-1] == 10.0


def test_usage_errors_exit_one(capsys):
    cases = [
        ("run-ode",),                                        # no source given
        ("run-ode", "--scenario", "case1-s1", "--config", "x.json"),
        ("run-ode", "--scenario", "case42"),
        ("run-ode", "--config", "missing.json"),
        ("run-abm", "--scenario", "case1-s1", "--n-reps", "0"),
        ("run-ode", "--scenario", "case1-s1", "--horizon", "-5"),
        ("compare", "--scenario", "case1-s1", "--alpha", "2.0"),
        ("frobnicate",),
    ]
    for argv in cases:
        code, _, err = run_cli(*argv, capsys=capsys)
        assert code == 1, argv
        assert err


def test_invalid_config_json_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run_cli("run-ode", "--config", str(bad), capsys=capsys)
    assert code == 1
    assert "config error" in err


def test_runtime_failure_exits_two(tmp_path, capsys):
    # Y's rate divides by the X count; once the lone X dies the rate is
    # undefined and the run must fail as a runtime (not usage) error.
    cfg = tmp_path / "selfdestruct.json"
    cfg.write_text(json.dumps({
        "model": {
            "species": ["X", "Y"],
            "params": {"kx": 1000.0},
            "channels": [
                {"source": "X", "rate": "kx", "effect": "remove-self"},
                {"source": "Y", "rate": "1/X", "effect": "remove-self"},
            ],
        },
        "init": {"X": 1, "Y": 5},
        "horizon": 2,
        "n_reps": 1,
        "engine": {"backend": "per-agent"},
    }))
    code, _, err = run_cli("run-abm", "--config", str(cfg), "--seed", "1", capsys=capsys)
    assert code == 2
    assert "run failed" in err


def test_output_path_collision_exits_two(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("file, not a directory")
    code, _, err = run_cli(
        "run-ode", "--scenario", "case1-s2", "--out", str(blocker / "sub"),
        capsys=capsys,
    )
    assert code == 2
    assert "i/o failure" in err

"""
End-to-end runs of the ionwork command line
"""

import json

import pytest

from src.cli.main import EXIT_CONFIG_ERROR, EXIT_OK, main


@pytest.fixture
def tls_config(tmp_path):
    path = tmp_path / "tls.json"
    path.write_text(
        json.dumps(
            {
                "experiment": "driven-tls",
                "tls": {"protocols": [{"tau_us": 10.0}, {"tau_us": 5.0, "gamma_khz": 448.0}]},
                "sampling": {"shots": 300, "seed": 11},
            }
        )
    )
    return path


def _manifest_without_output(path):
    manifest = json.loads(path.read_text())
    manifest["config"].pop("output")
    return manifest


def test_repeated_runs_are_identical(tls_config, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["run", "--config", str(tls_config), "--out", str(first)]) == EXIT_OK
    assert main(["run", "--config", str(tls_config), "--out", str(second)]) == EXIT_OK

    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    assert "records_tau5us_gamma448khz.csv" in names
    for name in names:
        if name == "manifest.json":
            assert _manifest_without_output(first / name) == _manifest_without_output(second / name)
        else:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_exact_only_run_consumes_no_randomness(tls_config, tmp_path):
    out = tmp_path / "exact"
    assert main(["run", "--config", str(tls_config), "--shots", "0", "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["rng_consumed"] is False
    assert not list(out.glob("records_*.csv"))
    report = json.loads((out / "report.json").read_text())
    assert report["protocols"]["tau10us_gamma0khz"]["checks"]["jarzynski_exact"]["passed"]


def test_unknown_key_is_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "experiment": "driven-tls",\n  "colour": "blue"\n}\n')
    assert main(["check", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG_ERROR


def test_sweep_writes_one_directory_per_point(tls_config, tmp_path):
    out = tmp_path / "grid"
    argv = ["sweep", "--config", str(tls_config), "--shots", "0", "--out", str(out), "--grid", "tau_us=5,10"]
    assert main(argv) == EXIT_OK
    assert sorted(p.name for p in (out / "sweep").iterdir()) == ["tau_us=10", "tau_us=5"]
    assert (out / "sweep" / "tau_us=5" / "report.json").exists()
    assert main(["sweep", "--config", str(tls_config), "--out", str(out)]) == EXIT_CONFIG_ERROR
    assert main(["sweep", "--config", str(tls_config), "--grid", "nbar=1"]) == EXIT_CONFIG_ERROR

"""
Tests for settings, unit conversions and scenario file parsing
"""

import math
from pathlib import Path

import pytest

from src.core.config import Settings, get_settings
from src.core.exceptions import ConfigError
from src.models.scenario import Experiment, ScenarioConfig
from src.services.scenario_service import dump_scenario, load_scenario, parse_scenario
from src.utils.units import (
    beta_quanta,
    khz_to_angular,
    khz_to_rate,
    nbar_to_temperature,
    quanta_to_joules,
    temperature_to_nbar,
    us_to_seconds,
)


def test_settings_defaults():
    settings = get_settings()
    assert settings.app_name == "ionwork"
    assert settings.fock_cutoff == 32
    assert settings.crooks_min_counts == 5
    assert settings.bootstrap_resamples >= 100


def test_settings_read_environment(monkeypatch):
    monkeypatch.setenv("IONWORK_FOCK_CUTOFF", "12")
    monkeypatch.setenv("IONWORK_SHOT_BLOCK_SIZE", "128")
    settings = Settings()
    assert settings.fock_cutoff == 12
    assert settings.shot_block_size == 128


def test_unit_conversions():
    assert khz_to_angular(50.0) == pytest.approx(2 * math.pi * 5e4)
    assert khz_to_rate(448.0) == pytest.approx(4.48e5)
    assert us_to_seconds(5.0) == pytest.approx(5e-6)
    nu = khz_to_angular(20.0)
    temperature = nbar_to_temperature(0.157, nu)
    # nbar 0.157 on a 20 kHz trap is about 480 nK
    assert temperature == pytest.approx(480e-9, rel=0.01)
    assert temperature_to_nbar(temperature, nu) == pytest.approx(0.157)
    assert beta_quanta(temperature, nu) == pytest.approx(math.log(1 + 1 / 0.157))
    assert float(quanta_to_joules(1.0, nu)) == pytest.approx(1.054571817e-34 * nu)
    with pytest.raises(ValueError):
        beta_quanta(0.0, nu)
    with pytest.raises(ValueError):
        nbar_to_temperature(0.0, nu)


def test_parse_fills_experiment_defaults():
    config = parse_scenario('{"experiment": "driven-tls"}')
    assert config.experiment == Experiment.DRIVEN_TLS
    assert config.oscillator is None
    assert [p.tau_us for p in config.tls.protocols] == [50.0, 10.0, 5.0, 5.0, 5.0]
    assert [p.gamma_khz for p in config.tls.protocols] == [0.0, 0.0, 0.0, 448.0, 1340.0]
    oscillator = ScenarioConfig.default(Experiment.DRAGGED_OSCILLATOR)
    assert oscillator.oscillator.tau_us == [5.0, 25.0, 45.0]
    assert oscillator.oscillator.nbar == pytest.approx(0.157)


def test_unknown_key_reports_field_and_line():
    text = '{\n  "experiment": "driven-tls",\n  "bogus": 1\n}\n'
    with pytest.raises(ConfigError) as excinfo:
        parse_scenario(text)
    assert excinfo.value.field == "bogus"
    assert excinfo.value.line == 3


def test_nested_error_reports_dotted_field():
    text = '{\n  "experiment": "dragged-oscillator",\n  "sampling": {\n    "shots": -5\n  }\n}\n'
    with pytest.raises(ConfigError) as excinfo:
        parse_scenario(text)
    assert excinfo.value.field == "sampling.shots"
    assert excinfo.value.line == 4


def test_invalid_json_reports_line():
    with pytest.raises(ConfigError) as excinfo:
        parse_scenario('{\n  "experiment": \n}')
    assert excinfo.value.line == 3


def test_wrong_section_for_experiment():
    with pytest.raises(ConfigError):
        parse_scenario('{"experiment": "driven-tls", "oscillator": {}}')


def test_scenario_round_trip(tmp_path):
    config = ScenarioConfig.default(Experiment.DRAGGED_OSCILLATOR)
    path = tmp_path / "scenario.json"
    path.write_text(dump_scenario(config))
    assert load_scenario(str(path)) == config
    with pytest.raises(ConfigError):
        load_scenario(str(tmp_path / "missing.json"))


def test_shipped_scenarios_parse():
    config_dir = Path(__file__).resolve().parents[2] / "config"
    for name, experiment in (
        ("dragged_oscillator.json", Experiment.DRAGGED_OSCILLATOR),
        ("driven_tls.json", Experiment.DRIVEN_TLS),
    ):
        config = load_scenario(str(config_dir / name))
        assert config.experiment == experiment
        assert config.sampling.shots == 100_000

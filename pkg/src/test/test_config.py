from pathlib import Path

import pytest

from foliate.config import (
    Settings,
    load_config,
    load_settings,
    locate_key,
    parse_config,
    resolve_output_dir,
)
from foliate.exceptions import ConfigurationError


#####
# Run configuration (TOML) - Unit Tests
#####
def test_minimal_config_takes_defaults():
    config = parse_config('scenario = "carriere"\n')

    assert config.resolution == 128
    assert config.seed == 1
    assert config.tolerances.analytic == 1e-8
    assert config.flow.t_end == 0.4
    assert config.functional.sigma == [1.0, 0.1, 0.01]
    assert config.output.report == "report.json"
    assert config.command is None


def test_carriere_rho_and_log_rho():
    #####
    # Scenario: the default hyperbolic matrix [[2,1],[1,1]]
    # Expected: rho is the golden ratio squared, ln rho = 0.9624236501
    #####
    params = parse_config('scenario = "carriere"\n').scenario_params

    assert params.rho == pytest.approx(2.6180339887, abs=1e-9)
    assert params.log_rho == pytest.approx(0.9624236501, abs=1e-9)


def test_low_resolution_is_rejected_with_line_number():
    text = 'scenario = "flat_torus"\nresolution = 4\n'

    with pytest.raises(ConfigurationError) as exc_info:
        parse_config(text, "bad.toml")

    message = str(exc_info.value)
    assert "resolution" in message
    assert "line 2" in message
    assert "bad.toml" in message


def test_nested_field_error_names_the_table_key():
    text = 'scenario = "flat_torus"\n\n[flow]\nt_end = 0.4\nh = -1.0\n'

    with pytest.raises(ConfigurationError) as exc_info:
        parse_config(text)

    assert "flow.h" in str(exc_info.value)
    assert "line 5" in str(exc_info.value)


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigurationError):
        parse_config('scenario = "flat_torus"\nresolutoin = 16\n')


def test_invalid_toml_is_a_configuration_error():
    with pytest.raises(ConfigurationError) as exc_info:
        parse_config("scenario = \n")

    assert "not valid TOML" in str(exc_info.value)


def test_unknown_scenario_is_rejected():
    with pytest.raises(ConfigurationError):
        parse_config('scenario = "klein_bottle"\n')


@pytest.mark.parametrize(
    "a_matrix",
    ["[[1, 0], [0, 1]]", "[[2, 1], [1, 2]]", "[[1, 1], [0, 1]]", "[[2, 1, 0], [1, 1, 0]]"],
)
def test_carriere_matrix_must_be_hyperbolic(a_matrix):
    #####
    # Scenario: identity, det != 1, parabolic, wrong shape
    # Expected: every one of them is refused
    #####
    text = f'scenario = "carriere"\n[scenario_params]\na_matrix = {a_matrix}\n'

    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_sigma_must_be_positive():
    text = 'scenario = "flat_torus"\n[functional]\nsigma = [1.0, 0.0]\n'

    with pytest.raises(ConfigurationError) as exc_info:
        parse_config(text)

    assert "functional.sigma" in str(exc_info.value)


def test_mu_monitor_needs_sigma0_above_t_end():
    text = 'scenario = "flat_torus"\n[flow]\nt_end = 2.0\nmonitor_mu = true\nsigma0 = 1.0\n'

    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_locate_key_finds_nested_keys():
    text = 'scenario = "carriere"\n\n[flow]\nh = 0.1\n\n[functional]\nh = 3\n'

    assert locate_key(text, ("flow", "h")) == 4
    assert locate_key(text, ("scenario",)) == 1
    assert locate_key(text, ("output", "dir")) is None


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError) as exc_info:
        load_config(tmp_path / "absent.toml")

    assert "Cannot read config" in str(exc_info.value)


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('scenario = "product_sphere"\ncommand = "flow"\n', encoding="utf-8")

    config = load_config(path)

    assert config.scenario == "product_sphere"
    assert config.command == "flow"


#####
# Output directory precedence
#####
def test_output_dir_precedence():
    config = parse_config('scenario = "flat_torus"\n[output]\ndir = "from_config"\n')

    assert resolve_output_dir(config, Settings(output_dir=None), "cli") == Path("cli")
    assert resolve_output_dir(config, Settings(output_dir=Path("env")), None) == Path("env")
    assert resolve_output_dir(config, Settings(output_dir=None), None) == Path("from_config")


def test_output_dir_default():
    config = parse_config('scenario = "flat_torus"\n')

    assert resolve_output_dir(config, Settings(output_dir=None), None) == Path("out")


def test_settings_read_prefixed_env(monkeypatch):
    monkeypatch.setenv("FOLIATE_OUTPUT_DIR", "/tmp/foliate-env")
    monkeypatch.setenv("FOLIATE_LOG_LEVEL", "DEBUG")
    load_settings.cache_clear()

    settings = load_settings()

    load_settings.cache_clear()
    assert settings.output_dir == Path("/tmp/foliate-env")
    assert settings.log_level == "DEBUG"

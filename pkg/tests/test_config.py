"""Tests for config module."""

import pytest

from semcom_offload.config import (
    ConfigError,
    ConfigNotFoundError,
    ConfigParseError,
    ConfigRangeError,
    ScenarioConfig,
    UnknownKeyError,
    config_from_dict,
    dbm_to_watts,
    parse_config,
)


def test_parse_config_missing_file():
    """Config file missing raises error with its own exit code."""
    with pytest.raises(ConfigNotFoundError, match="Config file not found") as exc_info:
        parse_config("/nonexistent/scenario.yaml")
    assert exc_info.value.exit_code == 3


def test_parse_config_none_gives_defaults():
    """No file means the built-in scenario."""
    assert parse_config(None) == ScenarioConfig()


def test_parse_config_empty_file_gives_defaults(config_file):
    """Empty file yields the full default scenario."""
    config = parse_config(config_file(""))

    assert config.n_transmitters == 4
    assert config.n_servers == 4
    assert config.server_capacity == 3
    assert config.bandwidth_hz == 2.0e6
    assert config.noise_psd_dbm_hz == -174.0
    assert config.prompt_bits == 400
    assert config.source_bits == 2.0e4
    assert config.device_pool == ("S/16", "M/16")
    assert config.edge_pool == ("B/16", "L/14")
    assert config.quality[("L/14", 400)] == 76.6
    assert config.flops["S/16"] == 9.2e9
    assert config.trials == 200
    assert config.seed == 0
    assert config.restarts == 3


def test_parse_config_invalid_yaml_reports_line(config_file):
    """Invalid YAML raises a parse error naming the line."""
    path = config_file("radio.bandwidth_hz: 2.0e6\nnetwork.servers: [1, 2\n")
    with pytest.raises(ConfigParseError, match="line") as exc_info:
        parse_config(path)
    assert exc_info.value.exit_code == 4
    assert exc_info.value.line is not None


def test_parse_config_rejects_non_mapping(config_file):
    """Top level must be a mapping."""
    with pytest.raises(ConfigParseError, match="mapping"):
        parse_config(config_file("- a\n- b\n"))


def test_parse_config_rejects_nested_mapping(config_file):
    """Nested sections are not accepted; keys must be dotted."""
    with pytest.raises(ConfigParseError, match="dotted"):
        parse_config(config_file("network.transmitters:\n  count: 4\n"))


def test_parse_config_unknown_key(config_file):
    """Unknown key is rejected with its name in the message."""
    with pytest.raises(UnknownKeyError, match="foo.bar") as exc_info:
        parse_config(config_file("foo.bar: 1\n"))
    assert exc_info.value.exit_code == 5


def test_parse_config_negative_bandwidth(config_file):
    """Out-of-range value is a range error."""
    with pytest.raises(ConfigRangeError, match="radio.bandwidth_hz") as exc_info:
        parse_config(config_file("radio.bandwidth_hz: -1\n"))
    assert exc_info.value.exit_code == 6


def test_parse_config_overrides(config_file):
    """Dotted keys override defaults and YAML 1.1 exponent strings are coerced."""
    config = parse_config(
        config_file(
            "network.transmitters: 6\n"
            "radio.bandwidth_hz: 1e6\n"
            "geometry.tx.center: [10, 20]\n"
            "models.device_pool: S/16\n"
            "compute.device_freq_fixed_hz: 9e9\n"
        )
    )

    assert config.n_transmitters == 6
    assert config.bandwidth_hz == 1.0e6
    assert config.tx_disc_center == (10.0, 20.0)
    assert config.device_pool == ("S/16",)
    assert config.device_freq_fixed_hz == 9.0e9


def test_parse_config_dynamic_model_keys(config_file):
    """models.flops.<ARCH> and models.quality.<ARCH>.<bits> extend the model table."""
    config = parse_config(
        config_file(
            "models.flops.T/8: 4.0e9\n"
            "models.quality.T/8.400: 50.5\n"
            "models.device_pool: [T/8]\n"
        )
    )

    assert config.flops["T/8"] == 4.0e9
    assert config.quality[("T/8", 400)] == 50.5
    assert config.device_pool == ("T/8",)


def test_pool_architecture_needs_flops_entry():
    """Every pooled architecture must have a FLOPs entry."""
    with pytest.raises(ConfigRangeError, match="models.edge_pool"):
        config_from_dict({"models.edge_pool": ["X/1"]})


@pytest.mark.parametrize(
    "key,value",
    [
        ("network.transmitters", 0),
        ("network.server_capacity", 0),
        ("task.prompt_bits", 3.5),
        ("task.source_bits", 100),
        ("compute.device_freq_range_hz", [6e9, 3e9]),
        ("compute.energy_budget_j", "lots"),
        ("experiment.trials", 0),
        ("experiment.seed", -1),
        ("solver.phi_tolerance", 0),
        ("geometry.rx.radius", -5),
        ("radio.path_loss_exponent", True),
    ],
)
def test_config_from_dict_rejects_bad_values(key, value):
    """Invalid values raise ConfigRangeError naming the key."""
    with pytest.raises(ConfigRangeError, match=key.split(".")[0]):
        config_from_dict({key: value})


def test_seed_accepts_full_64_bit_range():
    """Seeds up to 2^64 - 1 are kept exactly."""
    seed = 2**64 - 1
    assert config_from_dict({"experiment.seed": seed}).seed == seed


def test_zero_radius_is_allowed():
    """A degenerate disc is a valid geometry."""
    assert config_from_dict({"geometry.servers.radius": 0}).server_disc_radius == 0.0


def test_flat_dict_round_trip():
    """to_flat_dict output rebuilds the identical config."""
    config = ScenarioConfig().with_value("compute.device_freq_fixed_hz", 7e9).with_value("experiment.seed", 99)
    assert config_from_dict(config.to_flat_dict()) == config


def test_with_value_resolves_aliases():
    """Sweep aliases map to their dotted keys."""
    config = ScenarioConfig()

    assert config.with_value("f_max_local", 5e9).device_freq_fixed_hz == 5e9
    assert config.with_value("prompt_bits", 600).prompt_bits == 600


def test_with_value_unknown_key():
    """with_value rejects unknown keys."""
    with pytest.raises(UnknownKeyError):
        ScenarioConfig().with_value("radio.nonsense", 1)


def test_config_errors_share_base_class():
    """All config errors are ConfigError."""
    for error in (ConfigNotFoundError, ConfigParseError, UnknownKeyError, ConfigRangeError):
        assert issubclass(error, ConfigError)


def test_dbm_to_watts():
    """Unit conversion from dBm."""
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(20.0) == pytest.approx(0.1)
    assert ScenarioConfig().server_power_max_w == pytest.approx(1.0)

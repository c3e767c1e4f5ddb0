"""Scenario configuration loading and validation."""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

logger = logging.getLogger(__name__)

# FLOPs per architecture and zero-shot CIDEr per (architecture, prompt length in bits)
DEFAULT_FLOPS: Dict[str, float] = {
    "S/16": 9.2e9,
    "M/16": 16.0e9,
    "B/16": 35.1e9,
    "L/14": 161.8e9,
}
DEFAULT_QUALITY: Dict[Tuple[str, int], float] = {
    ("S/16", 400): 57.1,
    ("M/16", 400): 62.0,
    ("B/16", 400): 69.3,
    ("L/14", 400): 76.6,
    ("S/16", 600): 65.9,
    ("M/16", 600): 71.4,
    ("B/16", 600): 80.5,
    ("L/14", 600): 89.3,
}

FLOPS_PREFIX = "models.flops."
QUALITY_PREFIX = "models.quality."

SWEEP_ALIASES: Dict[str, str] = {
    "f_max_local": "compute.device_freq_fixed_hz",
    "prompt_bits": "task.prompt_bits",
    "trials": "experiment.trials",
}


class ConfigError(Exception):
    """Raised when configuration is invalid."""

    exit_code = 1


class ConfigNotFoundError(ConfigError):
    """Config file does not exist."""

    exit_code = 3


class ConfigParseError(ConfigError):
    """Config file is not a flat YAML mapping."""

    exit_code = 4

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownKeyError(ConfigError):
    """Config file names a key that does not exist."""

    exit_code = 5


class ConfigRangeError(ConfigError):
    """A value is outside its allowed range or has the wrong type."""

    exit_code = 6


def dbm_to_watts(dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full experiment parameterisation. All physical quantities are SI except the dBm levels."""

    n_transmitters: int = 4
    n_servers: int = 4
    server_capacity: int = 3

    bandwidth_hz: float = 2.0e6
    noise_psd_dbm_hz: float = -174.0
    tx_power_max_dbm: float = 20.0
    server_power_max_dbm: float = 30.0
    path_loss_ref_m: float = 10.0
    path_loss_exponent: float = 2.7

    intensity: float = 0.01
    device_freq_range_hz: Tuple[float, float] = (3.0e9, 6.0e9)
    server_freq_range_hz: Tuple[float, float] = (11.0e9, 14.0e9)
    device_freq_fixed_hz: Optional[float] = None
    kappa_eff: float = 1.0e-27
    energy_budget_j: float = 0.9

    source_bits: float = 2.0e4
    prompt_bits: int = 400

    server_disc_center: Tuple[float, float] = (250.0, 250.0)
    server_disc_radius: float = 200.0
    tx_disc_center: Tuple[float, float] = (0.0, 0.0)
    tx_disc_radius: float = 100.0
    rx_disc_center: Tuple[float, float] = (0.0, 400.0)
    rx_disc_radius: float = 100.0

    device_pool: Tuple[str, ...] = ("S/16", "M/16")
    edge_pool: Tuple[str, ...] = ("B/16", "L/14")
    flops: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_FLOPS))
    quality: Dict[Tuple[str, int], float] = field(default_factory=lambda: dict(DEFAULT_QUALITY))

    trials: int = 200
    seed: int = 0
    restarts: int = 3
    max_operations: Optional[int] = None
    enumeration_cap: int = 4096

    phi_tolerance: float = 1e-4
    dual_tolerance: float = 1e-6
    scalar_tolerance: float = 1e-6
    max_iterations: int = 200
    exponent_cap: float = 60.0

    @property
    def tx_power_max_w(self) -> float:
        return dbm_to_watts(self.tx_power_max_dbm)

    @property
    def server_power_max_w(self) -> float:
        return dbm_to_watts(self.server_power_max_dbm)

    def to_flat_dict(self) -> Dict[str, Any]:
        """Echo the configuration as flat dotted keys (JSON-serialisable)."""
        flat: Dict[str, Any] = {}
        for key, (attr, kind) in _KEYS.items():
            value = getattr(self, attr)
            if kind in ("pair", "pool") and value is not None:
                value = list(value)
            flat[key] = value
        for arch in sorted(self.flops):
            flat[f"{FLOPS_PREFIX}{arch}"] = self.flops[arch]
        for arch, prompt_bits in sorted(self.quality):
            flat[f"{QUALITY_PREFIX}{arch}.{prompt_bits}"] = self.quality[(arch, prompt_bits)]
        return flat

    def with_value(self, key: str, value: Any) -> "ScenarioConfig":
        """Return a copy with one dotted key (or sweep alias) replaced, re-validated."""
        key = SWEEP_ALIASES.get(key, key)
        flat = self.to_flat_dict()
        flat[key] = value
        return config_from_dict(flat)


# dotted key -> (attribute, kind)
_KEYS: Dict[str, Tuple[str, str]] = {
    "network.transmitters": ("n_transmitters", "int"),
    "network.servers": ("n_servers", "int"),
    "network.server_capacity": ("server_capacity", "int"),
    "radio.bandwidth_hz": ("bandwidth_hz", "float"),
    "radio.noise_psd_dbm_hz": ("noise_psd_dbm_hz", "float"),
    "radio.tx_power_max_dbm": ("tx_power_max_dbm", "float"),
    "radio.server_power_max_dbm": ("server_power_max_dbm", "float"),
    "radio.path_loss_ref_m": ("path_loss_ref_m", "float"),
    "radio.path_loss_exponent": ("path_loss_exponent", "float"),
    "compute.intensity": ("intensity", "float"),
    "compute.device_freq_range_hz": ("device_freq_range_hz", "pair"),
    "compute.server_freq_range_hz": ("server_freq_range_hz", "pair"),
    "compute.device_freq_fixed_hz": ("device_freq_fixed_hz", "optional_float"),
    "compute.kappa_eff": ("kappa_eff", "float"),
    "compute.energy_budget_j": ("energy_budget_j", "float"),
    "task.source_bits": ("source_bits", "float"),
    "task.prompt_bits": ("prompt_bits", "int"),
    "geometry.servers.center": ("server_disc_center", "pair"),
    "geometry.servers.radius": ("server_disc_radius", "float"),
    "geometry.tx.center": ("tx_disc_center", "pair"),
    "geometry.tx.radius": ("tx_disc_radius", "float"),
    "geometry.rx.center": ("rx_disc_center", "pair"),
    "geometry.rx.radius": ("rx_disc_radius", "float"),
    "models.device_pool": ("device_pool", "pool"),
    "models.edge_pool": ("edge_pool", "pool"),
    "experiment.trials": ("trials", "int"),
    "experiment.seed": ("seed", "int"),
    "matching.restarts": ("restarts", "int"),
    "matching.max_operations": ("max_operations", "optional_int"),
    "matching.enumeration_cap": ("enumeration_cap", "int"),
    "solver.phi_tolerance": ("phi_tolerance", "float"),
    "solver.dual_tolerance": ("dual_tolerance", "float"),
    "solver.scalar_tolerance": ("scalar_tolerance", "float"),
    "solver.max_iterations": ("max_iterations", "int"),
    "solver.exponent_cap": ("exponent_cap", "float"),
}


def _as_float(key: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ConfigRangeError(f"{key}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        result = float(value)
    elif isinstance(value, str):
        # YAML 1.1 reads exponent literals without a dot ("2e6") as strings
        try:
            result = float(value)
        except ValueError:
            raise ConfigRangeError(f"{key}: expected a number, got {value!r}") from None
    else:
        raise ConfigRangeError(f"{key}: expected a number, got {value!r}")
    if not math.isfinite(result):
        raise ConfigRangeError(f"{key}: value must be finite, got {value!r}")
    return result


def _as_int(key: str, value: Any) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    number = _as_float(key, value)
    if not number.is_integer():
        raise ConfigRangeError(f"{key}: expected an integer, got {value!r}")
    return int(number)


def _coerce(key: str, kind: str, value: Any) -> Any:
    if isinstance(value, dict):
        raise ConfigParseError(f"{key}: nested mappings are not allowed, use dotted keys")
    if kind == "int":
        return _as_int(key, value)
    if kind == "float":
        return _as_float(key, value)
    if kind == "optional_float":
        return None if value is None else _as_float(key, value)
    if kind == "optional_int":
        return None if value is None else _as_int(key, value)
    if kind == "pair":
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigRangeError(f"{key}: expected a list of two numbers, got {value!r}")
        return (_as_float(key, value[0]), _as_float(key, value[1]))
    if kind == "pool":
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigRangeError(f"{key}: expected a non-empty list of architectures, got {value!r}")
        if not all(isinstance(item, str) and item for item in value):
            raise ConfigRangeError(f"{key}: architecture names must be non-empty strings")
        return tuple(value)
    raise AssertionError(f"unhandled kind {kind}")


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigRangeError(f"{key}: {message}")


def _validate(config: ScenarioConfig) -> None:
    _require(config.n_transmitters >= 1, "network.transmitters", "must be >= 1")
    _require(config.n_servers >= 1, "network.servers", "must be >= 1")
    _require(config.server_capacity >= 1, "network.server_capacity", "must be >= 1")
    for key, value in (
        ("radio.bandwidth_hz", config.bandwidth_hz),
        ("radio.path_loss_ref_m", config.path_loss_ref_m),
        ("radio.path_loss_exponent", config.path_loss_exponent),
        ("compute.intensity", config.intensity),
        ("compute.kappa_eff", config.kappa_eff),
        ("compute.energy_budget_j", config.energy_budget_j),
        ("task.source_bits", config.source_bits),
        ("solver.phi_tolerance", config.phi_tolerance),
        ("solver.dual_tolerance", config.dual_tolerance),
        ("solver.scalar_tolerance", config.scalar_tolerance),
        ("solver.exponent_cap", config.exponent_cap),
    ):
        _require(value > 0, key, f"must be > 0, got {value}")
    _require(config.prompt_bits > 0, "task.prompt_bits", "must be > 0")
    _require(
        config.source_bits > config.prompt_bits,
        "task.source_bits",
        f"must exceed task.prompt_bits ({config.prompt_bits})",
    )
    for key, (low, high) in (
        ("compute.device_freq_range_hz", config.device_freq_range_hz),
        ("compute.server_freq_range_hz", config.server_freq_range_hz),
    ):
        _require(0 < low <= high, key, f"need 0 < low <= high, got [{low}, {high}]")
    if config.device_freq_fixed_hz is not None:
        _require(config.device_freq_fixed_hz > 0, "compute.device_freq_fixed_hz", "must be > 0")
    for key, radius in (
        ("geometry.servers.radius", config.server_disc_radius),
        ("geometry.tx.radius", config.tx_disc_radius),
        ("geometry.rx.radius", config.rx_disc_radius),
    ):
        _require(radius >= 0, key, f"must be >= 0, got {radius}")
    for key, pool in (("models.device_pool", config.device_pool), ("models.edge_pool", config.edge_pool)):
        for arch in pool:
            _require(arch in config.flops, key, f"architecture {arch!r} has no {FLOPS_PREFIX}{arch} entry")
    for arch, flops in config.flops.items():
        _require(flops > 0, f"{FLOPS_PREFIX}{arch}", "must be > 0")
    for (arch, prompt_bits), quality in config.quality.items():
        _require(quality > 0, f"{QUALITY_PREFIX}{arch}.{prompt_bits}", "must be > 0")
    _require(config.trials >= 1, "experiment.trials", "must be >= 1")
    _require(0 <= config.seed < 2**64, "experiment.seed", "must fit in an unsigned 64-bit integer")
    _require(config.restarts >= 1, "matching.restarts", "must be >= 1")
    if config.max_operations is not None:
        _require(config.max_operations >= 1, "matching.max_operations", "must be >= 1")
    _require(config.enumeration_cap >= 1, "matching.enumeration_cap", "must be >= 1")
    _require(config.max_iterations >= 1, "solver.max_iterations", "must be >= 1")


def config_from_dict(flat: Dict[str, Any]) -> ScenarioConfig:
    """Build a validated ScenarioConfig from flat dotted keys over the defaults.

    Args:
        flat: Mapping of dotted keys to values (e.g. from YAML or summary.json)

    Returns:
        Validated ScenarioConfig.

    Raises:
        UnknownKeyError: If a key is not recognised.
        ConfigRangeError: If a value has the wrong type or is out of range.
    """
    defaults = ScenarioConfig()
    updates: Dict[str, Any] = {}
    flops = dict(defaults.flops)
    quality = dict(defaults.quality)

    for key, value in flat.items():
        if not isinstance(key, str):
            raise UnknownKeyError(f"Unknown config key: {key!r}")
        if key in _KEYS:
            attr, kind = _KEYS[key]
            updates[attr] = _coerce(key, kind, value)
        elif key.startswith(FLOPS_PREFIX) and len(key) > len(FLOPS_PREFIX):
            flops[key[len(FLOPS_PREFIX):]] = _as_float(key, value)
        elif key.startswith(QUALITY_PREFIX) and "." in key[len(QUALITY_PREFIX):]:
            arch, _, prompt_bits = key[len(QUALITY_PREFIX):].rpartition(".")
            if not arch or not prompt_bits.isdigit():
                raise UnknownKeyError(f"Unknown config key: {key} (expected {QUALITY_PREFIX}<ARCH>.<bits>)")
            quality[(arch, int(prompt_bits))] = _as_float(key, value)
        else:
            raise UnknownKeyError(f"Unknown config key: {key}")

    config = replace(defaults, flops=flops, quality=quality, **updates)
    _validate(config)
    return config


def parse_config(config_path: Optional[str] = None) -> ScenarioConfig:
    """Load and validate a scenario from a flat YAML file.

    Args:
        config_path: Path to config file. None means the built-in default scenario.

    Returns:
        Validated ScenarioConfig.

    Raises:
        ConfigError: If config file is missing, invalid, or validation fails.
    """
    if config_path is None:
        return ScenarioConfig()

    config_file = Path(config_path)
    if not config_file.is_file():
        raise ConfigNotFoundError(f"Config file not found: {config_path}")

    try:
        with open(config_file, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigParseError(f"Invalid YAML in {config_path}: {getattr(e, 'problem', e)}", line) from e

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigParseError(f"{config_path} must contain a mapping of dotted keys", 1)

    config = config_from_dict(raw)
    logger.debug(f"Loaded {len(raw)} config entries from {config_path}")
    return config


"""Shared test fixtures."""

import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pytest

from semcom_offload.channel import ChannelGains
from semcom_offload.config import ScenarioConfig, dbm_to_watts
from semcom_offload.inner_solver import SolverSettings
from semcom_offload.system_model import ModelProfile, NetworkRealization, ServerProfile, TransmitterProfile

NOISE_W = dbm_to_watts(-174.0) * 2.0e6
BANDWIDTH_HZ = 2.0e6


def build_realization(
    n_tx: int = 2,
    n_servers: int = 1,
    *,
    gain: float = 1e-4,
    h_direct: Optional[Sequence[float]] = None,
    h_up: Optional[Sequence[Sequence[float]]] = None,
    h_down: Optional[Sequence[Sequence[float]]] = None,
    f_local: float = 5.0e9,
    f_edge: float = 12.0e9,
    device_flops: float = 9.2e9,
    device_quality: float = 57.1,
    edge_flops: float = 161.8e9,
    edge_quality: float = 76.6,
    capacity: int = 3,
    e_max: float = 0.9,
    p_max: float = 0.1,
    p_hat_max: float = 1.0,
    kappa_eff: float = 1e-27,
) -> NetworkRealization:
    """Hand-built realization with identical transmitters and identical servers."""
    direct = np.full(n_tx, gain) if h_direct is None else np.asarray(h_direct, dtype=float)
    up = np.full((n_tx, n_servers), gain) if h_up is None else np.asarray(h_up, dtype=float)
    down = np.full((n_servers, n_tx), gain) if h_down is None else np.asarray(h_down, dtype=float)
    device = ModelProfile(device_flops, 0.01, device_quality, "device")
    edge = ModelProfile(edge_flops, 0.01, edge_quality, "edge")
    transmitters = tuple(
        TransmitterProfile(2.0e4, 400.0, device, p_max, f_local, kappa_eff, e_max) for _ in range(n_tx)
    )
    servers = tuple(
        ServerProfile(edge, (edge_quality,) * n_tx, p_hat_max, f_edge, capacity) for _ in range(n_servers)
    )
    return NetworkRealization(transmitters, servers, ChannelGains(direct, up, down), NOISE_W, BANDWIDTH_HZ)


@pytest.fixture
def make_realization():
    """Factory for hand-built realizations (see build_realization)."""
    return build_realization


@pytest.fixture
def default_settings():
    """Default solver settings."""
    return SolverSettings()


@pytest.fixture
def default_config():
    """Built-in default scenario."""
    return ScenarioConfig()


@pytest.fixture
def small_config():
    """Three transmitters, two servers, a handful of trials."""
    return (
        ScenarioConfig()
        .with_value("network.transmitters", 3)
        .with_value("network.servers", 2)
        .with_value("experiment.trials", 3)
        .with_value("experiment.seed", 11)
    )


@pytest.fixture
def tmp_cache():
    """Create temporary cache directory."""
    with tempfile.TemporaryDirectory() as tmpdir:
        cache_dir = Path(tmpdir) / "cache"
        cache_dir.mkdir()
        yield str(cache_dir)


@pytest.fixture
def tmp_out():
    """Create temporary output directory path (not yet created)."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield str(Path(tmpdir) / "out")


@pytest.fixture
def config_file(tmp_path):
    """Write a flat YAML scenario file and return its path."""

    def _write(text: str) -> str:
        path = tmp_path / "scenario.yaml"
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write

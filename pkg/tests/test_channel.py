"""Tests for channel module."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcom_offload.channel import ChannelGains, noise_power, path_loss, sample_gains, sample_geometry
from semcom_offload.config import ScenarioConfig


def test_path_loss_hand_values():
    """1/(1 + d/d0)^kappa at reference points."""
    assert path_loss(0.0, 10.0, 2.7) == 1.0
    assert path_loss(10.0, 10.0, 2.7) == pytest.approx(2.0**-2.7, rel=1e-12)
    assert path_loss(10.0, 10.0, 2.7) == pytest.approx(0.15386, rel=1e-3)
    assert path_loss(990.0, 10.0, 2.7) == pytest.approx(10.0**-5.4, rel=1e-10)


@settings(derandomize=True, max_examples=200)
@given(
    st.floats(min_value=0.0, max_value=1e4),
    st.floats(min_value=0.0, max_value=1e4),
)
def test_path_loss_non_increasing(d1, d2):
    """Farther never means stronger."""
    near, far = sorted((d1, d2))
    assert path_loss(far, 10.0, 2.7) <= path_loss(near, 10.0, 2.7)


def test_noise_power_hand_values():
    """PSD in dBm/Hz times bandwidth, in watts."""
    assert noise_power(-174.0, 2.0e6) == pytest.approx(7.962e-15, rel=1e-3)
    assert noise_power(-30.0, 1.0) == pytest.approx(1e-6, rel=1e-10)
    assert noise_power(-174.0, 1.0) == pytest.approx(3.981e-21, rel=1e-3)
    assert noise_power(-174.0, 2.0e6) == pytest.approx(10.0 ** (-20.4) * 2.0e6, rel=1e-10)


def test_geometry_shapes_and_discs(default_config):
    """Points have the configured counts and stay inside their discs."""
    for seed in range(5):
        geom = sample_geometry(default_config, np.random.default_rng(seed))

        assert geom.server_positions.shape == (4, 2)
        assert geom.tx_positions.shape == (4, 2)
        assert geom.rx_positions.shape == (4, 2)
        assert np.all(np.linalg.norm(geom.server_positions - (250.0, 250.0), axis=1) <= 200.0 + 1e-9)
        assert np.all(np.linalg.norm(geom.tx_positions - (0.0, 0.0), axis=1) <= 100.0 + 1e-9)
        assert np.all(np.linalg.norm(geom.rx_positions - (0.0, 400.0), axis=1) <= 100.0 + 1e-9)


def test_geometry_zero_radius_disc():
    """Radius 0 puts every server on the center."""
    config = ScenarioConfig().with_value("geometry.servers.radius", 0)
    geom = sample_geometry(config, np.random.default_rng(3))

    assert np.all(geom.server_positions == np.array([250.0, 250.0]))


def test_geometry_is_area_uniform():
    """Half the points of a uniform disc fall within radius R/sqrt(2)."""
    config = ScenarioConfig().with_value("network.servers", 20000)
    geom = sample_geometry(config, np.random.default_rng(0))
    radial = np.linalg.norm(geom.server_positions - (250.0, 250.0), axis=1)

    assert np.mean(radial <= 200.0 / math.sqrt(2.0)) == pytest.approx(0.5, abs=0.02)


def test_sampling_is_deterministic(default_config):
    """Equal seeds give bit-identical geometry and gains."""
    first_rng, second_rng = np.random.default_rng(42), np.random.default_rng(42)
    geom_a = sample_geometry(default_config, first_rng)
    geom_b = sample_geometry(default_config, second_rng)
    gains_a = sample_gains(geom_a, default_config, first_rng)
    gains_b = sample_gains(geom_b, default_config, second_rng)

    assert np.array_equal(geom_a.tx_positions, geom_b.tx_positions)
    assert np.array_equal(gains_a.h_up, gains_b.h_up)
    assert np.array_equal(gains_a.h_down, gains_b.h_down)
    assert np.array_equal(gains_a.h_direct, gains_b.h_direct)


def test_gain_shapes_and_support(default_config):
    """Gains are strictly positive, finite and shaped (N,), (N,K), (K,N)."""
    rng = np.random.default_rng(7)
    geom = sample_geometry(default_config, rng)
    gains = sample_gains(geom, default_config, rng)

    assert gains.h_direct.shape == (4,)
    assert gains.h_up.shape == (4, 4)
    assert gains.h_down.shape == (4, 4)
    for array in (gains.h_direct, gains.h_up, gains.h_down):
        assert np.all(array > 0)
        assert np.all(np.isfinite(array))


def test_gains_are_read_only(default_config):
    """Block fading: a realization's gains cannot be modified in place."""
    rng = np.random.default_rng(1)
    gains = sample_gains(sample_geometry(default_config, rng), default_config, rng)
    with pytest.raises(ValueError):
        gains.h_up[0, 0] = 1.0


def test_fading_has_unit_mean():
    """Mean of gain / path loss over many links is 1 within 2%."""
    config = ScenarioConfig().with_value("network.transmitters", 400).with_value("network.servers", 300)
    rng = np.random.default_rng(2024)
    geom = sample_geometry(config, rng)
    gains = sample_gains(geom, config, rng)

    distance = np.linalg.norm(geom.tx_positions[:, None, :] - geom.server_positions[None, :, :], axis=-1)
    fading = gains.h_up / path_loss(distance, config.path_loss_ref_m, config.path_loss_exponent)

    assert fading.size >= 1e5
    assert 0.98 <= float(np.mean(fading)) <= 1.02


def test_uplink_mean_matches_path_loss():
    """Sample mean of one link over many draws approaches its path loss."""
    config = ScenarioConfig().with_value("network.transmitters", 1).with_value("network.servers", 1)
    geom = sample_geometry(config, np.random.default_rng(5))
    rng = np.random.default_rng(6)
    samples = [float(sample_gains(geom, config, rng).h_up[0, 0]) for _ in range(20000)]

    distance = float(np.linalg.norm(geom.tx_positions[0] - geom.server_positions[0]))
    expected = path_loss(distance, 10.0, 2.7)
    assert float(np.mean(samples)) == pytest.approx(expected, rel=0.03)


def test_channel_gains_checks_shapes_and_signs():
    """Direct (N,), uplink (N, K) and downlink (K, N) must agree; every gain positive and finite."""
    ChannelGains(np.ones(3), np.ones((3, 2)), np.ones((2, 3)))
    ChannelGains(np.ones(3), np.ones((3, 0)), np.ones((0, 3)))

    with pytest.raises(ValueError, match="h_direct must be 1-D"):
        ChannelGains(np.ones((3, 1)), np.ones((3, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError, match="h_up must have shape"):
        ChannelGains(np.ones(3), np.ones((2, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError, match="h_down must have shape"):
        ChannelGains(np.ones(3), np.ones((3, 2)), np.ones((3, 2)))
    with pytest.raises(ValueError, match="h_up gains must be finite and positive"):
        ChannelGains(np.ones(3), np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 1.0]]), np.ones((2, 3)))
    with pytest.raises(ValueError, match="h_direct gains"):
        ChannelGains(np.array([1.0, math.inf, 1.0]), np.ones((3, 2)), np.ones((2, 3)))

"""Random network geometry and Rayleigh block-fading channel gains."""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from semcom_offload.config import ScenarioConfig, dbm_to_watts

logger = logging.getLogger(__name__)

ArrayOrFloat = Union[float, np.ndarray]

# smallest positive double, keeps every faded gain strictly positive
_MIN_GAIN = float(np.nextafter(0.0, 1.0))


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Geometry:
    """Node positions in metres; rows are (x, y)."""

    server_positions: np.ndarray  # (K, 2)
    tx_positions: np.ndarray  # (N, 2)
    rx_positions: np.ndarray  # (N, 2)


@dataclass(frozen=True)
class ChannelGains:
    """Power gains |h|^2 for one fading block."""

    h_direct: np.ndarray  # (N,)   t_n -> r_n
    h_up: np.ndarray  # (N, K) t_n -> A_k
    h_down: np.ndarray  # (K, N) A_k -> r_n

    def __post_init__(self) -> None:
        if self.h_direct.ndim != 1:
            raise ValueError(f"h_direct must be 1-D, got shape {self.h_direct.shape}")
        n = self.h_direct.shape[0]
        if self.h_up.ndim != 2 or self.h_up.shape[0] != n:
            raise ValueError(f"h_up must have shape ({n}, K), got {self.h_up.shape}")
        k = self.h_up.shape[1]
        if self.h_down.shape != (k, n):
            raise ValueError(f"h_down must have shape ({k}, {n}), got {self.h_down.shape}")
        for name in ("h_direct", "h_up", "h_down"):
            gains = getattr(self, name)
            if not bool(np.all(np.isfinite(gains) & (gains > 0.0))):
                raise ValueError(f"{name} gains must be finite and positive")


def _sample_disc(
    rng: np.random.Generator, center: Tuple[float, float], radius: float, count: int
) -> np.ndarray:
    """Area-uniform polar sampling: r = R * sqrt(u)."""
    radial = radius * np.sqrt(rng.random(count))
    angle = 2.0 * np.pi * rng.random(count)
    points = np.empty((count, 2))
    points[:, 0] = center[0] + radial * np.cos(angle)
    points[:, 1] = center[1] + radial * np.sin(angle)
    return points


def sample_geometry(config: ScenarioConfig, rng: np.random.Generator) -> Geometry:
    """Drop servers, transmitters and receivers uniformly inside their discs.

    Draw order is fixed (servers, transmitters, receivers) so equal seeds give
    identical geometry.
    """
    servers = _sample_disc(rng, config.server_disc_center, config.server_disc_radius, config.n_servers)
    transmitters = _sample_disc(rng, config.tx_disc_center, config.tx_disc_radius, config.n_transmitters)
    receivers = _sample_disc(rng, config.rx_disc_center, config.rx_disc_radius, config.n_transmitters)
    return Geometry(_frozen(servers), _frozen(transmitters), _frozen(receivers))


def path_loss(d: ArrayOrFloat, d0: float, kappa: float) -> ArrayOrFloat:
    """Distance-dependent power gain 1 / (1 + d/d0)^kappa."""
    return 1.0 / (1.0 + d / d0) ** kappa


def _distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise distances, shape (len(a), len(b))."""
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def _faded(rng: np.random.Generator, mean_gain: np.ndarray) -> np.ndarray:
    fading = rng.standard_exponential(mean_gain.shape)
    return _frozen(np.maximum(mean_gain * fading, _MIN_GAIN))


def sample_gains(geom: Geometry, config: ScenarioConfig, rng: np.random.Generator) -> ChannelGains:
    """Path loss times unit-mean exponential fading, independent per link.

    Draw order is fixed (direct, uplink, downlink).
    """
    d0, kappa = config.path_loss_ref_m, config.path_loss_exponent

    direct_distance = np.linalg.norm(geom.tx_positions - geom.rx_positions, axis=-1)
    up_distance = _distances(geom.tx_positions, geom.server_positions)
    down_distance = _distances(geom.server_positions, geom.rx_positions)

    h_direct = _faded(rng, np.asarray(path_loss(direct_distance, d0, kappa)))
    h_up = _faded(rng, np.asarray(path_loss(up_distance, d0, kappa)))
    h_down = _faded(rng, np.asarray(path_loss(down_distance, d0, kappa)))
    return ChannelGains(h_direct=h_direct, h_up=h_up, h_down=h_down)


def noise_power(psd_dbm_per_hz: float, bandwidth_hz: float) -> float:
    """AWGN power in watts for a given PSD (dBm/Hz) over a bandwidth (Hz)."""
    return dbm_to_watts(psd_dbm_per_hz) * bandwidth_hz

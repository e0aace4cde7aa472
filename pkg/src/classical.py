"""
Classical dirty-paper baselines.

- Tomlinson–Harashima precoding (scalar modulo with a shared dither)
- modulo-lattice precoding with an α-scaled interference and Voronoi dither
- naive transmission that treats the interference as noise
- closed-form SER of uncoded BPSK/QPSK over an interference-free AWGN channel
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core import (STREAM_DITHER, STREAM_INTERFERENCE, STREAM_MESSAGES, STREAM_NOISE,
                  RngStream, from_db, gaussian, q_function)
from constellation import Constellation, sample_message
from channel import ChannelConfig, sample_interference, sample_noise
from lattice import Lattice, dither_power, mod_lattice, sample_dither, scaled

logger = logging.getLogger(__name__)


def scalar_mod(z, delta: float) -> np.ndarray:
    """Reduce z into [-Δ/2, Δ/2)."""
    if delta <= 0:
        raise ValueError(f"modulo base must be positive, got {delta}")
    z = np.asarray(z, dtype=np.float64)
    return np.mod(z + delta / 2.0, delta) - delta / 2.0


def thp_encode(v_point, s, u, delta: float) -> np.ndarray:
    """X = (v - S - U) mod Δ."""
    return scalar_mod(np.asarray(v_point) - np.asarray(s) - np.asarray(u), delta)


def thp_receive(y, u, delta: float) -> np.ndarray:
    """Ỹ = (Y + U) mod Δ, which equals (v + N) mod Δ."""
    return scalar_mod(np.asarray(y) + np.asarray(u), delta)


@dataclass(frozen=True)
class LatticeDpcConfig:
    """Lattice, interference scaling α and the message points inside its Voronoi region."""

    lattice: Lattice
    alpha: float
    constellation: Constellation

    def __post_init__(self):
        if self.constellation.k != self.lattice.k:
            raise ValueError(f"constellation dimension {self.constellation.k} "
                             f"does not match lattice dimension {self.lattice.k}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        reduced = mod_lattice(self.lattice, self.constellation.points)
        if not np.allclose(reduced, self.constellation.points, rtol=0.0, atol=1e-9):
            raise ValueError(f"constellation '{self.constellation.name}' is not inside "
                             f"the Voronoi region of {self.lattice.name}")


def lattice_dpc_encode(cfg: LatticeDpcConfig, v_index, s, u) -> np.ndarray:
    """X = (v - αS - U) mod Λ for message index (or indices) v_index."""
    v = cfg.constellation.point(v_index)
    s = np.asarray(s, dtype=np.float64).reshape(v.shape)
    u = np.asarray(u, dtype=np.float64).reshape(v.shape)
    return mod_lattice(cfg.lattice, v - cfg.alpha * s - u)


def lattice_dpc_receive(cfg: LatticeDpcConfig, y, u) -> np.ndarray:
    """Ỹ = (αY + U) mod Λ."""
    y = np.asarray(y, dtype=np.float64)
    return mod_lattice(cfg.lattice, cfg.alpha * y + np.asarray(u, dtype=np.float64).reshape(y.shape))


def equivalent_noise(cfg: LatticeDpcConfig, noise_var: float, rng: RngStream,
                     n: int = 1, offset: int = 0) -> np.ndarray:
    """Samples of N' = ((1-α)U' + αN) mod Λ, the noise of the equivalent mod-Λ channel."""
    k = cfg.lattice.k
    fresh_dither = sample_dither(cfg.lattice, rng.substream(STREAM_DITHER), n, offset)
    noise = gaussian(rng.substream(STREAM_NOISE), 0.0, noise_var, n * k, offset * k).reshape(n, k)
    return mod_lattice(cfg.lattice, (1.0 - cfg.alpha) * fresh_dither + cfg.alpha * noise)


def mmse_alpha(tx_power: float, noise_var: float) -> float:
    """α = P_X / (P_X + σ_n²)."""
    if tx_power <= 0 or noise_var <= 0:
        raise ValueError(f"alpha needs positive power and noise (P_X={tx_power}, noise_var={noise_var})")
    return tx_power / (tx_power + noise_var)


def min_distance_detect(cfg: LatticeDpcConfig, y_tilde) -> np.ndarray:
    """
    Wrapped minimum-distance decision on the equivalent channel.

    Args:
        cfg: Lattice DPC configuration
        y_tilde: Receiver statistic(s), shape (k,) or (n, k)

    Returns:
        Message index (0-d array) or indices (n,); ties go to the smallest index
    """
    y = np.asarray(y_tilde, dtype=np.float64)
    single = y.ndim <= 1
    y = y.reshape(-1, cfg.lattice.k)
    distances = np.empty((len(y), cfg.constellation.cardinality))
    for i, point in enumerate(cfg.constellation.points):
        wrapped = mod_lattice(cfg.lattice, y - point)
        distances[:, i] = np.sum(wrapped ** 2, axis=1)
    decisions = np.argmin(distances, axis=1)
    return decisions[0] if single else decisions


def nearest_message(constellation: Constellation, y) -> np.ndarray:
    """Plain (unwrapped) minimum Euclidean distance decision."""
    y = np.asarray(y, dtype=np.float64).reshape(-1, constellation.k)
    distances = np.sum((y[:, None, :] - constellation.points[None, :, :]) ** 2, axis=2)
    return np.argmin(distances, axis=1)


def naive_transmit_detect(constellation: Constellation, cfg: ChannelConfig, power: float,
                          rng: RngStream, n: int = 1, offset: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Send the power-scaled constellation point and ignore S at the encoder.

    Returns:
        (sent indices, detected indices), each of shape (n,)
    """
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    if constellation.k != cfg.k:
        raise ValueError(f"constellation dimension {constellation.k} does not match channel k={cfg.k}")
    scaled_points = constellation.scaled_to_power(power)
    sent = sample_message(constellation, rng.substream(STREAM_MESSAGES), n, offset)
    s = sample_interference(cfg, rng.substream(STREAM_INTERFERENCE), n, offset)
    y = scaled_points.points[sent] + s + sample_noise(cfg, rng.substream(STREAM_NOISE), n, offset)
    return sent, nearest_message(scaled_points, y)


def _constellation_family(constellation: Constellation) -> str:
    points = constellation.points
    if constellation.k == 1 and constellation.cardinality == 2 and points[0, 0] == -points[1, 0]:
        return 'bpsk'
    if constellation.k == 2 and constellation.cardinality == 4:
        magnitudes = np.abs(points)
        if np.allclose(magnitudes, magnitudes[0, 0]) and len(np.unique(np.sign(points), axis=0)) == 4:
            return 'qpsk'
    raise ValueError(f"no closed-form AWGN reference for constellation '{constellation.name}'")


def awgn_noise_var(constellation: Constellation, snr_db: float) -> float:
    """Per-real-dimension noise variance of the AWGN reference at the given SNR.

    The reference follows the symbol-energy-to-N0 convention: SNR = P_X / N0
    with variance N0/2 per real dimension.
    """
    return constellation.average_power / (2.0 * from_db(snr_db))


def awgn_reference_ser(constellation: Constellation, snr_db: float) -> float:
    """
    SER of uncoded BPSK/QPSK on an interference-free AWGN channel.

    BPSK: Q(√(2·snr)); QPSK: 1 - (1 - Q(√snr))².
    """
    snr = from_db(snr_db)
    family = _constellation_family(constellation)
    if family == 'bpsk':
        return float(q_function(math.sqrt(2.0 * snr)))
    per_axis = float(q_function(math.sqrt(snr)))
    return 1.0 - (1.0 - per_axis) ** 2


def thp_delta_for_power(tx_power: float, k: int = 1) -> float:
    """Modulo base whose uniform output has total power P_X over k dimensions."""
    if tx_power <= 0:
        raise ValueError(f"power must be positive, got {tx_power}")
    return math.sqrt(12.0 * tx_power / k)


def lattice_for_power(lat: Lattice, tx_power: float, rng: RngStream = None) -> Lattice:
    """Rescale lat so that its Voronoi-uniform dither (the precoder output) has power P_X."""
    if tx_power <= 0:
        raise ValueError(f"power must be positive, got {tx_power}")
    return scaled(lat, math.sqrt(tx_power / dither_power(lat, rng)))

"""
The dirty-paper channel Y = X + S + N.

Interference S is known to the encoder only; noise N has i.i.d. components of
variance noise_var per real dimension. SNR is total transmit power over that
per-dimension noise variance.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from core import RngStream, gaussian, integers
from constellation import QPSK_SIGNS
from errors import ConfigurationError

logger = logging.getLogger(__name__)

GAUSSIAN = 'gaussian'
STRUCTURED_QPSK = 'qpsk'


@dataclass(frozen=True)
class InterferenceModel:
    """Gaussian(var) or StructuredQpsk(power) interference."""

    kind: str
    level: float

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, STRUCTURED_QPSK):
            raise ConfigurationError(f"unknown interference kind '{self.kind}'")
        if not self.level >= 0:
            raise ConfigurationError(f"interference {self.kind} level must be nonnegative, got {self.level}")

    @classmethod
    def gaussian(cls, var: float) -> 'InterferenceModel':
        return cls(GAUSSIAN, float(var))

    @classmethod
    def structured_qpsk(cls, power: float) -> 'InterferenceModel':
        return cls(STRUCTURED_QPSK, float(power))

    @classmethod
    def parse(cls, text: str) -> 'InterferenceModel':
        """Parse ``gaussian:<var>`` or ``qpsk:<power>``."""
        kind, _, value = text.strip().partition(':')
        try:
            return cls(kind.lower(), float(value))
        except ValueError as e:
            raise ConfigurationError(f"bad interference spec '{text}': {e}") from e

    def describe(self) -> str:
        return f"{self.kind}:{self.level:g}"


@dataclass(frozen=True)
class ChannelConfig:
    k: int
    noise_var: float
    interference: InterferenceModel

    def __post_init__(self):
        if self.k not in (1, 2):
            raise ConfigurationError(f"channel dimension must be 1 or 2, got {self.k}")
        if not self.noise_var >= 0:
            raise ConfigurationError(f"noise variance must be nonnegative, got {self.noise_var}")
        if self.interference.kind == STRUCTURED_QPSK and self.k != 2:
            raise ConfigurationError("structured QPSK interference needs a 2-dimensional channel")

    def with_interference(self, interference: InterferenceModel) -> 'ChannelConfig':
        return ChannelConfig(self.k, self.noise_var, interference)


def sample_interference(cfg: ChannelConfig, rng: RngStream, n: int = 1, offset: int = 0) -> np.ndarray:
    """
    Draw n interference vectors.

    Args:
        cfg: Channel configuration
        rng: Interference stream
        n: Number of vectors
        offset: Sample index of the first vector

    Returns:
        Array of shape (n, k)
    """
    model = cfg.interference
    if model.kind == GAUSSIAN:
        return gaussian(rng, 0.0, model.level, n * cfg.k, offset * cfg.k).reshape(n, cfg.k)
    if cfg.k != 2:
        raise ConfigurationError("structured QPSK interference needs a 2-dimensional channel")
    symbols = integers(rng, 4, n, offset)
    return math.sqrt(model.level / 2.0) * QPSK_SIGNS[symbols]


def sample_noise(cfg: ChannelConfig, rng: RngStream, n: int = 1, offset: int = 0) -> np.ndarray:
    return gaussian(rng, 0.0, cfg.noise_var, n * cfg.k, offset * cfg.k).reshape(n, cfg.k)


def transmit(x, s, cfg: ChannelConfig, rng: RngStream, offset: int = 0) -> np.ndarray:
    """y = x + s + n, with fresh noise drawn from rng at sample index offset."""
    x = np.asarray(x, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if x.shape != s.shape or (x.shape[-1] if x.ndim else 1) != cfg.k:
        raise ValueError(f"shape mismatch: x {x.shape}, s {s.shape}, channel k={cfg.k}")
    n_vectors = int(x.size // cfg.k)
    noise = sample_noise(cfg, rng, n_vectors, offset).reshape(x.shape)
    return x + s + noise


def snr_db(tx_power: float, noise_var: float) -> float:
    """10 log10(P_X / σ_n²) with P_X = E||X||²."""
    if tx_power <= 0 or noise_var <= 0:
        raise ValueError(f"SNR needs positive power and noise (P_X={tx_power}, noise_var={noise_var})")
    return 10.0 * math.log10(tx_power / noise_var)


def dpc_capacity_bits(tx_power: float, noise_var: float) -> float:
    """Dirty-paper capacity ½ log2(1 + P_X/σ_n²), the interference-free AWGN value."""
    if noise_var <= 0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    if tx_power < 0:
        raise ValueError(f"transmit power must be nonnegative, got {tx_power}")
    return 0.5 * math.log2(1.0 + tx_power / noise_var)

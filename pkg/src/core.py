"""
Shared numerical plumbing: counter-based random streams, sampling helpers,
Gaussian tail probabilities, dB conversions and a finite-difference gradient.

Random numbers come from numpy's Philox4x64 bit generator keyed by
(seed, stream_id). Because Philox is counter based, word i of a stream is
addressable directly, so every sampler takes an ``offset`` (in samples) and
returns the same values no matter how a Monte Carlo run is chunked.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_MASK64 = (1 << 64) - 1
_WORDS_PER_BLOCK = 4
_TWO_POW_MINUS_53 = 2.0 ** -53

# Fixed stream ids; a single seed fans out into these subsystems.
STREAM_MESSAGES = 1
STREAM_INTERFERENCE = 2
STREAM_NOISE = 3
STREAM_DITHER = 4
STREAM_INIT = 10
STREAM_TRAIN = 11
STREAM_EVAL = 12
STREAM_CALIBRATION = 13


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Immutable handle on one Philox stream. Sampling is a pure function of
    (seed, stream_id, offset, n)."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ('seed', 'stream_id'):
            value = getattr(self, name)
            if not 0 <= int(value) <= _MASK64:
                raise ValueError(f"{name} must fit in 64 unsigned bits, got {value}")

    def substream(self, index: int) -> 'RngStream':
        """Derive an independent child stream (same seed, new key half)."""
        return RngStream(self.seed, _splitmix64(self.stream_id ^ _splitmix64(int(index) & _MASK64)))

    def raw(self, n: int, offset: int = 0) -> np.ndarray:
        """Return raw 64-bit words ``offset .. offset+n-1`` of this stream."""
        if n < 0 or offset < 0:
            raise ValueError(f"n and offset must be nonnegative (n={n}, offset={offset})")
        if n == 0:
            return np.empty(0, dtype=np.uint64)
        block, skip = divmod(int(offset), _WORDS_PER_BLOCK)
        bit_generator = np.random.Philox(
            key=np.array([self.seed, self.stream_id], dtype=np.uint64),
            counter=block,
        )
        words = bit_generator.random_raw(n + skip)
        return words[skip:]

    def unit(self, n: int, offset: int = 0) -> np.ndarray:
        """Doubles on [0, 1) with 53 random bits."""
        return (self.raw(n, offset) >> np.uint64(11)).astype(np.float64) * _TWO_POW_MINUS_53

    def open_unit(self, n: int, offset: int = 0) -> np.ndarray:
        """Doubles on the open interval (0, 1); safe input for an inverse CDF."""
        return ((self.raw(n, offset) >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_MINUS_53


def gaussian(rng: RngStream, mean: float, var: float, n: int, offset: int = 0) -> np.ndarray:
    """
    Draw n i.i.d. Normal(mean, var) samples by inverse CDF.

    Args:
        rng: Source stream
        mean: Distribution mean
        var: Variance, must be nonnegative (0 gives the constant mean)
        n: Number of samples
        offset: Index of the first sample within the stream

    Returns:
        Array of shape (n,)
    """
    if var < 0:
        raise ValueError(f"variance must be nonnegative, got {var}")
    z = special.ndtri(rng.open_unit(n, offset))
    return mean + np.sqrt(var) * z


def uniform(rng: RngStream, lo: float, hi: float, n: int, offset: int = 0) -> np.ndarray:
    """Draw n i.i.d. samples uniform on [lo, hi)."""
    if lo > hi:
        raise ValueError(f"uniform bounds out of order: lo={lo} > hi={hi}")
    samples = lo + (hi - lo) * rng.unit(n, offset)
    if hi > lo:
        # lo + (hi - lo) * u can round up to hi for u just below 1
        samples = np.minimum(samples, np.nextafter(hi, lo))
    return samples


def integers(rng: RngStream, high: int, n: int, offset: int = 0) -> np.ndarray:
    """Draw n i.i.d. integers uniform on {0, ..., high-1}."""
    if high < 1:
        raise ValueError(f"integer range must be nonempty, got high={high}")
    values = np.floor(rng.unit(n, offset) * high).astype(np.int64)
    return np.minimum(values, high - 1)


def q_function(x: ArrayLike) -> ArrayLike:
    """Gaussian tail probability P(Z > x) for standard normal Z."""
    return 0.5 * special.erfc(np.asarray(x, dtype=np.float64) / np.sqrt(2.0))


def to_db(x: ArrayLike) -> ArrayLike:
    values = np.asarray(x, dtype=np.float64)
    if np.any(values <= 0):
        raise ValueError(f"dB conversion needs a positive ratio, got {x}")
    result = 10.0 * np.log10(values)
    return float(result) if result.ndim == 0 else result


def from_db(d: ArrayLike) -> ArrayLike:
    result = 10.0 ** (np.asarray(d, dtype=np.float64) / 10.0)
    return float(result) if result.ndim == 0 else result


def finite_diff_grad(f: Callable[[np.ndarray], float], x: ArrayLike, h: float = 1e-5) -> np.ndarray:
    """
    Central-difference gradient of a scalar function.

    Args:
        f: Function of a real vector returning a scalar
        x: Point at which to differentiate (scalar or 1-D array)
        h: Step size, must be positive

    Returns:
        Array shaped like x with (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    point = np.array(x, dtype=np.float64)
    flat = point.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        upper = f(point)
        flat[i] = saved - h
        lower = f(point)
        flat[i] = saved
        grad[i] = (upper - lower) / (2.0 * h)
    return grad.reshape(point.shape)

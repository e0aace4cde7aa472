"""
Monte Carlo evaluation of DPC schemes.

Every scheme is wrapped as a system with ``encode`` and ``detect``; the
estimator draws (v, s, n) per sample index from fixed substreams of one
evaluation stream, so SER counts do not depend on chunk size or worker count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from core import (STREAM_CALIBRATION, STREAM_DITHER, STREAM_EVAL, STREAM_INTERFERENCE,
                  STREAM_MESSAGES, STREAM_NOISE, RngStream, from_db, uniform)
from constellation import Constellation, lattice_constellation, sample_message
from channel import GAUSSIAN, ChannelConfig, InterferenceModel, sample_interference, sample_noise, snr_db
from classical import (LatticeDpcConfig, awgn_reference_ser, lattice_dpc_encode, lattice_dpc_receive,
                       lattice_for_power, min_distance_detect, mmse_alpha, nearest_message,
                       thp_delta_for_power, thp_encode, thp_receive)
from lattice import Lattice, cubic_lattice_2d, parse_lattice, sample_dither, scalar_lattice
from neural import Checkpoint, NeuralDpcModel, TrainConfig, decode_probs, encode, hard_decision, train
from errors import ConfigurationError, TrainingDivergedError

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1 << 16
DEFAULT_EVAL_SAMPLES = 1 << 20
# Evaluation seeds sit this far above the training seed.
EVAL_SEED_OFFSET = 1_000_003
# λ number i of a sweep trains with seed + i * SWEEP_SEED_STRIDE.
SWEEP_SEED_STRIDE = 7919

# Lattice baseline used when no preset is named, by dimension.
DEFAULT_LATTICE_PRESETS = {1: 'scalar:1', 2: 'constructionA:2:1'}


def eval_stream(seed: int) -> RngStream:
    return RngStream(seed + EVAL_SEED_OFFSET).substream(STREAM_EVAL)


@dataclass(frozen=True)
class SerEstimate:
    ser: float
    n_samples: int
    errors: int = 0
    ci95_halfwidth: float = 0.0

    @classmethod
    def from_counts(cls, errors: int, n_samples: int) -> 'SerEstimate':
        if n_samples < 1:
            raise ValueError(f"n_samples must be positive, got {n_samples}")
        ser = errors / n_samples
        return cls(ser, n_samples, errors, 1.96 * math.sqrt(ser * (1.0 - ser) / n_samples))

    @classmethod
    def analytic(cls, ser: float) -> 'SerEstimate':
        return cls(float(ser), 0, 0, 0.0)

    @property
    def log10_ser(self) -> float:
        return math.log10(self.ser) if self.ser > 0 else float('-inf')


@dataclass(frozen=True)
class CurvePoint:
    scheme: str
    lam: Optional[float]
    snr_db: float
    ser: SerEstimate
    interference: str
    seed: int
    tx_power: float = float('nan')
    analytic: bool = False


class DpcSystem:
    """An encoder/detector pair; subclasses set ``name`` and ``constellation``."""

    name = 'system'
    constellation: Constellation

    def encode(self, v: np.ndarray, s: np.ndarray, rng: RngStream, offset: int) -> np.ndarray:
        raise NotImplementedError

    def detect(self, y: np.ndarray, rng: RngStream, offset: int) -> np.ndarray:
        raise NotImplementedError


class NeuralSystem(DpcSystem):
    name = 'neural'

    def __init__(self, model: NeuralDpcModel):
        self.model = model
        self.constellation = model.constellation

    def encode(self, v, s, rng, offset):
        return encode(self.model, v, s)

    def detect(self, y, rng, offset):
        return hard_decision(decode_probs(self.model, y))


class ThpSystem(DpcSystem):
    """Scalar modulo-Δ precoding, applied per axis when k = 2."""

    name = 'thp'

    def __init__(self, delta: float, k: int, m: int):
        lat = scalar_lattice(delta) if k == 1 else cubic_lattice_2d(delta)
        self.delta = delta
        self.k = k
        self.constellation = lattice_constellation(lat, m)
        self._detector = LatticeDpcConfig(lat, 1.0, self.constellation)

    def _dither(self, rng: RngStream, n: int, offset: int) -> np.ndarray:
        half = self.delta / 2.0
        return uniform(rng.substream(STREAM_DITHER), -half, half, n * self.k, offset * self.k).reshape(n, self.k)

    def encode(self, v, s, rng, offset):
        return thp_encode(self.constellation.points[v], s, self._dither(rng, len(v), offset), self.delta)

    def detect(self, y, rng, offset):
        y_tilde = thp_receive(y, self._dither(rng, len(y), offset), self.delta)
        return min_distance_detect(self._detector, y_tilde)


class LatticeDpcSystem(DpcSystem):
    name = 'lattice'

    def __init__(self, cfg: LatticeDpcConfig):
        self.cfg = cfg
        self.constellation = cfg.constellation

    def encode(self, v, s, rng, offset):
        u = sample_dither(self.cfg.lattice, rng.substream(STREAM_DITHER), len(v), offset)
        return lattice_dpc_encode(self.cfg, v, s, u)

    def detect(self, y, rng, offset):
        u = sample_dither(self.cfg.lattice, rng.substream(STREAM_DITHER), len(y), offset)
        return min_distance_detect(self.cfg, lattice_dpc_receive(self.cfg, y, u))


class NaiveSystem(DpcSystem):
    """Power-scaled constellation point, interference ignored at both ends."""

    name = 'naive'

    def __init__(self, constellation: Constellation, power: float):
        self.constellation = constellation
        self.scaled = constellation.scaled_to_power(power)

    def encode(self, v, s, rng, offset):
        return self.scaled.points[v]

    def detect(self, y, rng, offset):
        return nearest_message(self.scaled, y)


class AwgnSystem(NaiveSystem):
    """Uncoded transmission; meant for channels without interference."""

    name = 'awgn'


def _run_chunk(system: DpcSystem, cfg: ChannelConfig, rng: RngStream,
               start: int, count: int) -> Tuple[int, float]:
    v = sample_message(system.constellation, rng.substream(STREAM_MESSAGES), count, start)
    s = sample_interference(cfg, rng.substream(STREAM_INTERFERENCE), count, start)
    x = np.asarray(system.encode(v, s, rng, start)).reshape(count, cfg.k)
    y = x + s + sample_noise(cfg, rng.substream(STREAM_NOISE), count, start)
    detected = system.detect(y, rng, start)
    logger.debug(f"{system.name}: samples {start}..{start + count - 1} done")
    return int(np.count_nonzero(detected != v)), float(np.sum(x ** 2))


def simulate(system: DpcSystem, channel_cfg: ChannelConfig, n_samples: int, rng: RngStream,
             workers: int = 1, chunk_size: int = CHUNK_SIZE) -> Tuple[SerEstimate, float]:
    """
    Run the full pipeline on n_samples i.i.d. draws.

    Args:
        system: Encoder/detector under test
        channel_cfg: Interference and noise
        n_samples: Number of (v, s, n) draws
        rng: Evaluation stream; sample i reads word i of each per-purpose substream
        workers: Threads to spread chunks over
        chunk_size: Samples per chunk

    Returns:
        (SER estimate, mean ||x||²)
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    if system.constellation.k != channel_cfg.k:
        raise ConfigurationError(f"{system.name} system has dimension {system.constellation.k}, "
                                 f"channel has k={channel_cfg.k}")
    starts = list(range(0, n_samples, chunk_size))
    counts = [min(chunk_size, n_samples - start) for start in starts]
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _run_chunk(system, channel_cfg, rng, *a), zip(starts, counts)))
    else:
        results = [_run_chunk(system, channel_cfg, rng, start, count) for start, count in zip(starts, counts)]
    errors = sum(r[0] for r in results)
    power = math.fsum(r[1] for r in results) / n_samples
    if errors == 0:
        logger.warning(f"{system.name}: no symbol errors in {n_samples} samples; SER is only bounded")
    return SerEstimate.from_counts(errors, n_samples), power


def estimate_ser(system: DpcSystem, channel_cfg: ChannelConfig, n_samples: int, rng: RngStream,
                 workers: int = 1) -> SerEstimate:
    return simulate(system, channel_cfg, n_samples, rng, workers)[0]


def estimate_power(system: DpcSystem, channel_cfg: ChannelConfig, n_samples: int, rng: RngStream) -> float:
    """Mean ||x||² over i.i.d. (v, s) draws."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    parts = []
    for start in range(0, n_samples, CHUNK_SIZE):
        count = min(CHUNK_SIZE, n_samples - start)
        v = sample_message(system.constellation, rng.substream(STREAM_MESSAGES), count, start)
        s = sample_interference(channel_cfg, rng.substream(STREAM_INTERFERENCE), count, start)
        x = np.asarray(system.encode(v, s, rng, start))
        parts.append(float(np.sum(x ** 2)))
    total = math.fsum(parts)
    return total / n_samples


def _measured_snr(power: float, noise_var: float) -> float:
    if power <= 0 or noise_var <= 0:
        return float('nan')
    return snr_db(power, noise_var)


def training_channel(ckpt: Checkpoint) -> ChannelConfig:
    """The channel a checkpoint was trained on, from its config echo."""
    try:
        interference = InterferenceModel.parse(str(ckpt.train_config['interference']))
        noise_var = float(ckpt.train_config['noise_var'])
    except KeyError as e:
        raise ConfigurationError(f"checkpoint config echo lacks {e}") from e
    return ChannelConfig(ckpt.model.k, noise_var, interference)


def evaluate_model(model: NeuralDpcModel, channel_cfg: ChannelConfig, n_samples: int, seed: int,
                   workers: int = 1) -> CurvePoint:
    if model.k != channel_cfg.k:
        raise ConfigurationError(f"model is {model.k}-dimensional ({model.constellation.name}) "
                                 f"but the channel has k={channel_cfg.k}")
    estimate, power = simulate(NeuralSystem(model), channel_cfg, n_samples, eval_stream(seed), workers)
    return CurvePoint('neural', model.lam, _measured_snr(power, channel_cfg.noise_var), estimate,
                      channel_cfg.interference.describe(), seed, power)


def lambda_sweep(lambdas: Sequence[float], constellation: Constellation, channel_cfg: ChannelConfig,
                 train_cfg: TrainConfig, n_eval: int = DEFAULT_EVAL_SAMPLES, workers: int = 1,
                 on_trained: Optional[Callable[[float, Checkpoint], None]] = None) -> List[CurvePoint]:
    """
    Train and evaluate one model per λ.

    The i-th λ trains with seed train_cfg.seed + i * SWEEP_SEED_STRIDE and is
    evaluated on that seed's evaluation stream. Points come back sorted by
    measured SNR.

    Raises:
        TrainingDivergedError: tagged with the λ whose training diverged
    """
    if not lambdas:
        raise ConfigurationError("lambda list must not be empty")
    points = []
    for i, lam in enumerate(lambdas):
        seed = train_cfg.seed + i * SWEEP_SEED_STRIDE
        logger.info(f"Sweep {i + 1}/{len(lambdas)}: lambda={lam:g}, seed={seed}")
        try:
            ckpt = train(constellation, channel_cfg, lam, replace(train_cfg, seed=seed))
        except TrainingDivergedError as e:
            raise e.with_lambda(lam) from e
        if on_trained is not None:
            on_trained(lam, ckpt)
        point = evaluate_model(ckpt.model, channel_cfg, n_eval, seed, workers)
        logger.info(f"lambda={lam:g}: SNR {point.snr_db:.2f} dB, SER {point.ser.ser:.5f}")
        points.append(point)
    return sorted(points, key=lambda p: p.snr_db)


def mismatch_eval(ckpt: Checkpoint, test_vars: Sequence[float], n_samples: int = DEFAULT_EVAL_SAMPLES,
                  seed: int = 0, workers: int = 1) -> List[CurvePoint]:
    """Evaluate a fixed Gaussian-trained model under other interference variances."""
    trained_on = training_channel(ckpt)
    if trained_on.interference.kind != GAUSSIAN:
        raise ConfigurationError(f"mismatch evaluation needs a Gaussian-trained model, "
                                 f"this one saw {trained_on.interference.describe()}")
    points = []
    for var in test_vars:
        cfg = trained_on.with_interference(InterferenceModel.gaussian(var))
        point = evaluate_model(ckpt.model, cfg, n_samples, seed, workers)
        logger.info(f"test variance {var:g}: SNR {point.snr_db:.2f} dB, SER {point.ser.ser:.5f}")
        points.append(point)
    return points


@dataclass(frozen=True)
class GridTable:
    columns: Tuple[str, ...]
    rows: np.ndarray


def decision_region_grid(model: NeuralDpcModel, bounds, resolution: int) -> GridTable:
    """
    Decoder hard decisions over a regular 2-D grid.

    Args:
        model: Model whose decoder is evaluated
        bounds: (lo, hi) for both axes, or ((lo1, hi1), (lo2, hi2))
        resolution: Grid points per axis (>= 2)

    Returns:
        Table with columns y1, y2, label; y1 varies slowest
    """
    if model.k != 2:
        raise ConfigurationError("decision regions need a 2-dimensional model; use encoder_map_grid for k = 1")
    if resolution < 2:
        raise ValueError(f"resolution must be at least 2, got {resolution}")
    bounds = np.asarray(bounds, dtype=np.float64)
    if bounds.shape == (2,):
        bounds = np.stack([bounds, bounds])
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    y1, y2 = np.meshgrid(*axes, indexing='ij')
    grid = np.column_stack([y1.ravel(), y2.ravel()])
    labels = hard_decision(decode_probs(model, grid))
    return GridTable(('y1', 'y2', 'label'), np.column_stack([grid, labels]))


def encoder_map_grid(model: NeuralDpcModel, s_range, resolution: int) -> GridTable:
    """Encoder output for every message over a regular grid of scalar interference values."""
    if model.k != 1:
        raise ConfigurationError("encoder maps are exported for 1-dimensional models only")
    if resolution < 2:
        raise ValueError(f"resolution must be at least 2, got {resolution}")
    lo, hi = s_range
    s = np.linspace(lo, hi, resolution)
    columns = [s]
    for v in range(model.cardinality):
        columns.append(encode(model, np.full(resolution, v), s[:, None])[:, 0])
    names = ('s',) + tuple(f"x_v{v}" for v in range(model.cardinality))
    return GridTable(names, np.column_stack(columns))


def thp_wrapped_noise_ser(delta: float, m: int, noise_var: float) -> float:
    """
    Exact SER of m evenly spaced messages on the scalar channel (v + N) mod Δ
    under wrapped minimum-distance detection.

    A decision is right when N lands within Δ/2m of a multiple of Δ.
    """
    if delta <= 0 or m < 1:
        raise ValueError(f"need delta > 0 and m >= 1 (delta={delta}, m={m})")
    if noise_var < 0:
        raise ValueError(f"noise variance must be nonnegative, got {noise_var}")
    if m == 1 or noise_var == 0:
        return 0.0
    sigma = math.sqrt(noise_var)
    half = delta / (2.0 * m)
    reach = int(math.ceil(12.0 * sigma / delta)) + 1
    centres = delta * np.arange(-reach, reach + 1)
    correct = np.sum(special.ndtr((centres + half) / sigma) - special.ndtr((centres - half) / sigma))
    return float(min(max(1.0 - correct, 0.0), 1.0))


def build_baseline(scheme: str, constellation: Constellation, channel_cfg: ChannelConfig, tx_power: float,
                   lattice_spec: Optional[str] = None, alpha_rule: str = 'mmse',
                   calibration: Optional[RngStream] = None) -> DpcSystem:
    """Classical system whose transmit power is tx_power."""
    k, m = channel_cfg.k, constellation.cardinality
    if constellation.k != k:
        raise ConfigurationError(f"constellation {constellation.name} has k={constellation.k}, channel k={k}")
    if scheme == 'thp':
        return ThpSystem(thp_delta_for_power(tx_power, k), k, m)
    if scheme == 'naive':
        return NaiveSystem(constellation, tx_power)
    if scheme == 'awgn':
        return AwgnSystem(constellation, tx_power)
    if scheme == 'lattice':
        try:
            preset = parse_lattice(lattice_spec or DEFAULT_LATTICE_PRESETS[k])
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        if preset.k != k:
            raise ConfigurationError(f"lattice {preset.name} has dimension {preset.k}, channel k={k}")
        lat: Lattice = lattice_for_power(preset, tx_power, calibration)
        if alpha_rule == 'mmse':
            alpha = mmse_alpha(tx_power / k, channel_cfg.noise_var)
        elif alpha_rule == 'one':
            alpha = 1.0
        else:
            raise ConfigurationError(f"unknown alpha rule '{alpha_rule}' (expected mmse or one)")
        return LatticeDpcSystem(LatticeDpcConfig(lat, alpha, lattice_constellation(lat, m)))
    raise ConfigurationError(f"unknown baseline scheme '{scheme}' (expected thp, lattice, naive or awgn)")


def baseline_curve(scheme: str, constellation: Constellation, channel_cfg: ChannelConfig,
                   snr_list: Sequence[float], n_samples: int = DEFAULT_EVAL_SAMPLES, seed: int = 0,
                   lattice_spec: Optional[str] = None, alpha_rule: str = 'mmse',
                   workers: int = 1) -> List[CurvePoint]:
    """
    Sweep the power knob of a classical scheme.

    Target SNRs set P_X = from_db(snr) * noise_var. The ``awgn`` scheme yields
    closed-form rows; every other scheme is simulated and reports its measured SNR.
    """
    if scheme == 'awgn':
        return [CurvePoint('awgn', None, float(snr), SerEstimate.analytic(awgn_reference_ser(constellation, snr)),
                           'none', seed, float('nan'), analytic=True) for snr in snr_list]
    if channel_cfg.noise_var <= 0:
        raise ConfigurationError("baseline curves need a positive noise variance")
    rng = eval_stream(seed)
    points = []
    for snr in snr_list:
        power = from_db(snr) * channel_cfg.noise_var
        system = build_baseline(scheme, constellation, channel_cfg, power, lattice_spec, alpha_rule,
                                rng.substream(STREAM_CALIBRATION))
        estimate, measured = simulate(system, channel_cfg, n_samples, rng, workers)
        logger.info(f"{scheme} at {snr:g} dB target: measured P_X {measured:.4f}, SER {estimate.ser:.5f}")
        points.append(CurvePoint(scheme, None, _measured_snr(measured, channel_cfg.noise_var), estimate,
                                 channel_cfg.interference.describe(), seed, measured))
    return points

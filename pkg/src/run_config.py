"""
Run configuration: defaults, an optional ``key = value`` file and command-line
flags, merged in that order and validated in one place.
"""

import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from channel import ChannelConfig, InterferenceModel
from constellation import Constellation, from_name
from lattice import parse_lattice
from neural import ACTIVATION_IDS, TrainConfig
from errors import ConfigurationError

logger = logging.getLogger(__name__)

# Spellings accepted in files and flags that differ from the field name.
KEY_ALIASES = {'lambda': 'lam', 'lambdas': 'lambda_list'}
_ECHO_NAMES = {field_name: key for key, field_name in KEY_ALIASES.items()}

BASELINE_SCHEMES = ('thp', 'lattice', 'naive', 'awgn')
SCHEMES = ('neural',) + BASELINE_SCHEMES
ALPHA_RULES = ('mmse', 'one')


@dataclass(frozen=True)
class RunConfig:
    constellation: str = 'bpsk'
    interference: str = 'gaussian:30'
    noise_var: float = 1.0
    lam: float = 100.0
    lambda_list: Tuple[float, ...] = ()
    activation: str = 'sin'
    leaky_slope: float = 0.01
    omega0: float = 1.0
    hidden: Tuple[int, ...] = (128, 128, 128)
    epochs: int = 500
    steps_per_epoch: int = 200
    batch_size: int = 512
    lr: float = 1e-3
    lr_milestones: Tuple[int, ...] = (300, 400)
    seed: int = 0
    n_eval: int = 1 << 20
    workers: int = 1
    log_every: int = 25
    checkpoint: str = 'checkpoints/model.ndpc'
    output: str = 'curve.csv'
    training_log: str = ''
    append: bool = False
    test_interference: str = ''
    scheme: str = 'neural'
    snr_list: Tuple[float, ...] = ()
    lattice: str = ''
    alpha: str = 'mmse'
    bounds: Tuple[float, ...] = (-15.0, 15.0)
    resolution: int = 256
    maps_dir: str = 'maps'

    def validate(self) -> 'RunConfig':
        """Raise ConfigurationError on the first invalid value."""
        self.make_constellation()
        self.make_channel()
        if self.test_interference:
            self.make_channel(self.test_interference)
        if self.activation not in ACTIVATION_IDS:
            raise ConfigurationError(f"unknown activation '{self.activation}' (expected sin or leaky_relu)")
        if self.lam < 0 or any(lam < 0 for lam in self.lambda_list):
            raise ConfigurationError("lambda values must be nonnegative")
        if self.noise_var <= 0:
            raise ConfigurationError(f"noise_var must be positive, got {self.noise_var}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme '{self.scheme}' (expected one of {', '.join(SCHEMES)})")
        if self.alpha not in ALPHA_RULES:
            raise ConfigurationError(f"unknown alpha rule '{self.alpha}' (expected mmse or one)")
        if self.lattice:
            try:
                parse_lattice(self.lattice)
            except ValueError as e:
                raise ConfigurationError(str(e)) from e
        for name in ('n_eval', 'workers', 'batch_size', 'steps_per_epoch'):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be nonnegative, got {self.epochs}")
        if len(self.bounds) not in (2, 4):
            raise ConfigurationError(f"bounds takes lo,hi or lo1,hi1,lo2,hi2, got {self.bounds}")
        if self.resolution < 2:
            raise ConfigurationError(f"resolution must be at least 2, got {self.resolution}")
        self.make_train_config()
        return self

    def make_constellation(self) -> Constellation:
        try:
            return from_name(self.constellation)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e

    def make_channel(self, interference: Optional[str] = None) -> ChannelConfig:
        return ChannelConfig(self.make_constellation().k, self.noise_var,
                             InterferenceModel.parse(interference or self.interference))

    def make_train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, steps_per_epoch=self.steps_per_epoch, batch_size=self.batch_size,
                           lr=self.lr, activation=self.activation, leaky_slope=self.leaky_slope,
                           omega0=self.omega0, hidden=self.hidden, lr_milestones=self.lr_milestones,
                           seed=self.seed, log_every=self.log_every)

    def grid_bounds(self):
        if len(self.bounds) == 2:
            return tuple(self.bounds)
        return (tuple(self.bounds[:2]), tuple(self.bounds[2:]))

    def echo(self) -> str:
        """Resolved configuration as sorted ``key=value`` pairs."""
        pairs = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                text = ','.join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, bool):
                text = 'true' if value else 'false'
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            pairs.append(f"{_ECHO_NAMES.get(f.name, f.name)}={text}")
        return ' '.join(sorted(pairs))


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def canonical_key(key: str) -> str:
    name = key.strip().replace('-', '_')
    name = KEY_ALIASES.get(name, name)
    if name not in _FIELD_TYPES:
        raise ConfigurationError(f"unknown configuration key '{key}'")
    return name


def _convert(name: str, value: Any) -> Any:
    kind = _FIELD_TYPES[name]
    if not isinstance(value, str):
        return tuple(value) if kind in (Tuple[float, ...], Tuple[int, ...]) else value
    text = value.strip()
    try:
        if kind is bool:
            if text.lower() not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ValueError(f"expected a boolean, got '{text}'")
            return text.lower() in ('true', '1', 'yes')
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind == Tuple[float, ...]:
            return tuple(float(item) for item in text.split(',') if item.strip())
        if kind == Tuple[int, ...]:
            return tuple(int(item) for item in text.split(',') if item.strip())
    except ValueError as e:
        raise ConfigurationError(f"bad value for '{name}': {e}") from e
    return text


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse UTF-8 ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    try:
        lines = path.read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    values = {}
    for number, line in enumerate(lines, start=1):
        text = line.split('#', 1)[0].strip()
        if not text:
            continue
        key, sep, value = text.partition('=')
        if not sep or not key.strip():
            raise ConfigurationError(f"{path}:{number}: expected 'key = value', got '{line.strip()}'")
        try:
            values[canonical_key(key)] = value.strip()
        except ConfigurationError as e:
            raise ConfigurationError(f"{path}:{number}: {e}") from None
    return values


def resolve_config(file_values: Optional[Dict[str, Any]] = None,
                   flag_values: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Merge defaults, file values and flag values (later wins) and validate.

    Args:
        file_values: Parsed config file (keys may use aliases or dashes)
        flag_values: Explicitly given command-line flags (None values ignored)

    Returns:
        Validated RunConfig
    """
    merged: Dict[str, Any] = {}
    for source in (file_values or {}, flag_values or {}):
        for key, value in source.items():
            if value is None:
                continue
            name = canonical_key(key)
            merged[name] = _convert(name, value)
    config = replace(RunConfig(), **merged)
    logger.debug(f"Resolved configuration: {config.echo()}")
    return config.validate()

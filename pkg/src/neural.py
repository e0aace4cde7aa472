"""
Learned dirty-paper coding.

The encoder e_θ(v, s) and decoder p_φ(v | y) are plain multilayer perceptrons
held as numpy arrays. Training minimises

    mean[-log p_φ(v | y) + λ ||e_θ(v, s)||²],   y = e_θ(v, s) + s + n,

with gradients derived by hand (reverse mode through the decoder, the additive
channel and the encoder; s and n are constants of the batch) and applied with
Adam. Everything is deterministic given the seed.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from core import (STREAM_INIT, STREAM_INTERFERENCE, STREAM_MESSAGES, STREAM_NOISE, STREAM_TRAIN,
                  RngStream, uniform)
from constellation import Constellation, sample_message
from channel import ChannelConfig, sample_interference, sample_noise
from errors import ConfigurationError, TrainingDivergedError

logger = logging.getLogger(__name__)

SINUSOIDAL = 'sin'
LEAKY_RELU = 'leaky_relu'
ACTIVATION_IDS = {SINUSOIDAL: 0, LEAKY_RELU: 1}

DEFAULT_HIDDEN = (128, 128, 128)


@dataclass(frozen=True)
class Activation:
    """Hidden-layer nonlinearity: sin(x), or leaky ReLU with the given slope."""

    kind: str = SINUSOIDAL
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in ACTIVATION_IDS:
            raise ConfigurationError(f"unknown activation '{self.kind}'")
        if self.kind == LEAKY_RELU and not 0.0 < self.slope < 1.0:
            raise ConfigurationError(f"leaky ReLU slope must lie in (0, 1), got {self.slope}")

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self.kind == SINUSOIDAL:
            return np.sin(z)
        return np.where(z > 0, z, self.slope * z)

    def derivative(self, z: np.ndarray) -> np.ndarray:
        if self.kind == SINUSOIDAL:
            return np.cos(z)
        return np.where(z > 0, 1.0, self.slope)


@dataclass
class MlpParams:
    """Weights (fan_in, fan_out) and biases per layer; the last layer is linear."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: Activation = field(default_factory=Activation)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not fit")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} expects {w.shape[0]} inputs, previous layer gives "
                                 f"{self.weights[i - 1].shape[1]}")

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> List[np.ndarray]:
        """Parameters in storage order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> 'MlpParams':
        return MlpParams(list(arrays[0::2]), list(arrays[1::2]), self.activation)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_flat(self, vector: np.ndarray) -> 'MlpParams':
        arrays, start = [], 0
        for a in self.arrays():
            arrays.append(np.array(vector[start:start + a.size]).reshape(a.shape))
            start += a.size
        return self.with_arrays(arrays)


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]


def init_mlp(layer_dims: Sequence[int], activation: Activation, rng: RngStream,
             omega0: float = 1.0) -> MlpParams:
    """
    Glorot-uniform weights and zero biases.

    Args:
        layer_dims: [input, hidden..., output]
        activation: Hidden-layer activation
        rng: Stream; layer i draws from rng.substream(i)
        omega0: Extra factor on the first layer of sinusoidal networks

    Returns:
        Freshly initialised parameters
    """
    if len(layer_dims) < 2:
        raise ValueError(f"need at least input and output dimensions, got {list(layer_dims)}")
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = uniform(rng.substream(i), -limit, limit, fan_in * fan_out).reshape(fan_in, fan_out)
        if i == 0 and activation.kind == SINUSOIDAL:
            w = omega0 * w
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation)


def mlp_forward(p: MlpParams, inputs: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    """Affine + activation per hidden layer, affine output. Accepts (d,) or (n, d)."""
    h = np.asarray(inputs, dtype=np.float64)
    single = h.ndim == 1
    h = np.atleast_2d(h)
    if h.shape[1] != p.dims[0]:
        raise ValueError(f"network expects {p.dims[0]} inputs, got {h.shape[1]}")
    cache = ForwardCache([], [])
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        cache.inputs.append(h)
        z = h @ w + b
        if i < last:
            cache.pre_activations.append(z)
            h = p.activation.apply(z)
        else:
            h = z
    return (h[0] if single else h), cache


def mlp_backward(p: MlpParams, cache: ForwardCache, grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """
    Reverse pass for mlp_forward.

    Args:
        p: Parameters used in the forward pass
        cache: Cache returned by mlp_forward
        grad_out: dL/d(output), shape (n, d_out)

    Returns:
        (gradients in MlpParams.arrays() order, dL/d(input))
    """
    g = np.atleast_2d(grad_out)
    last = len(p.weights) - 1
    grads: List[Optional[np.ndarray]] = [None] * (2 * len(p.weights))
    for i in range(last, -1, -1):
        if i < last:
            g = g * p.activation.derivative(cache.pre_activations[i])
        grads[2 * i] = cache.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ p.weights[i].T
    return grads, g


@dataclass
class NeuralDpcModel:
    """Encoder [one_hot(v) ⊕ s] → x in R^k and decoder y → |V| logits."""

    encoder: MlpParams
    decoder: MlpParams
    constellation: Constellation
    lam: float = 0.0

    def __post_init__(self):
        k, m = self.constellation.k, self.constellation.cardinality
        if self.encoder.dims[0] != m + k or self.encoder.dims[-1] != k:
            raise ValueError(f"encoder dims {self.encoder.dims} do not fit |V|={m}, k={k}")
        if self.decoder.dims[0] != k or self.decoder.dims[-1] != m:
            raise ValueError(f"decoder dims {self.decoder.dims} do not fit |V|={m}, k={k}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")

    @property
    def k(self) -> int:
        return self.constellation.k

    @property
    def cardinality(self) -> int:
        return self.constellation.cardinality


def build_model(constellation: Constellation, activation: Activation, rng: RngStream,
                lam: float = 0.0, hidden: Sequence[int] = DEFAULT_HIDDEN,
                omega0: float = 1.0) -> NeuralDpcModel:
    k, m = constellation.k, constellation.cardinality
    encoder = init_mlp([m + k, *hidden, k], activation, rng.substream(0), omega0)
    decoder = init_mlp([k, *hidden, m], activation, rng.substream(1), omega0)
    return NeuralDpcModel(encoder, decoder, constellation, lam)


def encoder_input(model: NeuralDpcModel, v_index, s) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v_index, dtype=np.int64))
    if np.any(v < 0) or np.any(v >= model.cardinality):
        raise ValueError(f"message index out of range 0..{model.cardinality - 1}: {v_index}")
    s = np.asarray(s, dtype=np.float64).reshape(len(v), model.k)
    one_hot = np.eye(model.cardinality)[v]
    return np.concatenate([one_hot, s], axis=1)


def encode(model: NeuralDpcModel, v_index, s) -> np.ndarray:
    """Channel input x = e_θ(v, s); shape (k,) for one message or (n, k) for many."""
    single = np.ndim(v_index) == 0
    x, _ = mlp_forward(model.encoder, encoder_input(model, v_index, s))
    return x[0] if single else x


def decode_logits(model: NeuralDpcModel, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim <= 1
    logits, _ = mlp_forward(model.decoder, y.reshape(-1, model.k))
    return logits[0] if single else logits


def decode_probs(model: NeuralDpcModel, y) -> np.ndarray:
    """Softmax over the decoder logits."""
    return special.softmax(decode_logits(model, y), axis=-1)


def hard_decision(probs) -> np.ndarray:
    """Most likely message; ties go to the smallest index."""
    return np.argmax(np.asarray(probs), axis=-1)


@dataclass
class Batch:
    v: np.ndarray
    s: np.ndarray
    n: np.ndarray

    def __len__(self) -> int:
        return len(self.v)


def sample_batch(constellation: Constellation, channel_cfg: ChannelConfig, rng: RngStream,
                 batch_size: int) -> Batch:
    """Fresh (v, s, n) triples for one training step."""
    return Batch(
        v=sample_message(constellation, rng.substream(STREAM_MESSAGES), batch_size),
        s=sample_interference(channel_cfg, rng.substream(STREAM_INTERFERENCE), batch_size),
        n=sample_noise(channel_cfg, rng.substream(STREAM_NOISE), batch_size),
    )


def loss_and_grads(model: NeuralDpcModel, batch: Batch,
                   lam: Optional[float] = None) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """
    Objective value and its gradients for one batch.

    Args:
        model: Current encoder/decoder
        batch: Messages, interference and pre-sampled noise
        lam: Power-penalty weight (defaults to model.lam)

    Returns:
        (loss, encoder gradients, decoder gradients), gradients in MlpParams.arrays() order
    """
    if len(batch) == 0:
        raise ValueError("batch must not be empty")
    lam = model.lam if lam is None else lam
    size = len(batch)
    x, enc_cache = mlp_forward(model.encoder, encoder_input(model, batch.v, batch.s))
    y = x + batch.s.reshape(x.shape) + batch.n.reshape(x.shape)
    logits, dec_cache = mlp_forward(model.decoder, y)
    log_probs = special.log_softmax(logits, axis=1)
    rows = np.arange(size)
    power = np.sum(x ** 2, axis=1)
    loss = float(np.mean(-log_probs[rows, batch.v] + lam * power))

    grad_logits = np.exp(log_probs)
    grad_logits[rows, batch.v] -= 1.0
    grad_logits /= size
    dec_grads, grad_y = mlp_backward(model.decoder, dec_cache, grad_logits)
    # dy/dx is the identity
    grad_x = grad_y + (2.0 * lam / size) * x
    enc_grads, _ = mlp_backward(model.encoder, enc_cache, grad_x)
    return loss, enc_grads, dec_grads


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: MlpParams, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return AdamState([z.copy() for z in zeros], zeros, 0, lr, beta1, beta2, eps)


def adam_step(params: MlpParams, grads: Sequence[np.ndarray],
              state: AdamState) -> Tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; returns new parameters and state."""
    arrays = params.arrays()
    if len(grads) != len(arrays) or any(g.shape != a.shape for g, a in zip(grads, arrays)):
        raise ValueError("gradient shapes do not match parameter shapes")
    if len(state.m) != len(arrays) or any(m.shape != a.shape for m, a in zip(state.m, arrays)):
        raise ValueError("optimizer state shapes do not match parameter shapes")
    t = state.step + 1
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    new_arrays, new_m, new_v = [], [], []
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        step = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        new_arrays.append(a - step)
        new_m.append(m)
        new_v.append(v)
    return params.with_arrays(new_arrays), replace(state, m=new_m, v=new_v, step=t)


@dataclass(frozen=True)
class TrainConfig:
    """Training recipe; an epoch is steps_per_epoch fresh batches."""

    epochs: int = 500
    steps_per_epoch: int = 200
    batch_size: int = 512
    lr: float = 1e-3
    activation: str = SINUSOIDAL
    leaky_slope: float = 0.01
    omega0: float = 1.0
    hidden: Tuple[int, ...] = DEFAULT_HIDDEN
    lr_milestones: Tuple[int, ...] = (300, 400)
    lr_decay: float = 0.5
    seed: int = 0
    log_every: int = 25

    def __post_init__(self):
        if self.epochs < 0 or self.steps_per_epoch < 1 or self.batch_size < 1:
            raise ConfigurationError(f"bad training sizes: epochs={self.epochs}, "
                                     f"steps_per_epoch={self.steps_per_epoch}, batch_size={self.batch_size}")
        if self.lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")

    def make_activation(self) -> Activation:
        return Activation(self.activation, self.leaky_slope)

    def learning_rate(self, epoch: int) -> float:
        """Rate for a 0-based epoch after the step-decay milestones."""
        passed = sum(1 for milestone in self.lr_milestones if epoch >= milestone)
        return self.lr * self.lr_decay ** passed

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data['hidden'] = list(self.hidden)
        data['lr_milestones'] = list(self.lr_milestones)
        return data


@dataclass
class Checkpoint:
    model: NeuralDpcModel
    train_config: Dict[str, object]
    final_loss: float
    seed: int
    loss_history: List[float] = field(default_factory=list)
    omega0: float = 1.0
    version: int = 1


def train(constellation: Constellation, channel_cfg: ChannelConfig, lam: float,
          train_cfg: TrainConfig) -> Checkpoint:
    """
    Train an encoder/decoder pair end to end.

    Args:
        constellation: Message set (its size and dimension fix the network shapes)
        channel_cfg: Interference and noise used to draw training batches
        lam: Power-penalty weight λ
        train_cfg: Recipe and seed

    Returns:
        Checkpoint holding the final parameters and the per-epoch mean losses

    Raises:
        TrainingDivergedError: if any step produces a non-finite loss
    """
    if constellation.k != channel_cfg.k:
        raise ConfigurationError(f"constellation dimension {constellation.k} does not match channel k={channel_cfg.k}")
    if lam < 0:
        raise ConfigurationError(f"lambda must be nonnegative, got {lam}")
    root = RngStream(train_cfg.seed)
    model = build_model(constellation, train_cfg.make_activation(), root.substream(STREAM_INIT),
                        lam, train_cfg.hidden, train_cfg.omega0)
    enc_state = adam_init(model.encoder, train_cfg.lr)
    dec_state = adam_init(model.decoder, train_cfg.lr)
    batches = root.substream(STREAM_TRAIN)
    logger.info(f"Training {constellation.name} model: lambda={lam:g}, "
                f"interference={channel_cfg.interference.describe()}, noise_var={channel_cfg.noise_var:g}, "
                f"{train_cfg.epochs} epochs x {train_cfg.steps_per_epoch} steps, seed={train_cfg.seed}")

    history: List[float] = []
    loss = float('nan')
    for epoch in range(train_cfg.epochs):
        lr = train_cfg.learning_rate(epoch)
        enc_state = replace(enc_state, lr=lr)
        dec_state = replace(dec_state, lr=lr)
        total = 0.0
        for step in range(train_cfg.steps_per_epoch):
            global_step = epoch * train_cfg.steps_per_epoch + step
            batch = sample_batch(constellation, channel_cfg, batches.substream(global_step), train_cfg.batch_size)
            loss, enc_grads, dec_grads = loss_and_grads(model, batch, lam)
            if not math.isfinite(loss):
                logger.error(f"Non-finite loss at epoch {epoch + 1}, step {step + 1}")
                raise TrainingDivergedError(epoch + 1, step + 1, loss)
            encoder, enc_state = adam_step(model.encoder, enc_grads, enc_state)
            decoder, dec_state = adam_step(model.decoder, dec_grads, dec_state)
            model = replace(model, encoder=encoder, decoder=decoder)
            total += loss
        history.append(total / train_cfg.steps_per_epoch)
        if (epoch + 1) % max(train_cfg.log_every, 1) == 0 or epoch + 1 == train_cfg.epochs:
            logger.info(f"Epoch {epoch + 1}/{train_cfg.epochs} - mean loss {history[-1]:.5f} (lr {lr:g})")

    final_loss = history[-1] if history else float('nan')
    echo = train_cfg.to_dict()
    echo.update(constellation=constellation.name, interference=channel_cfg.interference.describe(),
                noise_var=channel_cfg.noise_var, lam=lam)
    return Checkpoint(model=model, train_config=echo, final_loss=final_loss,
                      seed=train_cfg.seed, loss_history=history, omega0=train_cfg.omega0)

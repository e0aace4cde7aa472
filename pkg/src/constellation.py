"""
Message constellations: BPSK, QPSK and point sets carved out of a lattice's
Voronoi region, plus uniform message sampling.

Index-to-point ordering is fixed so that checkpoints and CSV files stay
comparable between runs.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from core import RngStream, integers
from lattice import Lattice, mod_lattice, nearest_point

logger = logging.getLogger(__name__)

# Gray-ordered quadrant signs for index 0..3
QPSK_SIGNS = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])


@dataclass(frozen=True)
class Constellation:
    """An ordered, immutable set of distinct k-dimensional message points."""

    name: str
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[1] not in (1, 2):
            raise ValueError(f"points must be an (m, k) array with k in {{1, 2}}, got shape {points.shape}")
        if len(np.unique(points, axis=0)) != len(points):
            raise ValueError(f"constellation '{self.name}' has repeated points")
        points.setflags(write=False)
        object.__setattr__(self, 'points', points)

    @property
    def k(self) -> int:
        return self.points.shape[1]

    @property
    def cardinality(self) -> int:
        return self.points.shape[0]

    @property
    def average_power(self) -> float:
        """Mean squared norm over the (equiprobable) points."""
        return float(np.mean(np.sum(self.points ** 2, axis=1)))

    def point(self, index) -> np.ndarray:
        """Point(s) for message index (or an array of indices)."""
        indices = np.asarray(index)
        if np.any(indices < 0) or np.any(indices >= self.cardinality):
            raise ValueError(f"message index out of range 0..{self.cardinality - 1}: {index}")
        return self.points[indices]

    def scaled_to_power(self, power: float) -> 'Constellation':
        """Same shape, rescaled to the given average power."""
        if power <= 0:
            raise ValueError(f"power must be positive, got {power}")
        factor = math.sqrt(power / self.average_power)
        return Constellation(f"{self.name}@{power:g}", self.points * factor)

    def __eq__(self, other) -> bool:
        return isinstance(other, Constellation) and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())


def bpsk() -> Constellation:
    return Constellation('bpsk', np.array([[1.0], [-1.0]]))


def qpsk(scale: float = 1.0) -> Constellation:
    """Four points scale * (±1/√2, ±1/√2); average power scale²."""
    if scale <= 0:
        raise ValueError(f"QPSK scale must be positive, got {scale}")
    return Constellation('qpsk' if scale == 1.0 else f"qpsk:{scale:g}",
                         scale / math.sqrt(2.0) * QPSK_SIGNS)


def sample_message(c: Constellation, rng: RngStream, n: int = 1, offset: int = 0) -> np.ndarray:
    """Uniform message indices; sample i uses stream word offset + i."""
    if c.cardinality < 1:
        raise ValueError("cannot sample from an empty constellation")
    return integers(rng, c.cardinality, n, offset)


def lattice_constellation(lat: Lattice, m: int) -> Constellation:
    """
    Pick m message points inside the Voronoi region of lat.

    The points are m evenly indexed members of the fine grid Λ/q
    (q = ceil(m^(1/k))), taken in the cell-centred coset of the reduced
    basis so that no grid point sits on a Voronoi boundary, reduced mod Λ
    and shifted to zero mean.

    Args:
        lat: Coarse lattice (dimension 1 or 2)
        m: Number of messages

    Returns:
        Constellation whose points all satisfy mod_lattice(p) = p
    """
    if m < 1:
        raise ValueError(f"need at least one message point, got {m}")
    k = lat.k
    q = math.ceil(round(m ** (1.0 / k), 12))
    grid = np.array(np.meshgrid(*[np.arange(q)] * k, indexing='ij')).reshape(k, -1).T
    chosen = grid[[int(j * len(grid) // m) for j in range(m)]]
    coords = (chosen + 0.5) / q - 0.5
    points = mod_lattice(lat, coords @ lat.reduced_basis).reshape(m, k)
    points = points - points.mean(axis=0)
    if len(np.unique(np.round(points, 12), axis=0)) != m:
        raise ValueError(f"lattice {lat.name} cannot host {m} distinct message points")
    outside = np.any(np.abs(nearest_point(lat, points)) > 1e-9, axis=1)
    if np.any(outside):
        raise ValueError(f"{int(outside.sum())} of {m} points fall outside the Voronoi region of {lat.name}")
    # exact fixed points of mod-Λ
    points = mod_lattice(lat, points)
    return Constellation(f"lattice[{lat.name}]x{m}", points)


def from_name(name: str) -> Constellation:
    """Constellation by config name: ``bpsk``, ``qpsk`` or ``qpsk:<scale>``."""
    text = name.strip().lower()
    if text == 'bpsk':
        return bpsk()
    if text == 'qpsk':
        return qpsk()
    if text.startswith('qpsk:'):
        return qpsk(float(text.split(':', 1)[1]))
    raise ValueError(f"unknown constellation '{name}'")

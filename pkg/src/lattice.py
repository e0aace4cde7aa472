"""
Lattices in one and two dimensions.

A lattice is stored by a generator matrix whose rows are basis vectors.
Nearest-point quantization rounds the coordinates in a Lagrange-reduced basis
and searches the integer offsets {-2, ..., 2}^k around that rounding, which is
exact for k <= 2. mod-Λ reduction, Voronoi-uniform dither, Construction A and
power bookkeeping are built on top of the quantizer.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from core import RngStream

logger = logging.getLogger(__name__)

SEARCH_RADIUS = 2
_CHUNK = 1 << 15
_HEX_G = 5.0 / (36.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class Lattice:
    """Full-rank lattice in dimension k in {1, 2}."""

    generator: np.ndarray
    name: str = 'custom'
    inverse: np.ndarray = field(init=False, repr=False, compare=False)
    _reduced: np.ndarray = field(init=False, repr=False, compare=False)
    _reduced_inverse: np.ndarray = field(init=False, repr=False, compare=False)
    _offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        generator = np.array(self.generator, dtype=np.float64)
        if generator.ndim != 2 or generator.shape[0] != generator.shape[1]:
            raise ValueError(f"generator must be square, got shape {generator.shape}")
        if generator.shape[0] not in (1, 2):
            raise ValueError(f"only dimensions 1 and 2 are supported, got {generator.shape[0]}")
        if abs(np.linalg.det(generator)) <= 1e-12:
            raise ValueError("generator matrix is singular")
        generator.setflags(write=False)
        reduced, transform = _lagrange_reduce(generator)
        object.__setattr__(self, 'generator', generator)
        object.__setattr__(self, 'inverse', np.linalg.inv(generator))
        object.__setattr__(self, '_reduced', reduced)
        object.__setattr__(self, '_reduced_inverse', np.linalg.inv(reduced))
        object.__setattr__(self, '_offsets', _ordered_offsets(generator.shape[0], transform))

    @property
    def k(self) -> int:
        return self.generator.shape[0]

    @property
    def reduced_basis(self) -> np.ndarray:
        """Lagrange-reduced basis (rows) spanning the same lattice."""
        return self._reduced

    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.generator)))

    def __eq__(self, other) -> bool:
        return isinstance(other, Lattice) and np.array_equal(self.generator, other.generator)

    def __hash__(self) -> int:
        return hash(self.generator.tobytes())


def _lagrange_reduce(generator: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return (reduced basis, integer T) with reduced = T @ generator."""
    k = generator.shape[0]
    if k == 1:
        return generator.copy(), np.eye(1, dtype=np.int64)
    b1, b2 = generator[0].copy(), generator[1].copy()
    t1, t2 = np.array([1, 0], dtype=np.int64), np.array([0, 1], dtype=np.int64)
    if b1 @ b1 > b2 @ b2:
        b1, b2, t1, t2 = b2, b1, t2, t1
    while True:
        mu = int(np.rint((b1 @ b2) / (b1 @ b1)))
        b2 = b2 - mu * b1
        t2 = t2 - mu * t1
        if b2 @ b2 >= b1 @ b1 * (1.0 - 1e-12):
            break
        b1, b2, t1, t2 = b2, b1, t2, t1
    return np.vstack([b1, b2]), np.vstack([t1, t2])


def _ordered_offsets(k: int, transform: np.ndarray) -> np.ndarray:
    """Search offsets (in reduced coordinates) sorted so that argmin picks the
    lexicographically smallest generator-coefficient vector on ties."""
    span = range(-SEARCH_RADIUS, SEARCH_RADIUS + 1)
    offsets = np.array(list(itertools.product(span, repeat=k)), dtype=np.int64)
    in_generator = offsets @ transform
    order = np.lexsort(in_generator.T[::-1])
    return offsets[order]


def _as_points(lat: Lattice, z) -> Tuple[np.ndarray, bool]:
    points = np.asarray(z, dtype=np.float64)
    single = points.ndim <= 1
    points = points.reshape(-1, lat.k)
    return points, single


def nearest_point(lat: Lattice, z) -> np.ndarray:
    """
    Closest lattice point to each row of z (Euclidean norm).

    Args:
        lat: The lattice
        z: A k-vector or an (n, k) array (a scalar is accepted for k = 1)

    Returns:
        Lattice points with the same shape as z
    """
    points, single = _as_points(lat, z)
    result = np.empty_like(points)
    for start in range(0, len(points), _CHUNK):
        block = points[start:start + _CHUNK]
        base = np.rint(block @ lat._reduced_inverse)
        candidates = (base[:, None, :] + lat._offsets[None, :, :]) @ lat._reduced
        dist = np.sum((block[:, None, :] - candidates) ** 2, axis=2)
        best = np.argmin(dist, axis=1)
        result[start:start + _CHUNK] = candidates[np.arange(len(block)), best]
    if single:
        return result.reshape(np.shape(z))
    return result


def mod_lattice(lat: Lattice, z) -> np.ndarray:
    """z mod Λ = z - Q_Λ(z), folded into the fundamental Voronoi region."""
    points = np.asarray(z, dtype=np.float64)
    return points - nearest_point(lat, points)


def coefficients(lat: Lattice, p) -> np.ndarray:
    """Integer coordinates of lattice points p with respect to the generator rows."""
    points, _ = _as_points(lat, p)
    return np.rint(points @ lat.inverse).astype(np.int64)


def sample_dither(lat: Lattice, rng: RngStream, n: int = 1, offset: int = 0) -> np.ndarray:
    """
    Draw n dithers uniform over the Voronoi region.

    Each sample uses k consecutive stream words starting at offset * k: a point
    uniform on the fundamental parallelepiped is folded by mod-Λ, which is a
    measure-preserving bijection onto the Voronoi region.
    """
    weights = rng.unit(n * lat.k, offset * lat.k).reshape(n, lat.k)
    return mod_lattice(lat, weights @ lat.generator)


def second_moment(lat: Lattice, n_samples: int, rng: RngStream) -> float:
    """Monte Carlo estimate of the per-dimension dither power E||U||^2 / k."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    dither = sample_dither(lat, rng, n_samples)
    return float(np.mean(np.sum(dither ** 2, axis=1)) / lat.k)


def normalized_second_moment(lat: Lattice, n_samples: int, rng: RngStream) -> float:
    """Dimensionless G(Λ) = second moment / V^(2/k)."""
    return second_moment(lat, n_samples, rng) / lat.cell_volume() ** (2.0 / lat.k)


def scalar_lattice(delta: float) -> Lattice:
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return Lattice(np.array([[delta]]), name=f"scalar:{delta:g}")


def cubic_lattice_2d(delta: float) -> Lattice:
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return Lattice(delta * np.eye(2), name=f"cubic2:{delta:g}")


def hexagonal_lattice(volume: float) -> Lattice:
    """Hexagonal lattice with basis c(1, 0), c(1/2, √3/2) and cell volume `volume`."""
    if volume <= 0:
        raise ValueError(f"volume must be positive, got {volume}")
    c = math.sqrt(2.0 * volume / math.sqrt(3.0))
    generator = c * np.array([[1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])
    return Lattice(generator, name=f"hex:{volume:g}")


def construction_a(code_words: Sequence[Sequence[int]], q: int, scale: float = 1.0) -> Lattice:
    """
    Build Λ = scale * (C + qZ^2) from a linear code C over Z_q.

    Args:
        code_words: All codewords of C as length-2 integer vectors
        q: Modulus (>= 2)
        scale: Positive scaling applied to the integer lattice

    Returns:
        The lattice, with a generator in Hermite normal form (times scale)
    """
    if q < 2:
        raise ValueError(f"modulus must be at least 2, got {q}")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    words = {tuple(int(c) % q for c in word) for word in code_words}
    if any(len(word) != 2 for word in words):
        raise ValueError("construction_a supports length-2 codes only")
    if (0, 0) not in words:
        raise ValueError("code must contain the zero word")
    for a, b in itertools.product(words, repeat=2):
        if ((a[0] + b[0]) % q, (a[1] + b[1]) % q) not in words:
            raise ValueError(f"code is not closed under addition mod {q}: {a} + {b}")
    rows = [list(word) for word in sorted(words) if any(word)]
    rows += [[q, 0], [0, q]]
    basis = _integer_row_basis(rows)
    return Lattice(scale * np.array(basis, dtype=np.float64), name=f"constructionA:{q}:{scale:g}")


def _integer_row_basis(rows: List[List[int]]) -> List[List[int]]:
    """Hermite normal form basis of the integer row span (2 columns)."""
    rows = [list(r) for r in rows]
    # Euclid on the first column until one pivot row is left.
    while sum(1 for r in rows if r[0] != 0) > 1:
        nonzero = sorted((r for r in rows if r[0] != 0), key=lambda r: abs(r[0]))
        pivot = nonzero[0]
        for r in nonzero[1:]:
            factor = r[0] // pivot[0]
            r[0] -= factor * pivot[0]
            r[1] -= factor * pivot[1]
    pivot = next(r for r in rows if r[0] != 0)
    if pivot[0] < 0:
        pivot = [-pivot[0], -pivot[1]]
    second = 0
    for r in rows:
        if r[0] == 0:
            second = math.gcd(second, r[1])
    if second == 0:
        raise ValueError("code lattice is not full rank")
    pivot[1] %= second
    return [pivot, [0, second]]


def scaled(lat: Lattice, factor: float) -> Lattice:
    """The lattice factor * Λ."""
    if factor <= 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    return Lattice(factor * lat.generator, name=f"{lat.name}*{factor:.6g}")


def parse_lattice(text: str) -> Lattice:
    """
    Build a preset from its name.

    Accepted forms: ``scalar:<delta>``, ``cubic2:<delta>``, ``hex:<volume>``,
    ``constructionA:<q>:<scale>`` (code spanned by (1, 1) over Z_q).
    """
    parts = text.strip().split(':')
    kind = parts[0]
    try:
        if kind == 'scalar' and len(parts) == 2:
            return scalar_lattice(float(parts[1]))
        if kind == 'cubic2' and len(parts) == 2:
            return cubic_lattice_2d(float(parts[1]))
        if kind == 'hex' and len(parts) == 2:
            return hexagonal_lattice(float(parts[1]))
        if kind == 'constructionA' and len(parts) == 3:
            q = int(parts[1])
            code = [(j, j) for j in range(q)]
            return construction_a(code, q, float(parts[2]))
    except ValueError as e:
        raise ValueError(f"bad lattice preset '{text}': {e}") from e
    raise ValueError(f"unknown lattice preset '{text}'")


def dither_power(lat: Lattice, rng: RngStream = None, n_samples: int = 1 << 18) -> float:
    """
    Total power E||U||² of a Voronoi-uniform dither.

    Closed forms: rectangular cells (any lattice with an orthogonal reduced
    basis, including δZ, δZ² and D2) give sum(|b_i|²)/12, hexagonal presets give
    2·G_hex·V. Anything else is estimated by Monte Carlo with the given stream.
    """
    basis = lat.reduced_basis
    if lat.k == 1 or abs(basis[0] @ basis[1]) <= 1e-12 * (basis[0] @ basis[0]):
        return float(np.sum(basis ** 2) / 12.0)
    if lat.name.split('*')[0].split(':')[0] == 'hex':
        return 2.0 * _HEX_G * lat.cell_volume()
    if rng is None:
        raise ValueError(f"lattice {lat.name} has no closed-form power; pass a calibration stream")
    return lat.k * second_moment(lat, n_samples, rng)

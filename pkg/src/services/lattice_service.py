"""
Hexagonal lattice, dual lattice, high-symmetry points and plane-wave index sets
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from errors import ConfigError

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)

# Clockwise 2*pi/3 rotation; R k1 = k2, R k2 = -k1 - k2
ROTATION = np.array([[-0.5, SQRT3 / 2.0], [-SQRT3 / 2.0, -0.5]])

# Action of R on integer dual-lattice coordinates: (m1, m2) -> (-m2, m1 - m2)
ROTATION_LATTICE = np.array([[0, -1], [1, -1]])

# Half-integer snapping window used by the reduction
REDUCE_SNAP = 1e-12


@dataclass(frozen=True, eq=False)
class HexLattice:
    """Normalized hexagonal lattice and its dual"""
    v1: NDArray
    v2: NDArray
    k1: NDArray
    k2: NDArray
    cell_area: float

    @property
    def real_basis(self) -> NDArray:
        return np.column_stack([self.v1, self.v2])

    @property
    def dual_basis(self) -> NDArray:
        return np.column_stack([self.k1, self.k2])

    def lattice_coordinates(self, k: Sequence[float]) -> NDArray:
        """Return theta with k = theta1 k1 + theta2 k2."""
        return np.linalg.solve(self.dual_basis, np.asarray(k, dtype=float))

    def dual_vector(self, m: Sequence[float]) -> NDArray:
        return self.dual_basis @ np.asarray(m, dtype=float)

    def position(self, s: NDArray) -> NDArray:
        """Physical positions x = s1 v1 + s2 v2 for lattice coordinates s[..., 2]."""
        return np.asarray(s) @ self.real_basis.T


@dataclass(frozen=True, eq=False)
class KPoint:
    """A quasi-momentum reduced to the fundamental dual cell"""
    coords: NDArray
    reduced: Tuple[float, float]
    label: str = ""

    def __repr__(self) -> str:
        name = f"{self.label} " if self.label else ""
        return f"KPoint({name}theta=({self.reduced[0]:.6f}, {self.reduced[1]:.6f}))"


@dataclass(frozen=True, eq=False)
class FourierIndexSet:
    """
    Ordered plane-wave indices m = (m1, m2) for the basis e^{i(k + m1 k1 + m2 k2).x}.

    Ordering is row-major in m1 then m2 for both shapes, so assembled matrices
    and dumps are reproducible.
    """
    truncation: int
    indices: NDArray
    shape: str = "square"
    _lookup: Dict[Tuple[int, int], int] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        lookup = {(int(m1), int(m2)): i for i, (m1, m2) in enumerate(self.indices)}
        object.__setattr__(self, "_lookup", lookup)

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def max_abs(self) -> int:
        return int(np.max(np.abs(self.indices))) if self.size else 0

    def position(self, m: Tuple[int, int]) -> int:
        """Index of m in the ordered set, -1 if absent."""
        return self._lookup.get((int(m[0]), int(m[1])), -1)

    def negated(self) -> "FourierIndexSet":
        return FourierIndexSet(self.truncation, -self.indices, self.shape)


def build_hex_lattice() -> HexLattice:
    """Build the normalized honeycomb lattice."""
    v1 = np.array([SQRT3 / 2.0, 0.5])
    v2 = np.array([SQRT3 / 2.0, -0.5])
    scale = 4.0 * np.pi / SQRT3
    k1 = scale * np.array([0.5, SQRT3 / 2.0])
    k2 = scale * np.array([0.5, -SQRT3 / 2.0])
    area = abs(float(np.linalg.det(np.column_stack([v1, v2]))))
    return HexLattice(v1=v1, v2=v2, k1=k1, k2=k2, cell_area=area)


def _reduce_theta(theta: NDArray) -> NDArray:
    theta = np.asarray(theta, dtype=float)
    halves = np.round(theta * 2.0) / 2.0
    theta = np.where(np.abs(theta - halves) < REDUCE_SNAP, halves, theta)
    return theta - np.floor(theta + 0.5)


def reduce_to_fundamental(lattice: HexLattice, k: Sequence[float], label: str = "") -> KPoint:
    """Representative of k in the fundamental dual cell, theta_j in [-1/2, 1/2)."""
    theta = _reduce_theta(lattice.lattice_coordinates(k))
    coords = lattice.dual_vector(theta)
    return KPoint(coords=coords, reduced=(float(theta[0]), float(theta[1])), label=label)


def high_symmetry_points(lattice: HexLattice) -> Tuple[KPoint, KPoint, KPoint]:
    """Gamma, K = (k1 - k2)/3 and K' = -K."""
    gamma = reduce_to_fundamental(lattice, np.zeros(2), label="Gamma")
    k_point = reduce_to_fundamental(lattice, (lattice.k1 - lattice.k2) / 3.0, label="K")
    k_prime = reduce_to_fundamental(lattice, -(lattice.k1 - lattice.k2) / 3.0, label="K'")
    return gamma, k_point, k_prime


def rotation_shift(lattice: HexLattice, k: Sequence[float]) -> Tuple[int, int]:
    """
    Integer s with R k = k + s1 k1 + s2 k2.

    Raises:
        ConfigError: if k is not fixed by R modulo the dual lattice
    """
    k = np.asarray(k, dtype=float)
    shift = lattice.lattice_coordinates(ROTATION @ k - k)
    rounded = np.round(shift)
    if np.max(np.abs(shift - rounded)) > 1e-9:
        raise ConfigError(
            f"Rotation requested at non-high-symmetry k={k.tolist()}: "
            f"<Rk> != k (offset {shift.tolist()})"
        )
    return int(rounded[0]), int(rounded[1])


def is_high_symmetry(lattice: HexLattice, k: Sequence[float]) -> bool:
    try:
        rotation_shift(lattice, k)
        return True
    except ConfigError:
        return False


def build_index_set(
    lattice: HexLattice,
    truncation: int,
    k: Sequence[float] = (0.0, 0.0),
    shape: str = "disk",
) -> FourierIndexSet:
    """
    Plane-wave index set of truncation M.

    Args:
        lattice: the hexagonal lattice
        truncation: M >= 0
        k: quasi-momentum the disk is centred on (ignored for the square set)
        shape: 'square' for |m1|,|m2| <= M, 'disk' for |k + G_m| <= (M + 1/2)|k1| sqrt(3)/2

    Returns:
        FourierIndexSet in row-major order
    """
    if truncation < 0:
        raise ConfigError(f"Truncation must be non-negative, got {truncation}")

    if shape == "square":
        rng = np.arange(-truncation, truncation + 1)
        m1, m2 = np.meshgrid(rng, rng, indexing="ij")
        indices = np.column_stack([m1.ravel(), m2.ravel()])
        return FourierIndexSet(truncation, indices, "square")

    if shape != "disk":
        raise ConfigError(f"Unknown index-set shape '{shape}'")

    k = np.asarray(k, dtype=float)
    radius = (truncation + 0.5) * np.linalg.norm(lattice.k1) * SQRT3 / 2.0
    # the disk spans at most radius / (row spacing) rows either side of the centre
    theta = lattice.lattice_coordinates(k)
    span = int(np.ceil(radius / (np.linalg.norm(lattice.k1) * SQRT3 / 2.0) + np.max(np.abs(theta)))) + 1
    rng = np.arange(-span, span + 1)
    m1, m2 = np.meshgrid(rng, rng, indexing="ij")
    candidates = np.column_stack([m1.ravel(), m2.ravel()])
    q = k + candidates @ lattice.dual_basis.T
    # tolerance keeps rotation orbits (equal |q|) together
    keep = np.linalg.norm(q, axis=1) <= radius * (1.0 + 1e-12) + 1e-12
    return FourierIndexSet(truncation, candidates[keep], "disk")


def rotation_permutation(lattice: HexLattice, index_set: FourierIndexSet, k: Sequence[float]) -> NDArray:
    """
    perm[i] = position of the image of index i under q -> R q at a high-symmetry k.

    Raises:
        ConfigError: at non-high-symmetry k or if the set is not closed under rotation
    """
    shift = np.array(rotation_shift(lattice, k))
    images = index_set.indices @ ROTATION_LATTICE.T + shift
    perm = np.array([index_set.position(tuple(m)) for m in images], dtype=int)
    if np.any(perm < 0):
        missing = int(np.sum(perm < 0))
        raise ConfigError(
            f"Index set ({index_set.shape}, M={index_set.truncation}) is not closed under "
            f"rotation at k={np.asarray(k).tolist()}: {missing} images missing"
        )
    return perm


HIGH_SYMMETRY_NAMES = ("Gamma", "K", "K'", "M")


def named_point(lattice: HexLattice, name: str) -> NDArray:
    gamma, k_point, k_prime = high_symmetry_points(lattice)
    table = {
        "Gamma": gamma.coords,
        "K": k_point.coords,
        "K'": k_prime.coords,
        "M": lattice.k1 / 2.0,
    }
    if name not in table:
        raise ConfigError(f"Unknown high-symmetry point '{name}', expected one of {HIGH_SYMMETRY_NAMES}")
    return np.asarray(table[name], dtype=float)


def high_symmetry_path(lattice: HexLattice, names: List[str], points_per_segment: int) -> NDArray:
    """Piecewise-linear k-path through named points, endpoints included once."""
    if len(names) < 2:
        return np.array([named_point(lattice, n) for n in names])
    corners = [named_point(lattice, n) for n in names]
    path = []
    for start, stop in zip(corners[:-1], corners[1:]):
        for t in np.linspace(0.0, 1.0, points_per_segment, endpoint=False):
            path.append(start + t * (stop - start))
    path.append(corners[-1])
    return np.array(path)

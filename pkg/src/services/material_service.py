"""
Material weights W(x) = diag(A(x), a(x)), perturbations V(x) and Fourier coefficient tables.

All quadrature runs on the lattice-coordinate square: x = s1 v1 + s2 v2 with
s_j = j / N, so the hexagonal cell becomes an N x N FFT grid.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel

from config import Config
from errors import ConfigError
from services.lattice_service import ROTATION, FourierIndexSet, HexLattice, build_hex_lattice, build_index_set

logger = logging.getLogger(__name__)

# Evaluators take positions of shape (..., 2)
MatrixField = Callable[[NDArray], NDArray]

BLOCK_TOLERANCE = 1e-14


def eval_h(x: NDArray, lattice: Optional[HexLattice] = None) -> NDArray:
    """Rotation-invariant scalar cos(k1.x) + cos(k2.x) + cos(k3.x), k3 = -k1 - k2."""
    lattice = lattice or _LATTICE
    x = np.asarray(x, dtype=float)
    k3 = -lattice.k1 - lattice.k2
    return np.cos(x @ lattice.k1) + np.cos(x @ lattice.k2) + np.cos(x @ k3)


_LATTICE = build_hex_lattice()


def cell_grid(lattice: HexLattice, n: int) -> NDArray:
    """Physical positions of the N x N lattice-coordinate grid, shape (N, N, 2)."""
    s = np.arange(n) / n
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    return lattice.position(np.stack([s1, s2], axis=-1))


def _identity_block(x: NDArray, size: int) -> NDArray:
    shape = np.shape(x)[:-1]
    return np.broadcast_to(np.eye(size, dtype=complex), shape + (size, size)).copy()


def _invert_2x2(a: NDArray) -> NDArray:
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    inv = np.empty_like(a)
    inv[..., 0, 0] = a[..., 1, 1]
    inv[..., 1, 1] = a[..., 0, 0]
    inv[..., 0, 1] = -a[..., 0, 1]
    inv[..., 1, 0] = -a[..., 1, 0]
    return inv / det[..., None, None]


@dataclass(frozen=True, eq=False)
class MaterialWeight:
    """Block-diagonal Hermitian weight W(x) = diag(A(x), a(x))"""
    name: str
    eval_A: MatrixField
    eval_a: MatrixField
    bounds: Tuple[float, float] = (float("nan"), float("nan"))

    def eval_W(self, x: NDArray) -> NDArray:
        x = np.asarray(x, dtype=float)
        w = np.zeros(x.shape[:-1] + (3, 3), dtype=complex)
        w[..., :2, :2] = self.eval_A(x)
        w[..., 2, 2] = self.eval_a(x)
        return w

    def eval_W_inv(self, x: NDArray) -> NDArray:
        """Pointwise inverse from the 2x2 block and the scalar block."""
        x = np.asarray(x, dtype=float)
        w = np.zeros(x.shape[:-1] + (3, 3), dtype=complex)
        w[..., :2, :2] = _invert_2x2(np.asarray(self.eval_A(x), dtype=complex))
        w[..., 2, 2] = 1.0 / np.asarray(self.eval_a(x), dtype=complex)
        return w

    def ellipticity_bounds(self, lattice: HexLattice, n: int) -> Tuple[float, float]:
        eig = np.linalg.eigvalsh(self.eval_W(cell_grid(lattice, n)))
        return float(eig.min()), float(eig.max())


@dataclass(frozen=True, eq=False)
class PerturbationWeight:
    """Hermitian perturbation V(x), 3 x 3"""
    name: str
    eval_V: MatrixField
    anti_pt_certified: bool = False


class ConditionReport(BaseModel):
    """Pass/fail of one certification condition"""
    passed: bool
    max_residual: float
    worst_point: Tuple[float, float]


class HoneycombCertificate(BaseModel):
    """Result of checking the honeycomb conditions on a grid"""
    weight: str
    grid: int
    tolerance: float
    admissible: ConditionReport
    rot_invariant: ConditionReport
    pt_invariant: ConditionReport
    bounds: Tuple[float, float]

    @property
    def is_honeycomb(self) -> bool:
        return self.admissible.passed and self.rot_invariant.passed and self.pt_invariant.passed

    def failures(self) -> List[str]:
        names = ("admissible", "rot_invariant", "pt_invariant")
        return [name for name in names if not getattr(self, name).passed]


def _condition(residual: NDArray, points: NDArray, tolerance: float) -> ConditionReport:
    flat = residual.ravel()
    worst = int(np.argmax(flat)) if flat.size else 0
    point = points.reshape(-1, 2)[worst] if flat.size else np.zeros(2)
    max_residual = float(flat[worst]) if flat.size else 0.0
    return ConditionReport(
        passed=max_residual < tolerance,
        max_residual=max_residual,
        worst_point=(float(point[0]), float(point[1])),
    )


def check_honeycomb(
    weight: MaterialWeight,
    grid: int = None,
    tolerance: float = None,
    lattice: Optional[HexLattice] = None,
    require_elliptic: bool = True,
) -> HoneycombCertificate:
    """
    Certify the honeycomb conditions on a grid:
    admissibility (Hermitian, elliptic), A(R^T x) = R^T A(x) R with a(R^T x) = a(x),
    and conj(A(-x)) = A(x) with a real and even.

    Args:
        weight: weight to check
        grid: resolution, at least 16
        tolerance: residual threshold per condition
        require_elliptic: False for perturbation shapes such as h * I3

    Returns:
        HoneycombCertificate with per-condition max residuals and worst locations
    """
    grid = grid or Config.CERTIFY_GRID
    tolerance = tolerance if tolerance is not None else Config.CERTIFY_TOLERANCE
    lattice = lattice or _LATTICE
    if grid < 16:
        raise ConfigError(f"Certification grid must be at least 16, got {grid}")

    x = cell_grid(lattice, grid)
    A = np.asarray(weight.eval_A(x), dtype=complex)
    a = np.asarray(weight.eval_a(x), dtype=complex)

    hermitian = np.max(np.abs(A - np.conj(np.swapaxes(A, -1, -2))), axis=(-2, -1))
    hermitian = np.maximum(hermitian, np.abs(a.imag))
    bounds = weight.ellipticity_bounds(lattice, grid)
    admissible = _condition(hermitian, x, tolerance)
    if require_elliptic and bounds[0] <= 0.0:
        admissible = ConditionReport(
            passed=False, max_residual=admissible.max_residual, worst_point=admissible.worst_point
        )

    xr = x @ ROTATION  # R^T x for row vectors
    A_rot = np.asarray(weight.eval_A(xr), dtype=complex)
    expected = ROTATION.T @ A @ ROTATION
    rot_residual = np.maximum(
        np.max(np.abs(A_rot - expected), axis=(-2, -1)),
        np.abs(np.asarray(weight.eval_a(xr)) - a),
    )

    A_minus = np.asarray(weight.eval_A(-x), dtype=complex)
    a_minus = np.asarray(weight.eval_a(-x), dtype=complex)
    pt_residual = np.maximum(
        np.max(np.abs(np.conj(A_minus) - A), axis=(-2, -1)),
        np.maximum(np.abs(a.imag), np.abs(a_minus - a)),
    )

    certificate = HoneycombCertificate(
        weight=weight.name,
        grid=grid,
        tolerance=tolerance,
        admissible=admissible,
        rot_invariant=_condition(rot_residual, x, tolerance),
        pt_invariant=_condition(pt_residual, x, tolerance),
        bounds=bounds,
    )
    if not certificate.is_honeycomb:
        logger.warning(f"Weight '{weight.name}' fails honeycomb conditions: {certificate.failures()}")
    return certificate


def anti_pt_residual(perturbation: PerturbationWeight, grid: int = None, lattice: Optional[HexLattice] = None) -> float:
    """max |conj(V(-x)) + V(x)| together with the Hermitian residual of V."""
    lattice = lattice or _LATTICE
    x = cell_grid(lattice, grid or Config.CERTIFY_GRID)
    v = np.asarray(perturbation.eval_V(x), dtype=complex)
    v_minus = np.asarray(perturbation.eval_V(-x), dtype=complex)
    hermitian = np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2))))
    return float(max(np.max(np.abs(np.conj(v_minus) + v)), hermitian))


# ============================================================================
# WEIGHT BUILDERS
# ============================================================================
def _with_bounds(weight: MaterialWeight, lattice: Optional[HexLattice] = None) -> MaterialWeight:
    lattice = lattice or _LATTICE
    return replace(weight, bounds=weight.ellipticity_bounds(lattice, Config.CERTIFY_GRID))


def identity_weight() -> MaterialWeight:
    """The trivial honeycomb weight I3."""
    return MaterialWeight(
        name="identity",
        eval_A=lambda x: _identity_block(x, 2),
        eval_a=lambda x: np.ones(np.shape(x)[:-1]),
        bounds=(1.0, 1.0),
    )


def build_example_weight() -> MaterialWeight:
    """a = (1 - h/5)^-1, A = (10 - h) I2."""
    def eval_A(x):
        return (10.0 - eval_h(x))[..., None, None] * _identity_block(x, 2)

    def eval_a(x):
        return 1.0 / (1.0 - eval_h(x) / 5.0)

    return _with_bounds(MaterialWeight(name="example", eval_A=eval_A, eval_a=eval_a))


def h_weight() -> MaterialWeight:
    """W1 = h * I3, the low-contrast perturbation shape (not elliptic on its own)."""
    return MaterialWeight(
        name="h_identity",
        eval_A=lambda x: eval_h(x)[..., None, None] * _identity_block(x, 2),
        eval_a=lambda x: eval_h(x),
    )


def low_contrast_weight(w1: MaterialWeight, epsilon: float) -> MaterialWeight:
    """I + epsilon * W1."""
    def eval_A(x):
        return _identity_block(x, 2) + epsilon * np.asarray(w1.eval_A(x), dtype=complex)

    def eval_a(x):
        return 1.0 + epsilon * np.asarray(w1.eval_a(x))

    return _with_bounds(MaterialWeight(name=f"low_contrast({w1.name}, eps={epsilon:g})", eval_A=eval_A, eval_a=eval_a))


def build_example_perturbation() -> PerturbationWeight:
    """V12 = i h, V21 = -i h, zeros elsewhere."""
    def eval_V(x):
        h = eval_h(x)
        v = np.zeros(np.shape(x)[:-1] + (3, 3), dtype=complex)
        v[..., 0, 1] = 1j * h
        v[..., 1, 0] = -1j * h
        return v

    perturbation = PerturbationWeight(name="example", eval_V=eval_V)
    residual = anti_pt_residual(perturbation)
    return replace(perturbation, anti_pt_certified=residual < Config.CERTIFY_TOLERANCE)


def zero_perturbation() -> PerturbationWeight:
    return PerturbationWeight(
        name="none",
        eval_V=lambda x: np.zeros(np.shape(x)[:-1] + (3, 3), dtype=complex),
        anti_pt_certified=True,
    )


def perturbed(weight: MaterialWeight, perturbation: PerturbationWeight, delta: float) -> MaterialWeight:
    """
    W + delta V for a block-diagonal V.

    Raises:
        ConfigError: if V couples the in-plane block to the scalar block
    """
    points = cell_grid(_LATTICE, 16)
    v = np.asarray(perturbation.eval_V(points), dtype=complex)
    off_block = max(np.max(np.abs(v[..., :2, 2])), np.max(np.abs(v[..., 2, :2])))
    if off_block > BLOCK_TOLERANCE:
        raise ConfigError(f"Perturbation '{perturbation.name}' is not block-diagonal (off-block {off_block:.3e})")

    def eval_A(x):
        return np.asarray(weight.eval_A(x), dtype=complex) + delta * perturbation.eval_V(x)[..., :2, :2]

    def eval_a(x):
        return np.asarray(weight.eval_a(x)) + delta * perturbation.eval_V(x)[..., 2, 2].real

    return _with_bounds(
        MaterialWeight(name=f"{weight.name}+{delta:g}*{perturbation.name}", eval_A=eval_A, eval_a=eval_a)
    )


def fourier_series_weight(
    A_terms: Sequence[Tuple[int, int, Sequence[complex]]],
    a_terms: Sequence[Tuple[int, int, complex]],
    name: str = "fourier",
    lattice: Optional[HexLattice] = None,
) -> MaterialWeight:
    """
    Weight given as finite Fourier series A(x) = sum A_m e^{iG_m.x}, a(x) = sum a_m e^{iG_m.x}.

    Args:
        A_terms: (m1, m2, (A11, A12, A21, A22)) entries
        a_terms: (m1, m2, a) entries

    Raises:
        ConfigError: if the terms do not describe a Hermitian field
    """
    lattice = lattice or _LATTICE
    A_coeffs = {(int(m1), int(m2)): np.asarray(v, dtype=complex).reshape(2, 2) for m1, m2, v in A_terms}
    a_coeffs = {(int(m1), int(m2)): complex(v) for m1, m2, v in a_terms}

    for (m1, m2), c in A_coeffs.items():
        partner = A_coeffs.get((-m1, -m2), np.zeros((2, 2)))
        if np.max(np.abs(partner - c.conj().T)) > 1e-12:
            raise ConfigError(f"A term at ({m1},{m2}) has no Hermitian partner at ({-m1},{-m2})")
    for (m1, m2), c in a_coeffs.items():
        if abs(a_coeffs.get((-m1, -m2), 0.0) - np.conj(c)) > 1e-12:
            raise ConfigError(f"a term at ({m1},{m2}) has no conjugate partner at ({-m1},{-m2})")

    def _series(x, coeffs, block_shape):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + block_shape, dtype=complex)
        for m, c in coeffs.items():
            phase = np.exp(1j * (x @ lattice.dual_vector(m)))
            out += phase.reshape(phase.shape + (1,) * len(block_shape)) * c
        return out

    def eval_A(x):
        return _series(x, A_coeffs, (2, 2))

    def eval_a(x):
        return _series(x, a_coeffs, ()).real

    return _with_bounds(MaterialWeight(name=name, eval_A=eval_A, eval_a=eval_a), lattice)


# ============================================================================
# FOURIER TABLES
# ============================================================================
@dataclass(frozen=True, eq=False)
class FourierTable:
    """Fourier coefficients (1/|Omega|) int e^{-iG_m.y} f(y) dy on a square index set"""
    index_set: FourierIndexSet
    coeffs: NDArray

    def coefficient(self, m: Tuple[int, int]) -> NDArray:
        pos = self.index_set.position(m)
        if pos < 0:
            return np.zeros(self.coeffs.shape[1:], dtype=complex)
        return self.coeffs[pos]

    def hermitian_residual(self) -> float:
        residual = 0.0
        for i, (m1, m2) in enumerate(self.index_set.indices):
            partner = self.coefficient((-m1, -m2))
            c = self.coeffs[i]
            adjoint = np.conj(c.T) if c.ndim == 2 else np.conj(c)
            residual = max(residual, float(np.max(np.abs(partner - adjoint))))
        return residual


def coefficient_grid(field: MatrixField, n: int, lattice: Optional[HexLattice] = None) -> NDArray:
    """Raw FFT coefficients of a field sampled on the N x N cell grid, indexed mod N."""
    lattice = lattice or _LATTICE
    samples = np.asarray(field(cell_grid(lattice, n)), dtype=complex)
    return np.fft.fft2(samples, axes=(0, 1)) / (n * n)


def fourier_coefficients(
    field: MatrixField,
    truncation: int,
    n: int,
    lattice: Optional[HexLattice] = None,
) -> FourierTable:
    """
    Fourier table of a (matrix) field for |m1|, |m2| <= M.

    Args:
        field: evaluator on positions (..., 2)
        truncation: M
        n: quadrature grid N, at least 2(2M+1) to avoid aliasing
    """
    lattice = lattice or _LATTICE
    if n < 2 * (2 * truncation + 1):
        logger.warning(f"Quadrature grid N={n} below 2(2M+1)={2 * (2 * truncation + 1)}: coefficients may alias")
    grid = coefficient_grid(field, n, lattice)
    index_set = build_index_set(lattice, truncation, shape="square")
    coeffs = np.array([grid[m1 % n, m2 % n] for m1, m2 in index_set.indices])
    return FourierTable(index_set=index_set, coeffs=coeffs)


def synthesize(table: FourierTable, n: int) -> NDArray:
    """Sample sum_m c_m e^{iG_m.x} on the N x N cell grid."""
    grid = np.zeros((n, n) + table.coeffs.shape[1:], dtype=complex)
    for (m1, m2), c in zip(table.index_set.indices, table.coeffs):
        grid[m1 % n, m2 % n] += c
    return np.fft.ifft2(grid, axes=(0, 1)) * (n * n)

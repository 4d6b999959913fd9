"""
Plane-wave assembly and solution of the Bloch problem W(x) L(k) u = omega u,
plus the R / P / T symmetry operators and rotation-eigenspace decomposition.

Coefficients u_m (shape (n, 3)) expand Psi(x) = sum_m u_m e^{i(k + G_m).x}.
The solve is the generalized Hermitian problem L u = omega B u with B the
convolution matrix of W^-1.
"""
import asyncio
import logging
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from config import Config
from errors import ConfigError, HoneycombError, NumericalError
from services.lattice_service import (
    ROTATION,
    FourierIndexSet,
    HexLattice,
    KPoint,
    build_hex_lattice,
    build_index_set,
    rotation_permutation,
)
from services.material_service import MaterialWeight, cell_grid, coefficient_grid

logger = logging.getLogger(__name__)

TAU = np.exp(2j * np.pi / 3.0)
SIGMA_LABELS = ("1", "tau", "tau_bar")
SIGMA_VALUES = {"1": 1.0 + 0.0j, "tau": TAU, "tau_bar": np.conj(TAU)}

# Component mixing of the rotation operator
ROTATION_BLOCK = np.block([[ROTATION, np.zeros((2, 1))], [np.zeros((1, 2)), np.ones((1, 1))]])
PARITY_BLOCK = np.diag([-1.0, -1.0, 1.0])


@dataclass(frozen=True, eq=False)
class BlochProblem:
    """M_W(k) in a fixed plane-wave basis; matrices are assembled lazily and cached"""
    lattice: HexLattice
    weight: MaterialWeight
    k: KPoint
    index_set: FourierIndexSet
    quadrature: int

    @property
    def dimension(self) -> int:
        return 3 * self.index_set.size

    @property
    def momenta(self) -> NDArray:
        """q_m = k + G_m, shape (n, 2)."""
        return self.k.coords + self.index_set.indices @ self.lattice.dual_basis.T

    @cached_property
    def matrices(self) -> Tuple[NDArray, NDArray]:
        return assemble_operator(self)

    @property
    def L(self) -> NDArray:
        return self.matrices[0]

    @property
    def B(self) -> NDArray:
        return self.matrices[1]

    @cached_property
    def cholesky(self) -> Tuple[NDArray, bool]:
        return linalg.cho_factor(self.B, lower=True)


@dataclass(frozen=True, eq=False)
class BlochField:
    """A quasi-periodic field in the plane-wave basis of a problem"""
    problem: BlochProblem
    coeffs: NDArray

    @property
    def k(self) -> KPoint:
        return self.problem.k

    @property
    def vector(self) -> NDArray:
        return self.coeffs.reshape(-1)

    def scaled(self, factor: complex) -> "BlochField":
        return replace(self, coeffs=self.coeffs * factor)


@dataclass(frozen=True, eq=False)
class BlochEigenpair(BlochField):
    """W-normalized eigenpair"""
    omega: float = 0.0
    band: int = -1


@dataclass(frozen=True, eq=False)
class BandSolution:
    """Positive bands at one k with the kernel and ambiguity bookkeeping"""
    pairs: List[BlochEigenpair]
    kernel_size: int
    ambiguous: List[float] = field(default_factory=list)
    solve_time: float = 0.0

    @property
    def omegas(self) -> NDArray:
        return np.array([p.omega for p in self.pairs])


@dataclass(frozen=True, eq=False)
class SymmetryDecomposition:
    """Rotation-eigenspace labels for a set of eigenpairs at K"""
    pairs: List[BlochEigenpair]
    labels: List[str]
    weights: NDArray  # (n, 3) squared W-norms of the projections, columns follow SIGMA_LABELS
    groups: List[List[int]]
    flagged: List[int]
    projector_residual: float

    def label_counts(self, group: int) -> Dict[str, int]:
        counts = {label: 0 for label in SIGMA_LABELS}
        for i in self.groups[group]:
            counts[self.labels[i]] += 1
        return counts


# ============================================================================
# ASSEMBLY AND SOLVE
# ============================================================================
def build_problem(
    weight: MaterialWeight,
    k: Sequence[float],
    truncation: int = None,
    shape: str = None,
    quadrature: int = None,
    lattice: Optional[HexLattice] = None,
    label: str = "",
) -> BlochProblem:
    """
    Set up M_W(k) on the k-centred index set.

    The quadrature grid is raised to at least 4 max|m| + 2 so every index
    difference has its own FFT bin.
    """
    lattice = lattice or build_hex_lattice()
    truncation = Config.DEFAULT_TRUNCATION if truncation is None else truncation
    shape = shape or Config.INDEX_SHAPE
    kpoint = k if isinstance(k, KPoint) else KPoint(
        coords=np.asarray(k, dtype=float),
        reduced=tuple(float(t) for t in lattice.lattice_coordinates(k)),
        label=label,
    )
    index_set = build_index_set(lattice, truncation, kpoint.coords, shape)
    n = max(quadrature or Config.QUADRATURE_GRID, 4 * index_set.max_abs + 2)
    n += n % 2
    return BlochProblem(lattice=lattice, weight=weight, k=kpoint, index_set=index_set, quadrature=n)


def assemble_operator(problem: BlochProblem) -> Tuple[NDArray, NDArray]:
    """
    Assemble L = blockdiag S(k + G_m) and B = [W^-1 coefficient at m - n].

    Raises:
        NumericalError: if B is not positive definite
    """
    q = problem.momenta
    n = problem.index_set.size

    L = np.zeros((3 * n, 3 * n), dtype=complex)
    rows = 3 * np.arange(n)
    L[rows, rows + 2] = -q[:, 0]
    L[rows + 1, rows + 2] = -q[:, 1]
    L[rows + 2, rows] = -q[:, 0]
    L[rows + 2, rows + 1] = -q[:, 1]

    N = problem.quadrature
    winv = coefficient_grid(problem.weight.eval_W_inv, N, problem.lattice)
    idx = problem.index_set.indices
    diff = idx[:, None, :] - idx[None, :, :]
    blocks = winv[diff[..., 0] % N, diff[..., 1] % N]  # (n, n, 3, 3)
    B = blocks.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)
    B = 0.5 * (B + B.conj().T)

    try:
        linalg.cholesky(B, lower=True)
    except linalg.LinAlgError:
        min_eig = float(linalg.eigvalsh(B)[0])
        raise NumericalError(
            f"W^-1 convolution matrix is not positive definite (min eigenvalue {min_eig:.3e}); "
            f"increase truncation or check the weight",
            detail={"min_eigenvalue": min_eig, "dimension": 3 * n},
        )

    logger.debug(f"Assembled operator at k={problem.k.coords.tolist()}: dimension {3 * n}, grid {N}")
    return L, B


def solve_bands(problem: BlochProblem, count: int) -> BandSolution:
    """
    Smallest `count` positive eigenvalues with W-normalized eigenvectors.

    |omega| < ZERO_MODE_RTOL * max|omega| is the gradient kernel and dropped.
    Eigenvalues up to ZERO_MODE_AMBIGUITY_RTOL * max|omega| are kept but reported.
    """
    if count < 1:
        raise ConfigError(f"Band count must be positive, got {count}")
    start = time.time()
    L, B = problem.matrices
    try:
        omegas, vectors = linalg.eigh(L, B)
    except linalg.LinAlgError as e:
        raise NumericalError(f"Generalized eigensolver failed at k={problem.k.coords.tolist()}: {e}")

    scale = float(np.max(np.abs(omegas)))
    zero_cut = Config.ZERO_MODE_RTOL * scale
    ambiguous_cut = Config.ZERO_MODE_AMBIGUITY_RTOL * scale
    kernel = np.abs(omegas) < zero_cut
    ambiguous = [float(w) for w in omegas if zero_cut <= abs(w) < ambiguous_cut]
    if ambiguous:
        logger.warning(f"{len(ambiguous)} eigenvalues inside the zero-filter ambiguity band: {ambiguous}")

    positive = np.where((omegas >= zero_cut))[0]
    if len(positive) < count:
        raise NumericalError(
            f"Only {len(positive)} positive eigenvalues available, {count} requested; increase truncation"
        )

    norm = 1.0 / np.sqrt(problem.lattice.cell_area)
    n = problem.index_set.size
    pairs = [
        BlochEigenpair(
            problem=problem,
            coeffs=vectors[:, i].reshape(n, 3) * norm,
            omega=float(omegas[i]),
            band=band + 1,
        )
        for band, i in enumerate(positive[:count])
    ]
    elapsed = time.time() - start
    logger.debug(f"Solved {problem.dimension}-dim problem in {elapsed:.3f}s")
    return BandSolution(pairs=pairs, kernel_size=int(np.sum(kernel)), ambiguous=ambiguous, solve_time=elapsed)


def apply_operator(problem: BlochProblem, coeffs: NDArray) -> NDArray:
    """Discrete M_W u = B^-1 L u."""
    shape = np.shape(coeffs)
    rhs = problem.L @ np.reshape(coeffs, -1)
    return linalg.cho_solve(problem.cholesky, rhs).reshape(shape)


def eigen_residual(pair: BlochEigenpair) -> float:
    """||L u - omega B u|| / ||u||."""
    u = pair.vector
    r = pair.problem.L @ u - pair.omega * (pair.problem.B @ u)
    return float(np.linalg.norm(r) / np.linalg.norm(u))


# ============================================================================
# INNER PRODUCTS AND SYNTHESIS
# ============================================================================
def _check_same_basis(a: BlochField, b: BlochField):
    if a.problem is b.problem:
        return
    same = (
        a.problem.index_set.size == b.problem.index_set.size
        and np.array_equal(a.problem.index_set.indices, b.problem.index_set.indices)
        and np.allclose(a.problem.k.coords, b.problem.k.coords)
        and a.problem.weight is b.problem.weight
    )
    if not same:
        raise ConfigError("Fields live in different plane-wave bases (k, truncation or weight differ)")


def weighted_inner_product(a: BlochField, b: BlochField) -> complex:
    """<a, b>_W = int a^* W^-1 b over the cell = |Omega| a^* B b."""
    _check_same_basis(a, b)
    return complex(a.problem.lattice.cell_area * np.vdot(a.vector, a.problem.B @ b.vector))


def weighted_norm(a: BlochField) -> float:
    return float(np.sqrt(max(weighted_inner_product(a, a).real, 0.0)))


def synthesize_coefficients(index_set: FourierIndexSet, coeffs: NDArray, n: int) -> NDArray:
    """Periodic part u(s) = sum_m u_m e^{2 pi i m.s} on the N x N cell grid, shape (N, N, ...)."""
    if n <= 2 * index_set.max_abs:
        raise ConfigError(f"Synthesis grid {n} too small for index set with max|m| = {index_set.max_abs}")
    grid = np.zeros((n, n) + np.shape(coeffs)[1:], dtype=complex)
    np.add.at(grid, (index_set.indices[:, 0] % n, index_set.indices[:, 1] % n), coeffs)
    return np.fft.ifft2(grid, axes=(0, 1)) * (n * n)


def synthesize_periodic_part(pair: BlochField, n: int = None) -> NDArray:
    n = n or pair.problem.quadrature
    return synthesize_coefficients(pair.problem.index_set, pair.coeffs, n)


def spectral_curl(problem: BlochProblem, coeffs: NDArray) -> NDArray:
    """Coefficients of L(k) u: rows S(q_m) u_m."""
    q = problem.momenta
    out = np.zeros_like(coeffs, dtype=complex)
    out[:, 0] = -q[:, 0] * coeffs[:, 2]
    out[:, 1] = -q[:, 1] * coeffs[:, 2]
    out[:, 2] = -q[:, 0] * coeffs[:, 0] - q[:, 1] * coeffs[:, 1]
    return out


def physical_residual(pair: BlochEigenpair, n: int = None) -> float:
    """||W L Psi - omega Psi|| / ||Psi|| evaluated pointwise on the collocation grid."""
    problem = pair.problem
    n = n or problem.quadrature
    u = synthesize_periodic_part(pair, n)
    curl = synthesize_coefficients(problem.index_set, spectral_curl(problem, pair.coeffs), n)
    w = problem.weight.eval_W(cell_grid(problem.lattice, n))
    residual = np.einsum("...ij,...j->...i", w, curl) - pair.omega * u
    return float(np.linalg.norm(residual) / np.linalg.norm(u))


# ============================================================================
# SYMMETRY OPERATORS
# ============================================================================
def _negated_problem(problem: BlochProblem) -> BlochProblem:
    k = KPoint(coords=-problem.k.coords, reduced=(-problem.k.reduced[0], -problem.k.reduced[1]), label="")
    return replace(problem, k=k, index_set=problem.index_set.negated())


def apply_symmetry(op: str, psi: BlochField) -> BlochField:
    """
    Apply R, P, T or PT in the plane-wave representation.

    R permutes indices q -> Rq and mixes components with diag(R, 1); it is exact
    at Gamma, K and K'. P and T map k to -k with negated indices. PT conjugates
    the coefficients in place.

    Raises:
        ConfigError: R at a non-high-symmetry k or unknown operator
    """
    problem = psi.problem
    if op == "R":
        perm = rotation_permutation(problem.lattice, problem.index_set, problem.k.coords)
        rotated = np.empty_like(psi.coeffs, dtype=complex)
        rotated[perm] = psi.coeffs @ ROTATION_BLOCK.T
        return replace(psi, coeffs=rotated)
    if op == "PT":
        return replace(psi, coeffs=np.conj(psi.coeffs))
    if op == "P":
        return BlochField(problem=_negated_problem(problem), coeffs=psi.coeffs @ PARITY_BLOCK)
    if op == "T":
        return BlochField(problem=_negated_problem(problem), coeffs=np.conj(psi.coeffs) @ PARITY_BLOCK)
    raise ConfigError(f"Unknown symmetry operator '{op}', expected R, P, T or PT")


def rotation_projection(psi: BlochField, sigma: str) -> BlochField:
    """P_sigma psi = (1/3) sum_j conj(sigma)^j R^j psi."""
    s = SIGMA_VALUES[sigma]
    total = psi.coeffs.astype(complex)
    current = psi
    for j in (1, 2):
        current = apply_symmetry("R", current)
        total = total + np.conj(s) ** j * current.coeffs
    return replace(psi, coeffs=total / 3.0)


def group_degenerate(omegas: Sequence[float], rtol: float = None) -> List[List[int]]:
    """Group sorted eigenvalues whose relative spacing is below rtol."""
    rtol = rtol or Config.DEGENERACY_RTOL
    groups: List[List[int]] = []
    for i, w in enumerate(omegas):
        if groups and abs(w - omegas[groups[-1][0]]) <= rtol * max(abs(w), 1e-300):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def decompose_rotation_eigenspaces(pairs: Sequence[BlochEigenpair]) -> SymmetryDecomposition:
    """
    Rotate each degenerate group into R-eigenvectors and label them by sigma.

    Vectors whose largest sigma weight is below SIGMA_DOMINANCE are flagged.
    """
    if not pairs:
        raise ConfigError("No eigenpairs to decompose")
    groups = group_degenerate([p.omega for p in pairs])

    rotated_pairs: List[BlochEigenpair] = []
    for group in groups:
        members = [pairs[i] for i in group]
        r = np.array([
            [weighted_inner_product(a, apply_symmetry("R", b)) for b in members]
            for a in members
        ])
        # r is unitary up to round-off, complex Schur is then diagonal
        T, Z = linalg.schur(r, output="complex")
        coeffs = np.stack([m.coeffs for m in members], axis=-1)  # (n, 3, g)
        mixed = coeffs @ Z
        for j, m in enumerate(members):
            rotated_pairs.append(replace(m, coeffs=mixed[..., j]))

    weights = np.zeros((len(rotated_pairs), 3))
    labels: List[str] = []
    residual = 0.0
    for i, pair in enumerate(rotated_pairs):
        projections = [rotation_projection(pair, s) for s in SIGMA_LABELS]
        weights[i] = [weighted_inner_product(p, p).real for p in projections]
        labels.append(SIGMA_LABELS[int(np.argmax(weights[i]))])
        total = sum(p.coeffs for p in projections)
        scale = max(np.linalg.norm(pair.coeffs), 1e-300)
        residual = max(residual, np.linalg.norm(total - pair.coeffs) / scale)
        for s, p in zip(SIGMA_LABELS, projections):
            again = rotation_projection(p, s)
            residual = max(residual, np.linalg.norm(again.coeffs - p.coeffs) / scale)

    norms = np.maximum(weights.sum(axis=1), 1e-300)
    weights = weights / norms[:, None]
    flagged = [i for i in range(len(rotated_pairs)) if weights[i].max() < Config.SIGMA_DOMINANCE]
    if flagged:
        logger.warning(f"No dominant sigma-component for eigenvectors {flagged}")

    return SymmetryDecomposition(
        pairs=rotated_pairs,
        labels=labels,
        weights=weights,
        groups=groups,
        flagged=flagged,
        projector_residual=float(residual),
    )


# ============================================================================
# BAND SURFACE SWEEP
# ============================================================================
@dataclass(frozen=True, eq=False)
class BandTable:
    """omega_b(k) for an ordered list of k"""
    k_points: NDArray
    omegas: NDArray  # (nk, bands)
    ambiguous: Dict[int, List[float]] = field(default_factory=dict)

    def rows(self) -> List[Tuple[float, float, int, float]]:
        """CSV rows kx, ky, band_index, omega in k order then band order."""
        return [
            (float(k[0]), float(k[1]), b + 1, float(w))
            for k, omegas in zip(self.k_points, self.omegas)
            for b, w in enumerate(omegas)
        ]


class BandService:
    """Solves Bloch bands over many k-points in parallel threads"""

    def __init__(self, truncation: int = None, quadrature: int = None, shape: str = None):
        self.truncation = truncation
        self.quadrature = quadrature
        self.shape = shape
        self.lattice = build_hex_lattice()

    def solve_point(self, weight: MaterialWeight, k: Sequence[float], bands: int) -> BandSolution:
        problem = build_problem(
            weight, k, self.truncation, self.shape, self.quadrature, lattice=self.lattice
        )
        return solve_bands(problem, bands)

    def _solve_indexed(self, weight: MaterialWeight, index: int, k: NDArray, bands: int) -> BandSolution:
        try:
            return self.solve_point(weight, k, bands)
        except HoneycombError as e:
            raise type(e)(f"Band solve failed at k[{index}]={k.tolist()}: {e}", detail={"k": k.tolist(), **e.detail})
        except Exception as e:
            raise NumericalError(f"Band solve failed at k[{index}]={k.tolist()}: {e}", detail={"k": k.tolist()})

    async def band_surface_sweep(self, weight: MaterialWeight, k_points: NDArray, bands: int) -> BandTable:
        """
        Solve every k-point concurrently and merge in input order.

        Args:
            weight: material weight
            k_points: (nk, 2) array of quasi-momenta
            bands: number of positive bands per point
        """
        k_points = np.atleast_2d(np.asarray(k_points, dtype=float))
        logger.info(f"Band sweep over {len(k_points)} k-points, {bands} bands")
        start = time.time()

        tasks = [
            asyncio.to_thread(self._solve_indexed, weight, i, k, bands)
            for i, k in enumerate(k_points)
        ]
        solutions = await asyncio.gather(*tasks)

        omegas = np.array([s.omegas for s in solutions])
        ambiguous = {i: s.ambiguous for i, s in enumerate(solutions) if s.ambiguous}
        logger.info(f"Band sweep finished in {time.time() - start:.2f}s")
        return BandTable(k_points=k_points, omegas=omegas, ambiguous=ambiguous)


def rectangular_k_grid(extent: float, points: int) -> NDArray:
    """Row-major grid over [-extent, extent]^2."""
    axis = np.linspace(-extent, extent, points)
    kx, ky = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([kx.ravel(), ky.ravel()])



"""
Dirac points at K: location, phase fixing, the F functional, the conical
constant C_D, the mass coefficient theta_sharp, the cubic coefficients and the
low-contrast reference values.
"""
import asyncio
import itertools
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from config import Config
from errors import ConfigError, NumericalError
from services.bloch_service import (
    SIGMA_VALUES,
    BandService,
    BlochEigenpair,
    BlochField,
    BlochProblem,
    apply_symmetry,
    build_problem,
    decompose_rotation_eigenspaces,
    eigen_residual,
    solve_bands,
    synthesize_periodic_part,
    weighted_inner_product,
    weighted_norm,
)
from services.lattice_service import HexLattice, build_hex_lattice, high_symmetry_points
from services.material_service import (
    MaterialWeight,
    PerturbationWeight,
    cell_grid,
    check_honeycomb,
    fourier_coefficients,
    low_contrast_weight,
    perturbed,
)

logger = logging.getLogger(__name__)

DEFAULT_RADII = (0.005, 0.01, 0.02)
DEFAULT_DIRECTIONS = 6
ZERO_CONE = 1e-10

# beta combinations (j, k, n, l) reported next to beta1 and beta2
BETA1_INDEX = (1, 1, 1, 1)
BETA2_INDEX = (2, 1, 1, 2)
BETA2_CROSS_CHECKS = ((1, 1, 2, 2), (2, 2, 1, 1), (1, 2, 2, 1))


@dataclass(frozen=True, eq=False)
class DiracCandidate:
    """Raw two-fold tau / tau_bar pair at K before phase fixing"""
    omega: float
    band: int
    pairs: List[BlochEigenpair]
    labels: List[str]
    rejected: List[Dict[str, Any]] = field(default_factory=list)
    flagged: List[int] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class ConicalFit:
    """Cone slopes sampled around K"""
    directions: NDArray
    radii: NDArray
    slopes_upper: NDArray  # (directions, radii)
    slopes_lower: NDArray
    intercepts: NDArray  # r -> 0 extrapolation of the gap / 2r, per direction
    fitted_cd: float
    spread: float
    residual_bound: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "directions": self.directions.tolist(),
            "radii": self.radii.tolist(),
            "slopes_upper": self.slopes_upper.tolist(),
            "slopes_lower": self.slopes_lower.tolist(),
            "intercepts": self.intercepts.tolist(),
            "fitted_cd": self.fitted_cd,
            "spread": self.spread,
            "residual_bound": self.residual_bound,
        }


@dataclass(frozen=True, eq=False)
class DiracPointData:
    """Phase-fixed Dirac pair and its effective coefficients"""
    k: Tuple[float, float]
    omega_d: float
    band: int
    psi1: BlochEigenpair
    psi2: BlochEigenpair
    cd: float
    f_value: NDArray
    theta_sharp: Optional[float] = None
    q_matrix: Optional[NDArray] = None
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    beta_table: Dict[str, complex] = field(default_factory=dict)
    fit: Optional[ConicalFit] = None
    flags: List[str] = field(default_factory=list)
    rejected: List[Dict[str, Any]] = field(default_factory=list)

    def envelope_coefficients(self, rho: float = 1.0) -> Tuple[float, float]:
        """(p1, p2) = (-omega_D rho beta1, -2 omega_D rho beta2)."""
        if self.beta1 is None or self.beta2 is None:
            raise ConfigError("Cubic coefficients were not computed for this Dirac point")
        return -self.omega_d * rho * self.beta1, -2.0 * self.omega_d * rho * self.beta2

    def to_dict(self) -> Dict[str, Any]:
        result = {
            "k": list(self.k),
            "omegaD": self.omega_d,
            "band": self.band,
            "CD": self.cd,
            "F": [[v.real, v.imag] for v in self.f_value],
            "thetaSharp": self.theta_sharp,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "beta_cross_checks": {k: [v.real, v.imag] for k, v in self.beta_table.items()},
            "flags": self.flags,
            "rejected": self.rejected,
        }
        if self.q_matrix is not None:
            result["Q"] = [[[v.real, v.imag] for v in row] for row in self.q_matrix]
        if self.beta1 is not None and self.beta2 is not None:
            p1, p2 = self.envelope_coefficients()
            result["p1"], result["p2"] = p1, p2
        if self.fit is not None:
            result["fit"] = self.fit.to_dict()
        return result


# ============================================================================
# LOCATION AND PHASE
# ============================================================================
def dirac_problem(
    weight: MaterialWeight,
    truncation: int = None,
    quadrature: int = None,
    lattice: Optional[HexLattice] = None,
) -> BlochProblem:
    lattice = lattice or build_hex_lattice()
    _, k_point, _ = high_symmetry_points(lattice)
    return build_problem(weight, k_point, truncation, "disk", quadrature, lattice)


def locate_dirac_point(problem: BlochProblem, bands: int = 6) -> DiracCandidate:
    """
    Lowest positive two-fold group at K whose vectors are labelled tau and tau_bar.

    Raises:
        NumericalError: if no such group exists among the first `bands` bands
    """
    solution = solve_bands(problem, bands)
    decomposition = decompose_rotation_eigenspaces(solution.pairs)
    rejected: List[Dict[str, Any]] = []

    # the last group may be cut by the band count
    for group in decomposition.groups[:-1] if len(decomposition.groups) > 1 else decomposition.groups:
        members = [decomposition.pairs[i] for i in group]
        labels = [decomposition.labels[i] for i in group]
        omega = float(np.mean([m.omega for m in members]))
        if len(group) == 1:
            continue
        if len(group) != 2:
            rejected.append({"omega": omega, "multiplicity": len(group), "reason": f"multiplicity {len(group)}"})
            continue
        if sorted(labels) != ["tau", "tau_bar"]:
            rejected.append({"omega": omega, "multiplicity": 2, "reason": f"labels {labels}"})
            continue
        flagged = [i for i in group if i in decomposition.flagged]
        logger.info(f"Dirac point at omega_D={omega:.10f} (bands {group[0] + 1}-{group[1] + 1})")
        return DiracCandidate(
            omega=omega,
            band=group[0] + 1,
            pairs=members,
            labels=labels,
            rejected=rejected,
            flagged=flagged,
        )

    raise NumericalError(
        f"No two-fold tau/tau_bar degeneracy among the first {bands} bands at K",
        detail={"rejected": rejected, "omegas": solution.omegas.tolist()},
    )


def compute_f(psi: BlochField, phi: BlochField) -> NDArray:
    """F(Psi, Phi) = int conj(Psi_perp) Phi_3 + conj(Psi_3) Phi_perp."""
    if psi.problem is not phi.problem and not np.array_equal(psi.problem.index_set.indices, phi.problem.index_set.indices):
        raise ConfigError("F requires both fields in the same plane-wave basis")
    u, v = psi.coeffs, phi.coeffs
    area = psi.problem.lattice.cell_area
    return area * (np.conj(u[:, :2]).T @ v[:, 2] + v[:, :2].T @ np.conj(u[:, 2]))


def cone_coefficient(f_value: NDArray) -> complex:
    """C0 = (F1 - i F2) / 2."""
    return 0.5 * (f_value[0] - 1j * f_value[1])


def compute_cd(psi1: BlochField, psi2: BlochField) -> float:
    return float(abs(cone_coefficient(compute_f(psi1, psi2))))


def fix_phase(candidate: DiracCandidate) -> Tuple[BlochEigenpair, BlochEigenpair, List[str]]:
    """
    psi1 in the tau space, W-normalized, rotated by e^{i arg(C0)/2}; psi2 = PT psi1.

    Returns:
        (psi1, psi2, flags); a vanishing cone is flagged, not raised
    """
    flags: List[str] = []
    psi1 = candidate.pairs[candidate.labels.index("tau")]
    psi1 = replace(psi1, coeffs=psi1.coeffs / weighted_norm(psi1))
    c0 = cone_coefficient(compute_f(psi1, apply_symmetry("PT", psi1)))
    if abs(c0) < ZERO_CONE:
        flags.append("degenerate_cone")
        logger.warning("F(psi1, psi2) vanishes: degenerate cone, C_D = 0")
    else:
        psi1 = replace(psi1, coeffs=psi1.coeffs * np.exp(0.5j * np.angle(c0)))
    psi2 = apply_symmetry("PT", psi1)
    psi2 = BlochEigenpair(problem=psi2.problem, coeffs=psi2.coeffs, omega=psi1.omega, band=psi1.band + 1)

    residual = eigen_residual(psi2)
    if residual > Config.PT_PARTNER_TOLERANCE * max(1.0, psi1.omega):
        raise NumericalError(f"PT image of psi1 is not an eigenvector (residual {residual:.3e}); weight is not PT-invariant")
    return psi1, psi2, flags


# ============================================================================
# EFFECTIVE COEFFICIENTS
# ============================================================================
def compute_q_matrix(
    psi1: BlochEigenpair,
    psi2: BlochEigenpair,
    perturbation: PerturbationWeight,
) -> NDArray:
    """Q_jl = omega_D int psi_j^* W^-1 V W^-1 psi_l."""
    problem = psi1.problem
    n = problem.quadrature
    x = cell_grid(problem.lattice, n)
    winv = problem.weight.eval_W_inv(x)
    kernel = winv @ perturbation.eval_V(x) @ winv
    fields = [synthesize_periodic_part(p, n) for p in (psi1, psi2)]
    q = np.zeros((2, 2), dtype=complex)
    for j, l in itertools.product(range(2), range(2)):
        integrand = np.einsum("...i,...ij,...j->...", np.conj(fields[j]), kernel, fields[l])
        q[j, l] = psi1.omega * problem.lattice.cell_area * integrand.mean()
    return q


def compute_theta_sharp(
    psi1: BlochEigenpair,
    psi2: BlochEigenpair,
    perturbation: PerturbationWeight,
) -> Tuple[float, NDArray]:
    """
    Signed theta_sharp = Q11 after checking Q12 = 0 and Q11 = -Q22.

    Raises:
        ConfigError: if the perturbation is not anti-PT certified
        NumericalError: if Q breaks the expected symmetry
    """
    if not perturbation.anti_pt_certified:
        raise ConfigError(f"Perturbation '{perturbation.name}' is not anti-PT certified")
    q = compute_q_matrix(psi1, psi2, perturbation)
    tol = Config.Q_SYMMETRY_TOLERANCE
    if abs(q[0, 1]) > tol or abs(q[0, 0] + q[1, 1]) > tol:
        raise NumericalError(
            f"Q matrix breaks symmetry: |Q12|={abs(q[0, 1]):.3e}, |Q11+Q22|={abs(q[0, 0] + q[1, 1]):.3e}",
            detail={"Q": [[str(v) for v in row] for row in q]},
        )
    return float(q[0, 0].real), q


def beta_combination(fields: Sequence[NDArray], index: Tuple[int, int, int, int], area: float) -> complex:
    """int (u_j^perp* . u_k^perp)(u_n^perp* . u_l^perp) on the cell grid."""
    j, k, n, l = (fields[i - 1][..., :2] for i in index)
    first = np.sum(np.conj(j) * k, axis=-1)
    second = np.sum(np.conj(n) * l, axis=-1)
    return complex(area * np.mean(first * second))


def nonlinear_coefficients(psi1: BlochEigenpair, psi2: BlochEigenpair) -> Tuple[float, float, Dict[str, complex]]:
    """
    beta1 from (1,1,1,1), beta2 from (2,1,1,2).

    Rotation-forbidden combinations must vanish. The remaining allowed
    combinations are returned as cross-checks.

    Raises:
        NumericalError: on complex beta values or a non-vanishing forbidden combination
    """
    problem = psi1.problem
    fields = [synthesize_periodic_part(p, problem.quadrature) for p in (psi1, psi2)]
    area = problem.lattice.cell_area
    table = {
        index: beta_combination(fields, index, area)
        for index in itertools.product((1, 2), repeat=4)
    }
    scale = max(1.0, abs(table[BETA1_INDEX]))
    tol = Config.BETA_TOLERANCE * scale

    charge = {1: 1, 2: -1}
    for index, value in table.items():
        j, k, n, l = index
        allowed = -charge[j] + charge[k] - charge[n] + charge[l] == 0
        if not allowed and abs(value) > tol:
            raise NumericalError(f"Rotation-forbidden combination {index} does not vanish: {abs(value):.3e}")

    beta1, beta2 = table[BETA1_INDEX], table[BETA2_INDEX]
    for name, value in (("beta1", beta1), ("beta2", beta2)):
        if abs(value.imag) > tol:
            raise NumericalError(f"{name} has imaginary part {value.imag:.3e}")

    cross = {",".join(map(str, idx)): table[idx] for idx in BETA2_CROSS_CHECKS + ((2, 2, 2, 2),)}
    return float(beta1.real), float(beta2.real), cross


# ============================================================================
# LOW CONTRAST REFERENCE
# ============================================================================
# Indices (relative to K) of the three plane waves of the unperturbed triple
TRIPLE_INDICES = ((0, 0), (0, 1), (-1, 0))


@dataclass(frozen=True, eq=False)
class LowContrastPrediction:
    """First-order values for I + eps W1 at K"""
    omega0: float
    pair_slope: float  # omega_pair = omega0 (1 + eps * pair_slope)
    simple_slope: float
    closed_form_slope: float  # omega0 (1 + eps * closed_form_slope) from the closed-form expression
    nondegeneracy: float
    reduced_matrix: NDArray

    def pair(self, epsilon: float) -> float:
        return self.omega0 * (1.0 + epsilon * self.pair_slope)

    def simple(self, epsilon: float) -> float:
        return self.omega0 * (1.0 + epsilon * self.simple_slope)

    def closed_form(self, epsilon: float) -> float:
        return self.omega0 * (1.0 + epsilon * self.closed_form_slope)


def low_contrast_prediction(w1: MaterialWeight, lattice: Optional[HexLattice] = None) -> LowContrastPrediction:
    """
    Reduced 3 x 3 degenerate perturbation of the |K| triple.

    C_ij = zeta_i^* W1_{m_i - m_j} zeta_j with zeta_j = (-q_j / |q_j|, 1) / sqrt(2),
    and omega_sigma = omega0 (1 + eps c_sigma^* C c_sigma), c_sigma = (1, conj(sigma), sigma) / sqrt(3).

    Raises:
        ConfigError: if W1 is not rotation / PT invariant or the non-degeneracy number vanishes
    """
    lattice = lattice or build_hex_lattice()
    certificate = check_honeycomb(w1, lattice=lattice, require_elliptic=False)
    if not (certificate.rot_invariant.passed and certificate.pt_invariant.passed):
        raise ConfigError(f"Low-contrast shape '{w1.name}' is not honeycomb-symmetric: {certificate.failures()}")

    _, k_point, _ = high_symmetry_points(lattice)
    K = k_point.coords
    omega0 = float(np.linalg.norm(K))
    table = fourier_coefficients(w1.eval_W, 2, 16, lattice)

    zetas = []
    for m in TRIPLE_INDICES:
        q = K + lattice.dual_vector(m)
        zetas.append(np.concatenate([-q / np.linalg.norm(q), [1.0]]) / np.sqrt(2.0))
    reduced = np.zeros((3, 3), dtype=complex)
    for i, j in itertools.product(range(3), range(3)):
        m = (TRIPLE_INDICES[i][0] - TRIPLE_INDICES[j][0], TRIPLE_INDICES[i][1] - TRIPLE_INDICES[j][1])
        reduced[i, j] = np.conj(zetas[i]) @ table.coefficient(m) @ zetas[j]

    def rayleigh(sigma: complex) -> float:
        c = np.array([1.0, np.conj(sigma), sigma]) / np.sqrt(3.0)
        return float(np.real(np.conj(c) @ reduced @ c))

    zeta = np.concatenate([K / omega0, [1.0]])
    diagonal = float(np.real(zeta @ table.coefficient((0, 0)) @ zeta))
    nondegeneracy = float(np.real(zeta @ table.coefficient((0, -1)) @ zeta))
    if abs(nondegeneracy) < 1e-12:
        raise ConfigError(f"Non-degeneracy condition fails for '{w1.name}': zeta^T W1_(0,-1) zeta = 0")

    return LowContrastPrediction(
        omega0=omega0,
        pair_slope=rayleigh(SIGMA_VALUES["tau"]),
        simple_slope=rayleigh(SIGMA_VALUES["1"]),
        closed_form_slope=0.5 * (diagonal - nondegeneracy),
        nondegeneracy=nondegeneracy,
        reduced_matrix=reduced,
    )


def _richardson(errors: Sequence[float]) -> List[float]:
    return [float(a / b) if b > 0 else float("inf") for a, b in zip(errors[:-1], errors[1:])]


def _loglog_slope(epsilons: Sequence[float], errors: Sequence[float]) -> float:
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    keep = err > 0
    if np.sum(keep) < 2:
        return float("nan")
    return float(stats.linregress(np.log(eps[keep]), np.log(err[keep])).slope)


# ============================================================================
# SERVICE
# ============================================================================
class DiracService:
    """Dirac-point analysis on a fixed truncation"""

    def __init__(self, truncation: int = None, quadrature: int = None, bands: int = 6):
        self.truncation = truncation
        self.quadrature = quadrature
        self.bands = bands
        self.lattice = build_hex_lattice()
        self.band_service = BandService(truncation=truncation, quadrature=quadrature, shape="disk")

    def locate(self, weight: MaterialWeight) -> DiracCandidate:
        problem = dirac_problem(weight, self.truncation, self.quadrature, self.lattice)
        return locate_dirac_point(problem, self.bands)

    async def analyze(
        self,
        weight: MaterialWeight,
        perturbation: Optional[PerturbationWeight] = None,
        radii: Sequence[float] = DEFAULT_RADII,
        directions: int = DEFAULT_DIRECTIONS,
        fit: bool = True,
        phase: complex = 1.0,
    ) -> DiracPointData:
        """
        Locate, phase-fix and compute C_D, theta_sharp, beta1/beta2 and the conical fit.

        Args:
            weight: honeycomb material weight
            perturbation: anti-PT perturbation for theta_sharp, skipped if None
            radii: conical fit radii
            directions: number of equally spaced fit directions
            fit: run the conical fit
            phase: unit scalar applied to the raw pair before phase fixing
        """
        start = time.time()
        candidate = await asyncio.to_thread(self.locate, weight)
        if phase != 1.0:
            candidate = replace(candidate, pairs=[p.scaled(phase) for p in candidate.pairs])

        psi1, psi2, flags = fix_phase(candidate)
        if candidate.flagged:
            flags.append("sigma_not_dominant")
        f_value = compute_f(psi1, psi2)
        cd = float(abs(cone_coefficient(f_value)))

        theta_sharp, q_matrix = None, None
        if perturbation is not None:
            theta_sharp, q_matrix = compute_theta_sharp(psi1, psi2, perturbation)

        beta1, beta2, cross = nonlinear_coefficients(psi1, psi2)

        data = DiracPointData(
            k=tuple(float(v) for v in psi1.problem.k.coords),
            omega_d=candidate.omega,
            band=candidate.band,
            psi1=psi1,
            psi2=psi2,
            cd=cd,
            f_value=f_value,
            theta_sharp=theta_sharp,
            q_matrix=q_matrix,
            beta1=beta1,
            beta2=beta2,
            beta_table=cross,
            flags=flags,
            rejected=candidate.rejected,
        )
        if fit and cd > ZERO_CONE:
            data = replace(data, fit=await self.conical_fit(weight, data, radii, directions))

        logger.info(
            f"Dirac analysis: omega_D={data.omega_d:.8f}, C_D={cd:.6f}, theta_sharp={theta_sharp}, "
            f"beta1={beta1:.6e}, beta2={beta2:.6e} ({time.time() - start:.2f}s)"
        )
        return data

    async def conical_fit(
        self,
        weight: MaterialWeight,
        data: DiracPointData,
        radii: Sequence[float] = DEFAULT_RADII,
        directions: int = DEFAULT_DIRECTIONS,
    ) -> ConicalFit:
        """
        Sample omega_b, omega_b+1 at K + r d and extrapolate the gap / 2r to r -> 0.

        Raises:
            NumericalError: if a third band touches the cone inside the sampled radii
        """
        radii = np.asarray(sorted(radii), dtype=float)
        angles = np.pi * np.arange(directions) / (directions / 2.0)
        units = np.column_stack([np.cos(angles), np.sin(angles)])
        K = np.asarray(data.k)
        k_points = np.array([K + r * d for d in units for r in radii])
        b = data.band
        table = await self.band_service.band_surface_sweep(weight, k_points, b + 2)
        omegas = table.omegas.reshape(directions, len(radii), b + 2)

        lower = omegas[..., b - 1]
        upper = omegas[..., b]
        third = omegas[..., b + 1]
        touch = Config.DEGENERACY_RTOL * data.omega_d
        if np.any(third - upper <= touch):
            raise NumericalError("A third band crosses the cone inside the sampled radii; reduce the radii")
        if b >= 2 and np.any(lower - omegas[..., b - 2] <= touch):
            raise NumericalError("A lower band crosses the cone inside the sampled radii; reduce the radii")

        slopes_upper = (upper - data.omega_d) / radii
        slopes_lower = (data.omega_d - lower) / radii
        half_gap = (upper - lower) / (2.0 * radii)
        if len(radii) >= 2:
            intercepts = np.array([np.polyfit(radii, row, 1)[-1] for row in half_gap])
        else:
            intercepts = half_gap[:, 0]

        fitted = float(np.mean(intercepts))
        spread = float((intercepts.max() - intercepts.min()) / max(abs(fitted), 1e-300))
        reference = data.cd if data.cd > ZERO_CONE else fitted
        residual = np.maximum(np.abs(slopes_upper - reference), np.abs(slopes_lower - reference))
        return ConicalFit(
            directions=units,
            radii=radii,
            slopes_upper=slopes_upper,
            slopes_lower=slopes_lower,
            intercepts=intercepts,
            fitted_cd=fitted,
            spread=spread,
            residual_bound=float(residual.max()),
        )

    def _gap_at(self, weight: MaterialWeight, perturbation: PerturbationWeight, delta: float, band: int) -> float:
        w = weight if delta == 0.0 else perturbed(weight, perturbation, delta)
        problem = dirac_problem(w, self.truncation, self.quadrature, self.lattice)
        omegas = solve_bands(problem, band + 1).omegas
        return float(omegas[band] - omegas[band - 1])

    async def gap_sweep(
        self,
        weight: MaterialWeight,
        perturbation: PerturbationWeight,
        deltas: Sequence[float],
        band: int = 1,
        theta_sharp: Optional[float] = None,
    ) -> Dict[str, Any]:
        """
        Local gap omega_b+1(K) - omega_b(K) of W + delta V for each delta.

        Returns:
            rows (delta, gap), the linear fit and, with theta_sharp, the ratios gap / (2|theta| delta)
        """
        deltas = [float(d) for d in deltas]
        logger.info(f"Gap sweep over {len(deltas)} perturbation strengths")
        gaps = await asyncio.gather(*[
            asyncio.to_thread(self._gap_at, weight, perturbation, d, band) for d in deltas
        ])
        result: Dict[str, Any] = {"rows": list(zip(deltas, gaps))}
        if len(deltas) >= 2:
            fit = stats.linregress(deltas, gaps)
            result.update({"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue ** 2)})
        if theta_sharp:
            result["ratios"] = [
                (d, g / (2.0 * abs(theta_sharp) * abs(d))) for d, g in zip(deltas, gaps) if d != 0.0
            ]
        return result

    def _low_contrast_point(self, w1: MaterialWeight, epsilon: float) -> Dict[str, Any]:
        weight = low_contrast_weight(w1, epsilon)
        problem = dirac_problem(weight, self.truncation, self.quadrature, self.lattice)
        solution = solve_bands(problem, max(self.bands, 4))
        decomposition = decompose_rotation_eigenspaces(solution.pairs[:3])
        simple = [p.omega for p, s in zip(decomposition.pairs, decomposition.labels) if s == "1"]
        candidate = locate_dirac_point(problem, max(self.bands, 4))
        psi1, psi2, _ = fix_phase(candidate)
        return {
            "epsilon": epsilon,
            "omega_pair": candidate.omega,
            "omega_simple": simple[0] if simple else float("nan"),
            "cd": compute_cd(psi1, psi2),
        }

    async def low_contrast_validate(self, w1: MaterialWeight, epsilons: Sequence[float]) -> Dict[str, Any]:
        """
        Compare the numerical tau/tau_bar pair, the sigma = 1 branch and C_D of
        I + eps W1 against first-order values.

        Epsilons are expected in halving order for the Richardson ratios.
        """
        prediction = low_contrast_prediction(w1, self.lattice)
        points = await asyncio.gather(*[
            asyncio.to_thread(self._low_contrast_point, w1, float(e)) for e in epsilons
        ])
        for point in points:
            eps = point["epsilon"]
            point["predicted_pair"] = prediction.pair(eps)
            point["predicted_simple"] = prediction.simple(eps)
            point["closed_form_pair"] = prediction.closed_form(eps)
            point["pair_error"] = abs(point["omega_pair"] - point["predicted_pair"])
            point["simple_error"] = abs(point["omega_simple"] - point["predicted_simple"])
            point["cd_deviation"] = abs(point["cd"] - 0.5)

        eps = [p["epsilon"] for p in points]
        pair_errors = [p["pair_error"] for p in points]
        simple_errors = [p["simple_error"] for p in points]
        cd_deviation = [p["cd_deviation"] for p in points]
        return {
            "omega0": prediction.omega0,
            "pair_slope": prediction.pair_slope,
            "simple_slope": prediction.simple_slope,
            "closed_form_slope": prediction.closed_form_slope,
            "nondegeneracy": prediction.nondegeneracy,
            "points": points,
            "pair_error_ratios": _richardson(pair_errors),
            "simple_error_ratios": _richardson(simple_errors),
            "cd_deviation_ratios": _richardson(cd_deviation),
            "pair_error_slope": _loglog_slope(eps, pair_errors),
            "simple_error_slope": _loglog_slope(eps, simple_errors),
            "cd_deviation_slope": _loglog_slope(eps, cd_deviation),
        }

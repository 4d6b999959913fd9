"""
Time-domain TE Maxwell on a rectangular honeycomb supercell

    d_t Psi = i W_e(x) L Psi,   W_e = W + delta kappa(delta x) V

with spectral derivatives and RK4, wave packets assembled from the Dirac pair,
and the comparison of the packet's transport against the envelope prediction.
"""
import asyncio
import logging
import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel

from config import Config
from errors import ConfigError, NumericalError
from services.bloch_service import BlochField
from services.dirac_service import DiracPointData
from services.envelope_service import (
    EnvelopeField,
    EnvelopeGrid,
    EnvelopeService,
    EnvelopeTrajectory,
    build_mass,
    curved_edge_initial,
    double_wall,
    periodic_center,
    stability_bound,
    wrap_coordinate,
)
from services.integrator import RK4_IMAGINARY_LIMIT, is_finite, rk4_step
from services.lattice_service import SQRT3, build_hex_lattice
from services.material_service import MaterialWeight, PerturbationWeight

logger = logging.getLogger(__name__)

# dt * lambda_max as a fraction of the RK4 limit when the step is chosen automatically
STEP_SAFETY = 0.9
COMMENSURATE_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class Supercell:
    """
    n1 x n2 rectangular cells of size sqrt(3) x 1, each holding two primitive cells,
    sampled with r1 x r2 points per cell. Arrays are indexed [ix, iy], x starts at 0.
    """
    n1: int
    n2: int
    r1: int
    r2: int

    def __post_init__(self):
        if min(self.n1, self.n2, self.r1, self.r2) < 1:
            raise ConfigError(f"Supercell sizes must be positive, got {self.n1}x{self.n2} cells, {self.r1}x{self.r2} points")
        if self.n2 % 3 != 0:
            raise ConfigError(f"n2 must be a multiple of 3 for e^(iK.x) to be periodic, got {self.n2}")

    @property
    def nx(self) -> int:
        return self.n1 * self.r1

    @property
    def ny(self) -> int:
        return self.n2 * self.r2

    @property
    def lx(self) -> float:
        return self.n1 * SQRT3

    @property
    def ly(self) -> float:
        return float(self.n2)

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def center(self) -> Tuple[float, float]:
        return 0.5 * self.lx, 0.5 * self.ly

    @cached_property
    def x(self) -> NDArray:
        return self.dx * np.arange(self.nx)

    @cached_property
    def y(self) -> NDArray:
        return self.dy * np.arange(self.ny)

    @cached_property
    def mesh(self) -> Tuple[NDArray, NDArray]:
        return tuple(np.meshgrid(self.x, self.y, indexing="ij"))

    @cached_property
    def points(self) -> NDArray:
        X, Y = self.mesh
        return np.stack([X, Y], axis=-1)

    @cached_property
    def wavenumbers(self) -> Tuple[NDArray, NDArray]:
        qx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        qy = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)
        return tuple(np.meshgrid(qx, qy, indexing="ij"))

    @property
    def max_wavenumber(self) -> float:
        qx, qy = self.wavenumbers
        return float(np.sqrt(np.max(qx ** 2) + np.max(qy ** 2)))

    def frequencies(self, q: NDArray) -> NDArray:
        """Integer FFT frequencies of momenta q (n, 2); raises if not commensurate."""
        f = np.asarray(q, dtype=float) * np.array([self.lx, self.ly]) / (2.0 * np.pi)
        rounded = np.round(f)
        mismatch = float(np.max(np.abs(f - rounded), initial=0.0))
        if mismatch > COMMENSURATE_TOLERANCE:
            raise ConfigError(f"Momenta are not commensurate with the {self.n1}x{self.n2} supercell (off by {mismatch:.2e})")
        return rounded.astype(int)


# ============================================================================
# WEIGHT AND STATE
# ============================================================================
@dataclass(frozen=True, eq=False)
class ModulatedWeight:
    """W_e = W + delta kappa(delta x) V sampled on a supercell; kappa is a vertical double wall at x_c"""
    supercell: Supercell
    weight: MaterialWeight
    perturbation: PerturbationWeight
    delta: float
    values: NDArray  # (nx, ny, 3, 3)
    kappa: NDArray  # (nx, ny)
    edge_x: float

    @cached_property
    def inverse(self) -> NDArray:
        return np.linalg.inv(self.values)

    @property
    def max_eigenvalue(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.values)))


def build_modulated_weight(
    supercell: Supercell,
    weight: MaterialWeight,
    perturbation: PerturbationWeight,
    delta: float,
    edge_x: Optional[float] = None,
) -> ModulatedWeight:
    """
    Sample W_e on the supercell grid.

    kappa(delta x) = tanh(delta (x - x_c)) periodized as a double wall, with the
    compensating wall half a period away.

    Raises:
        ConfigError: for delta <= 0 or a W_e that is not positive definite
    """
    if delta <= 0:
        raise ConfigError(f"Modulation scale delta must be positive, got {delta}")
    edge_x = supercell.center[0] if edge_x is None else edge_x
    points = supercell.points
    X, _ = supercell.mesh
    length = delta * supercell.lx
    kappa = double_wall(wrap_coordinate(delta * (X - edge_x), length), length)
    values = np.asarray(weight.eval_W(points), dtype=complex)
    values = values + delta * kappa[..., None, None] * np.asarray(perturbation.eval_V(points), dtype=complex)

    lowest = float(np.min(np.linalg.eigvalsh(values)))
    if lowest <= 0:
        raise ConfigError(f"W_e is not positive definite (min eigenvalue {lowest:.3e}); reduce delta")
    logger.info(f"Modulated weight on {supercell.nx}x{supercell.ny}: delta={delta}, min eigenvalue {lowest:.4f}")
    return ModulatedWeight(
        supercell=supercell,
        weight=weight,
        perturbation=perturbation,
        delta=delta,
        values=values,
        kappa=kappa,
        edge_x=edge_x,
    )


@dataclass(frozen=True, eq=False)
class MaxwellState:
    """Psi = (psi1, psi2, psi3) stacked as (3, nx, ny)"""
    supercell: Supercell
    fields: NDArray
    time: float = 0.0

    def energy_density(self, modulated: ModulatedWeight) -> NDArray:
        """Psi* W_e^-1 Psi."""
        return np.real(np.einsum("ixy,xyij,jxy->xy", np.conj(self.fields), modulated.inverse, self.fields))

    def energy(self, modulated: ModulatedWeight) -> float:
        return float(np.sum(self.energy_density(modulated)) * self.supercell.cell_area)


@dataclass(frozen=True)
class MaxwellObservables:
    time: float
    energy: float
    center: Tuple[float, float]
    edge_fraction: float
    periodic_center: Optional[Tuple[float, float]] = None

    def row(self) -> Tuple[float, float, float, float, float]:
        return self.time, self.energy, self.center[0], self.center[1], self.edge_fraction


@dataclass(frozen=True, eq=False)
class MaxwellTrajectory:
    final: MaxwellState
    observables: List[MaxwellObservables]
    snapshots: List[MaxwellState] = field(default_factory=list)

    def rows(self) -> List[Tuple[float, float, float, float, float]]:
        """CSV rows t, energy, cx, cy, edge_fraction."""
        return [o.row() for o in self.observables]


# ============================================================================
# BLOCH SYNTHESIS AND PACKETS
# ============================================================================
def synthesize_bloch_field(supercell: Supercell, psi: BlochField) -> Tuple[NDArray, float]:
    """
    Psi(x) = sum_m u_m e^{i(k + G_m).x} on the supercell grid, shape (3, nx, ny).

    Coefficients beyond the grid's Nyquist band are dropped; the second return
    value is the dropped fraction of the W-energy.
    """
    problem = psi.problem
    freqs = supercell.frequencies(problem.momenta)
    keep = (2 * np.abs(freqs[:, 0]) < supercell.nx) & (2 * np.abs(freqs[:, 1]) < supercell.ny)

    grid = np.zeros((3, supercell.nx, supercell.ny), dtype=complex)
    kept = freqs[keep]
    np.add.at(grid, (slice(None), kept[:, 0] % supercell.nx, kept[:, 1] % supercell.ny), psi.coeffs[keep].T)
    values = np.fft.ifft2(grid, axes=(-2, -1)) * (supercell.nx * supercell.ny)

    dropped_fraction = 0.0
    if not np.all(keep):
        dropped = np.where(keep[:, None], 0.0, psi.coeffs).reshape(-1)
        total = np.real(np.vdot(psi.vector, problem.B @ psi.vector))
        dropped_fraction = float(np.real(np.vdot(dropped, problem.B @ dropped)) / total) if total > 0 else 0.0
        logger.warning(
            f"Dropped {int(np.sum(~keep))} of {len(keep)} plane waves beyond Nyquist "
            f"({dropped_fraction:.3e} of the W-energy)"
        )
    return values, dropped_fraction


def plane_wave(supercell: Supercell, frequency: Tuple[int, int]) -> Tuple[MaxwellState, float]:
    """Free-space eigenmode (-q/|q|, 1) e^{iq.x} / sqrt(2) with its frequency |q|."""
    q = 2.0 * np.pi * np.array(frequency, dtype=float) / np.array([supercell.lx, supercell.ly])
    norm = float(np.linalg.norm(q))
    if norm == 0:
        raise ConfigError("Plane wave needs a nonzero frequency")
    X, Y = supercell.mesh
    phase = np.exp(1j * (q[0] * X + q[1] * Y))
    zeta = np.array([-q[0] / norm, -q[1] / norm, 1.0]) / np.sqrt(2.0)
    return MaxwellState(supercell=supercell, fields=zeta[:, None, None] * phase[None]), norm


def resample_periodic(values: NDArray, shape: Tuple[int, int]) -> NDArray:
    """Trigonometric interpolation of periodic samples (..., m1, m2) onto (..., n1, n2) over the same period."""
    values = np.asarray(values, dtype=complex)
    m1, m2 = values.shape[-2:]
    n1, n2 = shape
    spectrum = np.fft.fft2(values, axes=(-2, -1)) / (m1 * m2)
    f1 = np.round(np.fft.fftfreq(m1) * m1).astype(int)
    f2 = np.round(np.fft.fftfreq(m2) * m2).astype(int)
    keep1 = 2 * np.abs(f1) < min(m1, n1)
    keep2 = 2 * np.abs(f2) < min(m2, n2)
    target = np.zeros(values.shape[:-2] + (n1, n2), dtype=complex)
    rows = (f1[keep1] % n1)[:, None]
    cols = (f2[keep2] % n2)[None, :]
    target[..., rows, cols] = spectrum[..., np.where(keep1)[0][:, None], np.where(keep2)[0][None, :]]
    return np.fft.ifft2(target, axes=(-2, -1)) * (n1 * n2)


def boundary_ratio(beta: NDArray) -> float:
    """max |beta| on the outer frame of the grid relative to max |beta|."""
    magnitude = np.sqrt(np.sum(np.abs(beta) ** 2, axis=0))
    peak = float(np.max(magnitude, initial=0.0))
    if peak == 0.0:
        return 0.0
    frame = max(magnitude[0].max(), magnitude[-1].max(), magnitude[:, 0].max(), magnitude[:, -1].max())
    return float(frame / peak)


@dataclass(frozen=True, eq=False)
class WavePacket:
    state: MaxwellState
    beta: NDArray  # (2, nx, ny) envelope sampled on the supercell
    dropped_fraction: float
    boundary_ratio: float


def assemble_packet(
    supercell: Supercell,
    psi1: BlochField,
    psi2: BlochField,
    envelope: EnvelopeField,
    decay_tolerance: float = None,
) -> WavePacket:
    """
    Psi_0 = beta1(delta x) Psi1 + beta2(delta x) Psi2.

    `envelope` lives on the rescaled grid covering the supercell, its first sample
    sitting at x = 0; it is resampled onto the Maxwell grid spectrally.

    Raises:
        ConfigError: if the envelope has not decayed at the supercell boundary
    """
    decay_tolerance = Config.PACKET_DECAY_TOLERANCE if decay_tolerance is None else decay_tolerance
    beta = resample_periodic(envelope.alpha, (supercell.nx, supercell.ny))
    ratio = boundary_ratio(beta)
    if ratio > decay_tolerance:
        raise ConfigError(
            f"Envelope has not decayed at the supercell boundary ({ratio:.3e} > {decay_tolerance:.1e}); "
            f"enlarge the supercell or delta"
        )
    field1, dropped1 = synthesize_bloch_field(supercell, psi1)
    field2, dropped2 = synthesize_bloch_field(supercell, psi2)
    fields = beta[0][None] * field1 + beta[1][None] * field2
    return WavePacket(
        state=MaxwellState(supercell=supercell, fields=fields),
        beta=beta,
        dropped_fraction=max(dropped1, dropped2),
        boundary_ratio=ratio,
    )


def packet_energy_ratio(packet: WavePacket, modulated: ModulatedWeight, cell_area: float) -> float:
    """int Psi* W^-1 Psi over (1/|Omega|) int |beta|^2, close to one for slowly varying beta."""
    envelope_energy = float(np.sum(np.abs(packet.beta) ** 2) * packet.state.supercell.cell_area) / cell_area
    return packet.state.energy(modulated) / envelope_energy if envelope_energy > 0 else float("nan")


# ============================================================================
# EVOLUTION
# ============================================================================
def maxwell_rhs(modulated: ModulatedWeight):
    """d_t Psi = i W_e L Psi with L hat = (-qx psi3, -qy psi3, -qx psi1 - qy psi2)."""
    qx, qy = modulated.supercell.wavenumbers
    w = modulated.values

    def rhs(psi: NDArray) -> NDArray:
        hat = np.fft.fft2(psi, axes=(-2, -1))
        curl = np.fft.ifft2(np.stack([-qx * hat[2], -qy * hat[2], -qx * hat[0] - qy * hat[1]]), axes=(-2, -1))
        return 1j * np.einsum("xyij,jxy->ixy", w, curl)

    return rhs


def maxwell_stability_bound(modulated: ModulatedWeight) -> float:
    """lambda_max = max eig(W_e) |q|_max."""
    return modulated.max_eigenvalue * modulated.supercell.max_wavenumber


def maxwell_observables(state: MaxwellState, modulated: ModulatedWeight, mask: NDArray) -> MaxwellObservables:
    density = state.energy_density(modulated)
    total = float(np.sum(density))
    cell = state.supercell
    if total == 0.0:
        return MaxwellObservables(time=state.time, energy=0.0, center=cell.center, edge_fraction=0.0)
    X, Y = cell.mesh
    return MaxwellObservables(
        time=state.time,
        energy=total * cell.cell_area,
        center=(float(np.sum(density * X) / total), float(np.sum(density * Y) / total)),
        edge_fraction=float(np.sum(density[mask]) / total),
        periodic_center=periodic_center(density, (X, Y), (cell.lx, cell.ly), cell.center),
    )


def edge_tube(modulated: ModulatedWeight, half_width: float) -> NDArray:
    """|x - x_c| <= w / delta, measured periodically."""
    cell = modulated.supercell
    X, _ = cell.mesh
    return np.abs(wrap_coordinate(X - modulated.edge_x, cell.lx)) <= half_width / modulated.delta


def evolve_linear(
    state: MaxwellState,
    modulated: ModulatedWeight,
    dt: float,
    steps: int,
    cadence: int = 10,
    snapshot_cadence: int = 0,
    tube_half_width: float = 5.0,
) -> MaxwellTrajectory:
    """
    Advance Psi with RK4, recording weighted-energy observables every `cadence` steps.

    Raises:
        ConfigError: unstable dt or mismatched supercell
        NumericalError: blow-up, with the last stable state on `error.last_state`
    """
    if state.supercell is not modulated.supercell and state.fields.shape[1:] != modulated.values.shape[:2]:
        raise ConfigError("State and modulated weight live on different supercells")
    if dt <= 0 or steps < 0:
        raise ConfigError(f"Need dt > 0 and steps >= 0, got dt={dt}, steps={steps}")
    lam = maxwell_stability_bound(modulated)
    if dt * lam > RK4_IMAGINARY_LIMIT:
        raise ConfigError(f"Time step {dt} unstable: dt * lambda_max = {dt * lam:.3f} exceeds {RK4_IMAGINARY_LIMIT:.3f}")

    rhs = maxwell_rhs(modulated)
    mask = edge_tube(modulated, tube_half_width)
    psi = np.asarray(state.fields, dtype=complex)
    t0 = state.time
    series = [maxwell_observables(state, modulated, mask)]
    snapshots = [state] if snapshot_cadence else []
    start = time.time()
    logger.info(f"Maxwell evolution: {steps} steps of dt={dt:.3e} on {state.supercell.nx}x{state.supercell.ny}")

    for step in range(1, steps + 1):
        advanced = rk4_step(rhs, psi, dt)
        if not is_finite(advanced):
            last = replace(state, fields=psi, time=t0 + (step - 1) * dt)
            error = NumericalError(
                f"Maxwell evolution blew up at step {step} (t={t0 + step * dt:.4f})",
                detail={"step": step, "time": last.time},
            )
            error.last_state = last
            raise error
        psi = advanced
        record = step % cadence == 0 or step == steps
        keep = bool(snapshot_cadence) and step % snapshot_cadence == 0
        if record or keep:
            current = replace(state, fields=psi, time=t0 + step * dt)
            if record:
                series.append(maxwell_observables(current, modulated, mask))
            if keep:
                snapshots.append(current)

    final = replace(state, fields=psi, time=t0 + steps * dt)
    e0 = series[0].energy
    drift = abs(series[-1].energy - e0) / e0 if e0 > 0 else 0.0
    logger.info(f"Maxwell evolution finished in {time.time() - start:.2f}s, relative energy drift {drift:.2e}")
    return MaxwellTrajectory(final=final, observables=series, snapshots=snapshots)


# ============================================================================
# COMPARISON
# ============================================================================
@dataclass(frozen=True)
class EnvelopeMapping:
    """x = x_c + C_D X~ / delta, t = T / delta"""
    x_c: float
    y_c: float
    delta: float
    cd: float

    def position(self, center: Tuple[float, float]) -> Tuple[float, float]:
        scale = self.cd / self.delta
        return self.x_c + scale * center[0], self.y_c + scale * center[1]

    def time(self, slow_time: float) -> float:
        return slow_time / self.delta

    def envelope_grid(self, supercell: Supercell, n1: int, n2: int) -> EnvelopeGrid:
        scale = self.delta / self.cd
        return EnvelopeGrid(lx1=scale * supercell.lx, lx2=scale * supercell.ly, n1=n1, n2=n2)


class ComparisonReport(BaseModel):
    """Maxwell packet transport against the envelope prediction"""
    times: List[float]
    maxwell_centers: List[Tuple[float, float]]
    envelope_centers: List[Tuple[float, float]]
    centroid_discrepancy: float
    travelled: float
    relative_discrepancy: float
    profile_correlation: float
    maxwell_edge_fraction: List[float]
    envelope_edge_fraction: List[float]
    energy_drift: float
    energy_ratio: Optional[float] = None
    dropped_fraction: float = 0.0
    boundary_ratio: float = 0.0
    refinement: str = "none"
    refinement_shift: Optional[float] = None


def _marginal_y(density: NDArray, axis: int = 0) -> NDArray:
    return np.sum(density, axis=axis)


def track_centers(observables: Sequence, lengths: Tuple[float, float]) -> NDArray:
    """Periodic centres unwrapped along a sampled series; plain centres where none were recorded."""
    centers = np.array(
        [o.periodic_center if o.periodic_center is not None else o.center for o in observables], dtype=float
    )
    for axis, length in enumerate(lengths):
        centers[:, axis] = np.unwrap(centers[:, axis], period=length)
    return centers


def compare_with_envelope(
    maxwell: MaxwellTrajectory,
    envelope: EnvelopeTrajectory,
    modulated: ModulatedWeight,
    mapping: EnvelopeMapping,
) -> ComparisonReport:
    """
    Centroid discrepancy relative to the distance travelled, profile correlation of the
    final marginals along the edge, and edge fractions over time.

    Raises:
        ConfigError: when the two trajectories are sampled differently
    """
    if len(maxwell.observables) != len(envelope.observables):
        raise ConfigError(
            f"Trajectory lengths differ: Maxwell {len(maxwell.observables)}, envelope {len(envelope.observables)}"
        )
    times = [o.time for o in maxwell.observables]
    for m_obs, e_obs in zip(maxwell.observables, envelope.observables):
        if not math.isclose(m_obs.time, mapping.time(e_obs.time), rel_tol=1e-9, abs_tol=1e-9):
            raise ConfigError(f"Sample times differ: Maxwell t={m_obs.time}, envelope t={mapping.time(e_obs.time)}")

    cell = modulated.supercell
    env_grid = envelope.final.grid
    maxwell_centers = track_centers(maxwell.observables, (cell.lx, cell.ly))
    envelope_track = track_centers(envelope.observables, (env_grid.lx1, env_grid.lx2))
    envelope_centers = np.array([mapping.position(c) for c in envelope_track])
    discrepancy = float(np.max(np.linalg.norm(maxwell_centers - envelope_centers, axis=1)))
    travelled = float(np.linalg.norm(envelope_centers[-1] - envelope_centers[0]))
    relative = discrepancy / max(travelled, cell.dy)

    maxwell_profile = _marginal_y(maxwell.final.energy_density(modulated))
    env_y = mapping.y_c + mapping.cd * env_grid.x2 / mapping.delta
    env_profile = np.interp(cell.y, env_y, _marginal_y(envelope.final.energy_density), period=cell.ly)
    correlation = float(np.corrcoef(maxwell_profile, env_profile)[0, 1])

    e0 = maxwell.observables[0].energy
    drift = abs(maxwell.observables[-1].energy - e0) / e0 if e0 > 0 else 0.0
    logger.info(
        f"Comparison: centroid discrepancy {discrepancy:.4f} over {travelled:.4f} travelled, "
        f"profile correlation {correlation:.4f}"
    )
    return ComparisonReport(
        times=times,
        maxwell_centers=[tuple(c) for c in maxwell_centers.tolist()],
        envelope_centers=[tuple(c) for c in envelope_centers.tolist()],
        centroid_discrepancy=discrepancy,
        travelled=travelled,
        relative_discrepancy=relative,
        profile_correlation=correlation,
        maxwell_edge_fraction=[o.edge_fraction for o in maxwell.observables],
        envelope_edge_fraction=[o.edge_fraction for o in envelope.observables],
        energy_drift=drift,
    )


def refinement_shift(coarse: MaxwellTrajectory, fine: MaxwellTrajectory, travelled: float) -> float:
    """Largest centroid distance between two runs of the same packet, over max(travelled, dy)."""
    if len(coarse.observables) != len(fine.observables):
        raise ConfigError("Refinement runs are sampled differently")
    cell = coarse.final.supercell
    lengths = (cell.lx, cell.ly)
    shift = np.linalg.norm(track_centers(coarse.observables, lengths) - track_centers(fine.observables, lengths), axis=1)
    return float(np.max(shift) / max(travelled, cell.dy))


def _steps_per_sample(interval: float, bound: float) -> int:
    return max(1, math.ceil(interval * bound / (STEP_SAFETY * RK4_IMAGINARY_LIMIT)))


REFINEMENTS = {"none": None, "halve": 0.5, "double": 2.0}


@dataclass
class ComparisonSetup:
    """Supercell, modulation and sampling of a Maxwell / envelope comparison run"""
    n1: int = 32
    n2: int = 48
    r1: int = 8
    r2: int = 8
    delta: float = 0.1
    final_time: float = 5.0  # slow time T
    samples: int = 20
    tube_half_width: float = 1.0  # in slow units, |x - x_c| <= w / delta
    envelope_n1: int = 64
    envelope_n2: int = 64
    # both models share the periodic supercell, so the edge-normal tail need not decay
    decay_tolerance: Optional[float] = 1.0
    # companion Maxwell run at r/2 or 2r points per cell for the centroid-shift check
    refinement: str = "halve"

    def to_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)

    def companion_resolution(self) -> Optional[Tuple[int, int]]:
        """Per-cell points of the refinement run, or None when disabled."""
        if self.refinement not in REFINEMENTS:
            raise ConfigError(f"Unknown refinement '{self.refinement}', expected one of {sorted(REFINEMENTS)}")
        factor = REFINEMENTS[self.refinement]
        if factor is None:
            return None
        if factor < 1 and (self.r1 % 2 or self.r2 % 2 or min(self.r1, self.r2) < 4):
            raise ConfigError(f"Halving needs even per-cell resolutions of at least 4, got {self.r1}x{self.r2}")
        return int(self.r1 * factor), int(self.r2 * factor)


class MaxwellService:
    """Runs the Maxwell side of a comparison and the envelope side in parallel"""

    def __init__(self):
        self.envelope_service = EnvelopeService()
        self.lattice = build_hex_lattice()

    def _maxwell_run(
        self,
        supercell: Supercell,
        dirac: DiracPointData,
        weight: MaterialWeight,
        perturbation: PerturbationWeight,
        initial: EnvelopeField,
        setup: ComparisonSetup,
    ) -> Tuple[ModulatedWeight, WavePacket, MaxwellTrajectory]:
        """Modulate, assemble the packet and evolve to t = T / delta with `samples` records."""
        modulated = build_modulated_weight(supercell, weight, perturbation, setup.delta)
        packet = assemble_packet(supercell, dirac.psi1, dirac.psi2, initial, setup.decay_tolerance)
        t_final = setup.final_time / setup.delta
        cadence = _steps_per_sample(t_final / setup.samples, maxwell_stability_bound(modulated))
        logger.info(f"Maxwell run on {supercell.nx}x{supercell.ny}: {cadence} steps per sample")
        trajectory = evolve_linear(
            packet.state,
            modulated,
            t_final / (setup.samples * cadence),
            setup.samples * cadence,
            cadence,
            0,
            setup.tube_half_width,
        )
        return modulated, packet, trajectory

    async def run_comparison(
        self,
        dirac: DiracPointData,
        weight: MaterialWeight,
        perturbation: PerturbationWeight,
        setup: ComparisonSetup,
    ) -> Tuple[ComparisonReport, MaxwellTrajectory, EnvelopeTrajectory]:
        """
        Build the packet on the vertical edge, evolve both models to t = T / delta, compare.

        With a refinement, a companion Maxwell run at another per-cell resolution goes
        alongside, and the largest centroid shift between the two is reported relative to
        the distance travelled.

        Raises:
            ConfigError: missing theta_sharp, bad supercell, bad refinement or undecayed envelope
        """
        if dirac.theta_sharp is None or dirac.theta_sharp == 0:
            raise ConfigError("Comparison needs a Dirac point with a nonzero theta_sharp")
        if setup.samples < 1:
            raise ConfigError(f"Need at least one sample interval, got {setup.samples}")
        companion = setup.companion_resolution()

        start = time.time()
        supercell = Supercell(setup.n1, setup.n2, setup.r1, setup.r2)
        x_c, y_c = supercell.center
        mapping = EnvelopeMapping(x_c=x_c, y_c=y_c, delta=setup.delta, cd=dirac.cd)

        grid = mapping.envelope_grid(supercell, setup.envelope_n1, setup.envelope_n2)
        mass = build_mass(
            "double_wall",
            grid,
            amplitude=dirac.theta_sharp,
            steepness=dirac.cd,
            orientation="vertical",
        )
        initial = curved_edge_initial(grid, (0.0, 0.0), dirac.theta_sharp, dirac.cd, mass)

        e_bound = stability_bound(grid, mass.values, initial.alpha, 0.0, 0.0, True)
        e_cadence = _steps_per_sample(setup.final_time / setup.samples, e_bound)
        logger.info(
            f"Comparison to t={mapping.time(setup.final_time):.3f}: {setup.samples} samples, "
            f"{e_cadence} envelope steps per sample, refinement {setup.refinement}"
        )

        runs = [
            asyncio.to_thread(self._maxwell_run, supercell, dirac, weight, perturbation, initial, setup),
            asyncio.to_thread(
                self.envelope_service.evolve,
                initial,
                mass,
                setup.final_time / (setup.samples * e_cadence),
                setup.samples * e_cadence,
                True,
                e_cadence,
                0,
                setup.tube_half_width / dirac.cd,
            ),
        ]
        if companion is not None:
            companion_cell = Supercell(setup.n1, setup.n2, *companion)
            runs.append(asyncio.to_thread(self._maxwell_run, companion_cell, dirac, weight, perturbation, initial, setup))
        results = await asyncio.gather(*runs)
        (modulated, packet, maxwell_trajectory), envelope_trajectory = results[0], results[1]

        report = compare_with_envelope(maxwell_trajectory, envelope_trajectory, modulated, mapping)
        update = {
            "energy_ratio": packet_energy_ratio(packet, modulated, self.lattice.cell_area),
            "dropped_fraction": packet.dropped_fraction,
            "boundary_ratio": packet.boundary_ratio,
            "refinement": setup.refinement,
        }
        if companion is not None:
            update["refinement_shift"] = refinement_shift(maxwell_trajectory, results[2][2], report.travelled)
        report = report.model_copy(update=update)
        logger.info(f"Comparison finished in {time.time() - start:.2f}s")
        return report, maxwell_trajectory, envelope_trajectory

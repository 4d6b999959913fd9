"""
Pseudo-spectral RK4 evolution of the rescaled nonlinear Dirac envelope system

    i d_T alpha + (i s1 d_1 - i s2 d_2 + kappa s3) alpha + gamma(|a1|, |a2|) alpha = 0

with spatially varying mass kappa, plus mass builders, initial data and
transport observables.
"""
import asyncio
import logging
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from errors import ConfigError, NumericalError
from services.integrator import RK4_IMAGINARY_LIMIT, is_finite, rk4_step

logger = logging.getLogger(__name__)

ORIENTATIONS = ("horizontal", "vertical")
MASS_KINDS = ("straight_edge", "double_wall", "curved_edge", "custom")
EDGE_PRESETS = ("straight", "half_circle", "polyline")


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class EnvelopeGrid:
    """Periodic grid on [-L1/2, L1/2) x [-L2/2, L2/2); arrays are indexed [i1, i2]"""
    lx1: float
    lx2: float
    n1: int
    n2: int

    def __post_init__(self):
        if not (_is_power_of_two(self.n1) and _is_power_of_two(self.n2)):
            raise ConfigError(f"Envelope resolution must be powers of two, got {self.n1} x {self.n2}")
        if self.lx1 <= 0 or self.lx2 <= 0:
            raise ConfigError(f"Envelope extents must be positive, got {self.lx1} x {self.lx2}")

    @property
    def dx1(self) -> float:
        return self.lx1 / self.n1

    @property
    def dx2(self) -> float:
        return self.lx2 / self.n2

    @property
    def cell_area(self) -> float:
        return self.dx1 * self.dx2

    @cached_property
    def x1(self) -> NDArray:
        return -0.5 * self.lx1 + self.dx1 * np.arange(self.n1)

    @cached_property
    def x2(self) -> NDArray:
        return -0.5 * self.lx2 + self.dx2 * np.arange(self.n2)

    @cached_property
    def mesh(self) -> Tuple[NDArray, NDArray]:
        return tuple(np.meshgrid(self.x1, self.x2, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> Tuple[NDArray, NDArray]:
        k1 = 2.0 * np.pi * np.fft.fftfreq(self.n1, d=self.dx1)
        k2 = 2.0 * np.pi * np.fft.fftfreq(self.n2, d=self.dx2)
        return tuple(np.meshgrid(k1, k2, indexing="ij"))

    @property
    def max_wavenumber(self) -> float:
        k1, k2 = self.wavenumbers
        return float(np.sqrt(np.max(k1 ** 2) + np.max(k2 ** 2)))

    @property
    def center(self) -> Tuple[float, float]:
        return float(self.x1.mean()), float(self.x2.mean())

    def points(self) -> NDArray:
        X1, X2 = self.mesh
        return np.column_stack([X1.ravel(), X2.ravel()])


# ============================================================================
# MASS PROFILES
# ============================================================================
EdgeFunction = Callable[[NDArray], NDArray]


def straight_edge_function(offset: float = 0.0) -> EdgeFunction:
    return lambda t: np.full_like(np.asarray(t, dtype=float), offset)


def half_circle_function(radius: float, center: float = 0.0, offset: float = 0.0) -> EdgeFunction:
    """A half-circle bump of the given radius joined to straight lines on both sides."""
    def f(t):
        s = np.asarray(t, dtype=float) - center
        return offset + np.sqrt(np.clip(radius ** 2 - s ** 2, 0.0, None))
    return f


def polyline_function(vertices: Sequence[Tuple[float, float]]) -> EdgeFunction:
    """End-to-end straight segments through (t, f) vertices, constant beyond the ends."""
    if len(vertices) < 2:
        raise ConfigError("A polyline edge needs at least two vertices")
    pts = np.array(sorted(vertices), dtype=float)
    if np.any(np.diff(pts[:, 0]) <= 0):
        raise ConfigError("Polyline vertices must have distinct edge-parameter coordinates")
    return lambda t: np.interp(np.asarray(t, dtype=float), pts[:, 0], pts[:, 1])


def edge_function(preset: str, radius: float = 10.0, vertices: Optional[Sequence] = None, offset: float = 0.0) -> EdgeFunction:
    if preset == "straight":
        return straight_edge_function(offset)
    if preset == "half_circle":
        return half_circle_function(radius, offset=offset)
    if preset == "polyline":
        return polyline_function(vertices or [])
    raise ConfigError(f"Unknown edge preset '{preset}', expected one of {EDGE_PRESETS}")


@dataclass(frozen=True, eq=False)
class MassProfile:
    """
    Mass kappa sampled on a grid with its edge curve.

    horizontal: edge X2 = f(X1), kappa = A tanh(s (f - X2)), negative above the edge
    vertical:   edge X1 = f(X2), kappa = A tanh(s (X1 - f)), positive right of the edge
    """
    kind: str
    grid: EnvelopeGrid
    values: NDArray
    eval_kappa: Callable[[NDArray, NDArray], NDArray]
    amplitude: float = 1.0
    steepness: float = 1.0
    orientation: str = "horizontal"
    edge: Optional[EdgeFunction] = None
    periodic: bool = True

    @cached_property
    def edge_points(self) -> NDArray:
        """Dense samples of the physical edge curve inside the domain."""
        if self.edge is None:
            return np.zeros((0, 2))
        g = self.grid
        if self.orientation == "horizontal":
            t = np.linspace(g.x1[0], g.x1[-1] + g.dx1, 8 * g.n1 + 1)
            return np.column_stack([t, self.edge(t)])
        t = np.linspace(g.x2[0], g.x2[-1] + g.dx2, 8 * g.n2 + 1)
        return np.column_stack([self.edge(t), t])

    @cached_property
    def edge_tree(self) -> cKDTree:
        return cKDTree(self.edge_points)

    def distance_to_edge(self, points: NDArray) -> NDArray:
        if self.edge is None:
            raise ConfigError(f"Mass '{self.kind}' has no declared edge curve")
        distance, _ = self.edge_tree.query(np.asarray(points, dtype=float))
        return distance

    def tube_mask(self, half_width: float) -> NDArray:
        g = self.grid
        return (self.distance_to_edge(g.points()) <= half_width).reshape(g.n1, g.n2)

    def edge_coordinate(self, X1: NDArray, X2: NDArray, wrap: bool = True) -> NDArray:
        """Signed offset u from the edge along the normal axis, wrapped into [-L/2, L/2)."""
        if self.orientation == "horizontal":
            u, length = X2 - self.edge(X1), self.grid.lx2
        else:
            u, length = X1 - self.edge(X2), self.grid.lx1
        return wrap_coordinate(u, length) if wrap else u


def double_wall(u: NDArray, length: float, amplitude: float = 1.0, steepness: float = 1.0) -> NDArray:
    """
    Periodic domain wall A[tanh(s u) - tanh(s(u - L/2)) - tanh(s(u + L/2))] for u wrapped
    into [-L/2, L/2); the compensating wall sits at u = +-L/2.
    """
    s = steepness
    walls = np.tanh(s * u) - np.tanh(s * (u - 0.5 * length)) - np.tanh(s * (u + 0.5 * length))
    return np.clip(amplitude * walls, -abs(amplitude), abs(amplitude))


def wrap_coordinate(u: NDArray, length: float) -> NDArray:
    return (u + 0.5 * length) % length - 0.5 * length


def _orientation_sign(orientation: str) -> float:
    if orientation not in ORIENTATIONS:
        raise ConfigError(f"Unknown edge orientation '{orientation}', expected one of {ORIENTATIONS}")
    return -1.0 if orientation == "horizontal" else 1.0


def build_mass(
    kind: str,
    grid: EnvelopeGrid,
    amplitude: float = 1.0,
    steepness: float = 1.0,
    orientation: str = "horizontal",
    preset: str = "straight",
    radius: float = 10.0,
    vertices: Optional[Sequence[Tuple[float, float]]] = None,
    offset: float = 0.0,
    custom: Optional[Callable[[NDArray, NDArray], NDArray]] = None,
) -> MassProfile:
    """
    Build a mass profile on the grid.

    Args:
        kind: straight_edge (plain tanh, not periodic), double_wall (wrapped with a
            compensating wall half a period away), curved_edge (double_wall around a
            preset curve) or custom
        amplitude: A, theta_sharp for the rescaled form
        steepness: s, C_D after rescaling
        orientation: horizontal or vertical edge
        preset: straight, half_circle or polyline edge curve
        custom: kappa(X1, X2) for kind=custom

    Returns:
        MassProfile with sampled values
    """
    if kind not in MASS_KINDS:
        raise ConfigError(f"Unknown mass kind '{kind}', expected one of {MASS_KINDS}")
    if steepness <= 0:
        raise ConfigError(f"Wall steepness must be positive, got {steepness}")
    sign = _orientation_sign(orientation)
    X1, X2 = grid.mesh

    if kind == "custom":
        if custom is None:
            raise ConfigError("Custom mass requires a kappa(X1, X2) callable")
        values = np.asarray(custom(X1, X2), dtype=float)
        if not (np.any(values > 0) and np.any(values < 0)):
            logger.warning("Custom mass never changes sign: no topological edge")
        return MassProfile(kind=kind, grid=grid, values=values, eval_kappa=custom, orientation=orientation)

    if kind == "curved_edge" and preset == "straight":
        raise ConfigError("curved_edge needs a half_circle or polyline preset")
    f = edge_function(preset, radius, vertices, offset)
    profile = MassProfile(
        kind=kind,
        grid=grid,
        values=np.zeros_like(X1),
        eval_kappa=lambda a, b: np.zeros_like(a),
        amplitude=amplitude,
        steepness=steepness,
        orientation=orientation,
        edge=f,
        periodic=kind != "straight_edge",
    )
    s, A = steepness, amplitude

    if kind == "straight_edge":
        def eval_kappa(a, b):
            return A * np.tanh(sign * s * profile.edge_coordinate(a, b, wrap=False))
    else:
        length = grid.lx2 if orientation == "horizontal" else grid.lx1

        def eval_kappa(a, b):
            return double_wall(profile.edge_coordinate(a, b), length, sign * A, s)

    return replace(profile, values=eval_kappa(X1, X2), eval_kappa=eval_kappa)


# ============================================================================
# FIELDS AND INITIAL DATA
# ============================================================================
@dataclass(frozen=True, eq=False)
class EnvelopeField:
    """alpha = (alpha1, alpha2) stacked as an array of shape (2, n1, n2)"""
    grid: EnvelopeGrid
    alpha: NDArray
    time: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    @property
    def alpha1(self) -> NDArray:
        return self.alpha[0]

    @property
    def alpha2(self) -> NDArray:
        return self.alpha[1]

    @property
    def energy_density(self) -> NDArray:
        return np.abs(self.alpha[0]) ** 2 + np.abs(self.alpha[1]) ** 2

    @property
    def norm(self) -> float:
        return float(np.sum(self.energy_density) * self.grid.cell_area)


@dataclass(frozen=True)
class TransportObservables:
    time: float
    norm: float
    center: Tuple[float, float]
    edge_fraction: float
    periodic_center: Optional[Tuple[float, float]] = None

    @property
    def leakage(self) -> float:
        return 1.0 - self.edge_fraction

    def row(self) -> Tuple[float, float, float, float, float]:
        return self.time, self.norm, self.center[0], self.center[1], self.edge_fraction


def linear_line_mode(
    grid: EnvelopeGrid,
    xi: float = 0.0,
    envelope: Optional[Callable[[NDArray], NDArray]] = None,
) -> EnvelopeField:
    """(1, 1) sech(X2) g(X1) e^{i xi X1} for the straight edge kappa = tanh(-X2)."""
    X1, X2 = grid.mesh
    g = np.ones_like(X1) if envelope is None else envelope(X1)
    if xi != 0.0 and abs((xi * grid.lx1 / (2.0 * np.pi)) - round(xi * grid.lx1 / (2.0 * np.pi))) > 1e-9:
        logger.warning(f"Carrier xi={xi} is not periodic on the X1 extent {grid.lx1}")
    profile = g * np.exp(1j * xi * X1) / np.cosh(X2)
    return EnvelopeField(grid=grid, alpha=np.stack([profile, profile]).astype(complex))


def gaussian(width: float, center: float = 0.0) -> Callable[[NDArray], NDArray]:
    return lambda x: np.exp(-((x - center) / width) ** 2)


def edge_packet(
    mass: MassProfile,
    center: float = 0.0,
    width: float = 4.0,
) -> EnvelopeField:
    """
    Linear edge state on the mass edge modulated by a Gaussian along the edge.

    Horizontal: (1, sgn A) sech^{|A|/s}(s u) g(X1 - c), travels along +sgn(A) X1.
    Vertical:   (1, -i sgn A) sech^{|A|/s}(s u) g(X2 - c), travels along +sgn(A) X2.
    """
    if mass.edge is None:
        raise ConfigError("Edge packets need a mass with a declared edge curve")
    X1, X2 = mass.grid.mesh
    A, s = mass.amplitude, mass.steepness
    u = mass.edge_coordinate(X1, X2)
    along = X1 if mass.orientation == "horizontal" else X2
    profile = np.cosh(s * u) ** (-abs(A) / s) * gaussian(width, center)(along)
    second = np.sign(A) if mass.orientation == "horizontal" else -1j * np.sign(A)
    return EnvelopeField(grid=mass.grid, alpha=np.stack([profile, second * profile]).astype(complex))


def curved_edge_initial(
    grid: EnvelopeGrid,
    center: Tuple[float, float],
    theta_sharp: float,
    cd: float,
    mass: Optional[MassProfile] = None,
) -> EnvelopeField:
    """
    Edge initial envelope for the vertical-edge comparison setup.

    Built in unscaled variables as (1, -i sgn theta) sech^{|theta|/C_D}(X1 - X10) e^{-0.2 (X2 - X20)^2},
    then expressed in the rescaled coordinates X~ = X / C_D of the grid.
    """
    if cd <= 0:
        raise ConfigError(f"C_D must be positive, got {cd}")
    if mass is not None and mass.edge is not None:
        distance = float(mass.distance_to_edge(np.array([center]))[0])
        if distance > max(grid.dx1, grid.dx2):
            logger.warning(f"Initial centre {center} is {distance:.3f} away from the edge")
    X1, X2 = grid.mesh
    exponent = abs(theta_sharp) / cd
    profile = np.cosh(cd * (X1 - center[0])) ** (-exponent) * np.exp(-0.2 * cd ** 2 * (X2 - center[1]) ** 2)
    second = -1j * (np.sign(theta_sharp) if theta_sharp != 0 else 1.0)
    return EnvelopeField(grid=grid, alpha=np.stack([profile, second * profile]).astype(complex))


def modulated_line_mode(
    chi: NDArray,
    grid: EnvelopeGrid,
    width: float,
    center: float = 0.0,
    p1: float = 0.0,
    p2: float = 0.0,
) -> EnvelopeField:
    """Broadcast a line profile chi of shape (2, 1, n2) over X1 with a Gaussian along the edge."""
    chi = np.asarray(chi)
    if chi.shape[-1] != grid.n2:
        raise ConfigError(f"Line profile has {chi.shape[-1]} points, grid has n2={grid.n2}")
    X1, _ = grid.mesh
    envelope = gaussian(width, center)(X1)
    alpha = chi.reshape(2, 1, grid.n2) * envelope[None]
    return EnvelopeField(grid=grid, alpha=alpha.astype(complex), p1=p1, p2=p2)


# ============================================================================
# OPERATORS
# ============================================================================
def nonlinearity(alpha: NDArray, p1: float, p2: float) -> NDArray:
    """Diagonal of gamma: (p1|a1|^2 + p2|a2|^2, p1|a2|^2 + p2|a1|^2)."""
    d1, d2 = np.abs(alpha[0]) ** 2, np.abs(alpha[1]) ** 2
    return np.stack([p1 * d1 + p2 * d2, p1 * d2 + p2 * d1])


def dirac_operator(alpha: NDArray, grid: EnvelopeGrid, kappa: NDArray) -> NDArray:
    """(i s1 d1 - i s2 d2 + kappa s3) alpha with spectral derivatives."""
    k1, k2 = grid.wavenumbers
    a_hat = np.fft.fft2(alpha, axes=(-2, -1))
    d1 = np.fft.ifft2(1j * k1 * a_hat, axes=(-2, -1))
    d2 = np.fft.ifft2(1j * k2 * a_hat, axes=(-2, -1))
    return np.stack([
        1j * d1[1] - d2[1] + kappa * alpha[0],
        1j * d1[0] + d2[0] - kappa * alpha[1],
    ])


def stationary_residual(chi: NDArray, mu: float, grid: EnvelopeGrid, kappa: NDArray, p1: float, p2: float) -> NDArray:
    """mu chi + (i s1 d1 - i s2 d2 + kappa s3) chi + gamma chi."""
    chi = np.asarray(chi, dtype=complex)
    return mu * chi + dirac_operator(chi, grid, kappa) + nonlinearity(chi, p1, p2) * chi


def envelope_rhs(grid: EnvelopeGrid, kappa: NDArray, p1: float, p2: float, linear_only: bool) -> Callable[[NDArray], NDArray]:
    """d_T alpha = i [(i s1 d1 - i s2 d2 + kappa s3) + gamma] alpha in Fourier-combined form."""
    k1, k2 = grid.wavenumbers
    upper = -1j * k1 + k2
    lower = -1j * k1 - k2

    def rhs(alpha: NDArray) -> NDArray:
        a_hat = np.fft.fft2(alpha, axes=(-2, -1))
        out = np.fft.ifft2(np.stack([upper * a_hat[1], lower * a_hat[0]]), axes=(-2, -1))
        potential = np.stack([kappa, -kappa])
        if not linear_only:
            potential = potential + nonlinearity(alpha, p1, p2)
        return out + 1j * potential * alpha

    return rhs


def stability_bound(grid: EnvelopeGrid, kappa: NDArray, state: NDArray, p1: float, p2: float, linear_only: bool) -> float:
    """lambda_max = |k|_max + max|kappa| + max gamma(alpha0)."""
    bound = grid.max_wavenumber + float(np.max(np.abs(kappa), initial=0.0))
    if not linear_only:
        bound += float(np.max(np.abs(nonlinearity(state, p1, p2)), initial=0.0))
    return bound


# ============================================================================
# OBSERVABLES AND EVOLUTION
# ============================================================================
def periodic_center(
    density: NDArray,
    coords: Tuple[NDArray, NDArray],
    lengths: Tuple[float, float],
    mids: Tuple[float, float],
) -> Tuple[float, float]:
    """
    Circular mean of a density on a periodic domain, in [mid - L/2, mid + L/2] per axis.

    Exact for rigid translations, so unwrapping a sampled series tracks packets across the boundary.
    """
    center = []
    for x, length, mid in zip(coords, lengths, mids):
        resultant = np.sum(density * np.exp(2j * np.pi * (x - mid) / length))
        center.append(mid + length * float(np.angle(resultant)) / (2.0 * np.pi))
    return center[0], center[1]


def observables(state: EnvelopeField, mass: Optional[MassProfile], tube_half_width: float = 5.0, mask: Optional[NDArray] = None) -> TransportObservables:
    """Norm, energy centre (plain and periodic) and the fraction of energy within the tube around the edge."""
    grid = state.grid
    density = state.energy_density
    total = float(np.sum(density))
    norm = total * grid.cell_area
    if total == 0.0:
        return TransportObservables(time=state.time, norm=0.0, center=grid.center, edge_fraction=0.0)
    X1, X2 = grid.mesh
    center = (float(np.sum(density * X1) / total), float(np.sum(density * X2) / total))
    if mask is None and mass is not None and mass.edge is not None:
        mask = mass.tube_mask(tube_half_width)
    fraction = float(np.sum(density[mask]) / total) if mask is not None else float("nan")
    periodic = periodic_center(density, (X1, X2), (grid.lx1, grid.lx2), (0.0, 0.0))
    return TransportObservables(time=state.time, norm=norm, center=center, edge_fraction=fraction, periodic_center=periodic)


@dataclass(frozen=True, eq=False)
class EnvelopeTrajectory:
    final: EnvelopeField
    observables: List[TransportObservables]
    snapshots: List[EnvelopeField] = field(default_factory=list)
    aborted: bool = False

    def rows(self) -> List[Tuple[float, float, float, float, float]]:
        """CSV rows T, norm, cx, cy, edge_fraction."""
        return [o.row() for o in self.observables]


class EnvelopeService:
    """Runs envelope evolutions; independent runs can go in parallel"""

    def evolve(
        self,
        state: EnvelopeField,
        mass: MassProfile,
        dt: float,
        steps: int,
        linear_only: bool = False,
        cadence: int = 10,
        snapshot_cadence: int = 0,
        tube_half_width: float = 5.0,
    ) -> EnvelopeTrajectory:
        """
        Advance the envelope with explicit RK4.

        Args:
            state: initial envelope, carries p1 and p2
            mass: mass on the same grid
            dt: time step, dt * lambda_max must stay below 2 sqrt(2)
            steps: number of steps
            linear_only: drop gamma
            cadence: observables every `cadence` steps (and at the end)
            snapshot_cadence: keep full fields every n steps, 0 for none

        Raises:
            ConfigError: unstable dt or grid mismatch
            NumericalError: blow-up, with the last stable state on `error.last_state`
        """
        if mass.grid is not state.grid and (mass.grid.n1, mass.grid.n2) != (state.grid.n1, state.grid.n2):
            raise ConfigError("Mass and state live on different grids")
        if dt <= 0 or steps < 0:
            raise ConfigError(f"Need dt > 0 and steps >= 0, got dt={dt}, steps={steps}")
        if not mass.periodic:
            logger.warning(f"Mass '{mass.kind}' is not periodic; the wrap-around jump will radiate")

        lam = stability_bound(state.grid, mass.values, state.alpha, state.p1, state.p2, linear_only)
        if dt * lam > RK4_IMAGINARY_LIMIT:
            raise ConfigError(
                f"Time step {dt} unstable: dt * lambda_max = {dt * lam:.3f} exceeds {RK4_IMAGINARY_LIMIT:.3f}"
            )

        rhs = envelope_rhs(state.grid, mass.values, state.p1, state.p2, linear_only)
        mask = mass.tube_mask(tube_half_width) if mass.edge is not None else None
        alpha = np.asarray(state.alpha, dtype=complex)
        t0 = state.time
        series = [observables(state, mass, tube_half_width, mask)]
        snapshots = [state] if snapshot_cadence else []
        start = time.time()
        logger.info(f"Envelope evolution: {steps} steps of dt={dt} on {state.grid.n1}x{state.grid.n2}, linear={linear_only}")

        for step in range(1, steps + 1):
            advanced = rk4_step(rhs, alpha, dt)
            if not is_finite(advanced):
                last = replace(state, alpha=alpha, time=t0 + (step - 1) * dt)
                error = NumericalError(
                    f"Envelope evolution blew up at step {step} (T={t0 + step * dt:.4f})",
                    detail={"step": step, "time": last.time},
                )
                error.last_state = last
                raise error
            alpha = advanced
            if step % cadence == 0 or step == steps or (snapshot_cadence and step % snapshot_cadence == 0):
                current = replace(state, alpha=alpha, time=t0 + step * dt)
                if step % cadence == 0 or step == steps:
                    series.append(observables(current, mass, tube_half_width, mask))
                if snapshot_cadence and step % snapshot_cadence == 0:
                    snapshots.append(current)

        final = replace(state, alpha=alpha, time=t0 + steps * dt)
        drift = abs(final.norm - state.norm) / state.norm if state.norm > 0 else 0.0
        logger.info(f"Envelope evolution finished in {time.time() - start:.2f}s, relative norm drift {drift:.2e}")
        return EnvelopeTrajectory(final=final, observables=series, snapshots=snapshots)

    async def evolve_many(self, runs: Sequence[Dict]) -> List[EnvelopeTrajectory]:
        """Evolve independent runs (keyword dicts for `evolve`) in parallel threads."""
        tasks = [asyncio.to_thread(self.evolve, **run) for run in runs]
        return list(await asyncio.gather(*tasks))


def energy_center_velocity(trajectory: EnvelopeTrajectory) -> Tuple[float, float]:
    """Least-squares velocity of the energy centre."""
    times = np.array([o.time for o in trajectory.observables])
    centers = np.array([o.center for o in trajectory.observables])
    if len(times) < 2:
        return 0.0, 0.0
    return float(np.polyfit(times, centers[:, 0], 1)[0]), float(np.polyfit(times, centers[:, 1], 1)[0])

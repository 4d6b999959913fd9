"""
Newton-conjugate-gradient solver for stationary modes alpha = e^{-i mu T} chi of the envelope system:

    mu chi + (i s1 d1 - i s2 d2 + kappa s3) chi + gamma(|chi1|, |chi2|) chi = 0

Line modes use a grid with n1 = 1 (d1 = 0); lumps use the full 2D grid.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.sparse.linalg import LinearOperator, cg

from config import NewtonSettings
from errors import ConfigError, NumericalError
from services.envelope_service import EnvelopeGrid, MassProfile, stationary_residual

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6
TRIVIAL_NORM = 1e-12
SHELL_FRACTION = 0.05
DECAY_TOLERANCE = 1e-8


class NewtonStep(NamedTuple):
    """Residual at one iterate, with the line-search step and CG status of the update that produced it"""
    iteration: int
    residual: float
    step: float
    cg_info: int
    cg_iterations: int


@dataclass(frozen=True, eq=False)
class StationaryMode:
    """Converged stationary mode chi of shape (2, n1, n2)"""
    mu: float
    chi: NDArray
    grid: EnvelopeGrid
    p1: float
    p2: float
    residual_norm: float
    iteration_log: List[NewtonStep] = field(default_factory=list)
    trivial: bool = False
    independent_residual: float = float("nan")

    @property
    def chi1(self) -> NDArray:
        return self.chi[0]

    @property
    def chi2(self) -> NDArray:
        return self.chi[1]

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.chi) ** 2) * _measure(self.grid))

    @property
    def asymmetry(self) -> float:
        total = np.sqrt(np.sum(np.abs(self.chi) ** 2))
        if total == 0:
            return 0.0
        return float(np.sqrt(np.sum((np.abs(self.chi[0]) - np.abs(self.chi[1])) ** 2)) / total)

    def sidecar(self) -> Dict[str, Any]:
        return {
            "mu": self.mu,
            "p1": self.p1,
            "p2": self.p2,
            "residual": self.residual_norm,
            "power": self.power,
            "asymmetry": self.asymmetry,
            "trivial": self.trivial,
            "iterations": len(self.iteration_log) - 1,
            "cg_stalls": sum(1 for entry in self.iteration_log if entry.cg_info > 0),
            "min_step": min((entry.step for entry in self.iteration_log[1:]), default=1.0),
        }


def _measure(grid: EnvelopeGrid) -> float:
    return grid.dx2 if grid.n1 == 1 else grid.cell_area


def discrete_norm(field_values: NDArray, grid: EnvelopeGrid) -> float:
    return float(np.sqrt(np.sum(np.abs(field_values) ** 2) * _measure(grid)))


class NewtonCG:
    """Newton iteration with CG on the normal equations of the real-linear Jacobian"""

    def __init__(self, grid: EnvelopeGrid, kappa: NDArray, mu: float, p1: float, p2: float, settings: NewtonSettings = None):
        self.grid = grid
        self.kappa = kappa
        self.mu = mu
        self.p1 = p1
        self.p2 = p2
        self.settings = settings or NewtonSettings()
        self.shape = (2, grid.n1, grid.n2)
        self.size = int(np.prod(self.shape))
        k1, k2 = grid.wavenumbers
        self.upper = -k1 - 1j * k2
        self.lower = -k1 + 1j * k2
        self.preconditioner_symbol = 1.0 / (self.settings.preconditioner_shift + k1 ** 2 + k2 ** 2)

    # real stacking (Re chi, Im chi)
    def pack(self, chi: NDArray) -> NDArray:
        return np.concatenate([chi.real.ravel(), chi.imag.ravel()])

    def unpack(self, v: NDArray) -> NDArray:
        return (v[: self.size] + 1j * v[self.size:]).reshape(self.shape)

    def _linear(self, chi: NDArray) -> NDArray:
        chi_hat = np.fft.fft2(chi, axes=(-2, -1))
        kinetic = np.fft.ifft2(np.stack([self.upper * chi_hat[1], self.lower * chi_hat[0]]), axes=(-2, -1))
        return self.mu * chi + kinetic + np.stack([self.kappa, -self.kappa]) * chi

    def _gamma(self, chi: NDArray) -> NDArray:
        d1, d2 = np.abs(chi[0]) ** 2, np.abs(chi[1]) ** 2
        return np.stack([self.p1 * d1 + self.p2 * d2, self.p1 * d2 + self.p2 * d1])

    def residual(self, chi: NDArray) -> NDArray:
        return self._linear(chi) + self._gamma(chi) * chi

    def jacobian(self, chi: NDArray, eta: NDArray) -> NDArray:
        """J eta = L0 eta + gamma(chi) eta + delta_gamma(eta) chi; real-linear and self-adjoint."""
        r1 = np.real(np.conj(chi[0]) * eta[0])
        r2 = np.real(np.conj(chi[1]) * eta[1])
        dgamma = 2.0 * np.stack([self.p1 * r1 + self.p2 * r2, self.p1 * r2 + self.p2 * r1])
        return self._linear(eta) + self._gamma(chi) * eta + dgamma * chi

    def precondition(self, v: NDArray) -> NDArray:
        field_values = self.unpack(v)
        smoothed = np.fft.ifft2(self.preconditioner_symbol * np.fft.fft2(field_values, axes=(-2, -1)), axes=(-2, -1))
        return self.pack(smoothed)

    def _line_search(self, chi: NDArray, delta: NDArray, rn: float) -> Tuple[NDArray, float, float]:
        """Backtrack alpha = 1, 1/2, ... until ||r(chi + alpha delta)|| <= (1 - c alpha) ||r(chi)||."""
        s = self.settings
        alpha = 1.0
        best = None
        while alpha >= s.min_step:
            trial = chi + alpha * delta
            tn = discrete_norm(self.residual(trial), self.grid)
            if np.isfinite(tn) and tn <= (1.0 - s.armijo * alpha) * rn:
                return trial, tn, alpha
            if np.isfinite(tn) and (best is None or tn < best[0]):
                best = (tn, trial, alpha)
            alpha *= 0.5
        if best is None:
            raise NumericalError("Line search met only non-finite residuals")
        logger.warning(f"Line search found no sufficient decrease; taking alpha={best[2]:.2e}")
        return best[1], best[0], best[2]

    def solve(self, guess: NDArray) -> Tuple[NDArray, float, List[NewtonStep]]:
        """
        Iterate to the outer tolerance with a backtracking line search on ||r||.

        Raises:
            NumericalError: on divergence or when max_iterations is reached
        """
        s = self.settings
        chi = np.asarray(guess, dtype=complex).reshape(self.shape).copy()
        log: List[NewtonStep] = []
        first = None
        size = 2 * self.size
        preconditioner = LinearOperator((size, size), matvec=self.precondition, dtype=float)
        r = self.residual(chi)
        rn = discrete_norm(r, self.grid)
        alpha, cg_info, cg_iterations = 0.0, 0, 0

        for iteration in range(s.max_iterations + 1):
            log.append(NewtonStep(iteration, rn, alpha, cg_info, cg_iterations))
            first = rn if first is None else first
            logger.debug(f"Newton iteration {iteration}: residual {rn:.3e} (step {alpha:.3g}, CG {cg_iterations})")
            if rn < s.tolerance:
                return chi, rn, log
            if not np.isfinite(rn) or rn > DIVERGENCE_FACTOR * max(first, 1.0):
                raise NumericalError(f"Newton iteration diverged at step {iteration}", detail={"iteration_log": log})
            if iteration == s.max_iterations:
                break

            current = chi
            operator = LinearOperator(
                (size, size),
                matvec=lambda v: self.pack(self.jacobian(current, self.jacobian(current, self.unpack(v)))),
                dtype=float,
            )
            rhs = -self.pack(self.jacobian(chi, r))
            counter = [0]

            def count(_):
                counter[0] += 1

            step, cg_info = cg(
                operator,
                rhs,
                rtol=min(s.cg_tolerance, rn),
                maxiter=s.cg_max_iterations,
                M=preconditioner,
                callback=count,
            )
            cg_iterations = counter[0]
            if cg_info < 0:
                raise NumericalError(f"CG breakdown in Newton step {iteration}", detail={"iteration_log": log})
            if cg_info > 0:
                logger.warning(
                    f"CG stopped at {cg_iterations} iterations without reaching its tolerance "
                    f"in Newton step {iteration}; using the partial step"
                )
            chi, rn, alpha = self._line_search(chi, self.unpack(step), rn)
            r = self.residual(chi)

        raise NumericalError(
            f"Newton did not reach {s.tolerance:.1e} in {s.max_iterations} iterations (last {log[-1].residual:.3e})",
            detail={"iteration_log": log},
        )


# ============================================================================
# MODE BUILDERS
# ============================================================================
def line_grid(lx2: float, n2: int) -> EnvelopeGrid:
    """1D grid over X2 (n1 = 1, so d1 vanishes)."""
    return EnvelopeGrid(lx1=1.0, lx2=lx2, n1=1, n2=n2)


def guess_amplitude(mu: float, p1: float, p2: float) -> float:
    """A^2 = -1.5 mu / (p1 + p2) when mu (p1 + p2) < 0, else 1."""
    total = p1 + p2
    if mu * total < 0:
        return float(np.sqrt(-1.5 * mu / total))
    return 1.0


def default_guess(grid: EnvelopeGrid, mu: float, p1: float, p2: float, lump_width: Optional[float] = None) -> NDArray:
    X1, X2 = grid.mesh
    profile = guess_amplitude(mu, p1, p2) / np.cosh(X2)
    if lump_width is not None:
        profile = profile * np.exp(-(X1 / lump_width) ** 2)
    return np.stack([profile, profile]).astype(complex)


def fix_gauge(chi: NDArray) -> NDArray:
    """Rotate so chi1 at the grid centre is real and nonnegative."""
    center = chi[0][chi.shape[1] // 2, chi.shape[2] // 2]
    if abs(center) == 0:
        return chi
    return chi * np.exp(-1j * np.angle(center))


def boundary_shell_fraction(chi: NDArray, grid: EnvelopeGrid) -> float:
    X1, X2 = grid.mesh
    shell = (np.abs(X1) >= (0.5 - SHELL_FRACTION) * grid.lx1) | (np.abs(X2) >= (0.5 - SHELL_FRACTION) * grid.lx2)
    density = np.sum(np.abs(chi) ** 2, axis=0)
    total = float(np.sum(density))
    return float(np.sum(density[shell]) / total) if total > 0 else 0.0


class ModeService:
    """Stationary line modes, lumps and continuation in mu"""

    def __init__(self, settings: NewtonSettings = None):
        self.settings = settings or NewtonSettings()

    def _solve(self, mu: float, p1: float, p2: float, mass: MassProfile, guess: NDArray) -> StationaryMode:
        grid = mass.grid
        guess = np.asarray(guess, dtype=complex)
        if guess.shape != (2, grid.n1, grid.n2):
            raise ConfigError(f"Initial guess has shape {guess.shape}, expected {(2, grid.n1, grid.n2)}")
        start = time.time()
        solver = NewtonCG(grid, mass.values, mu, p1, p2, self.settings)
        chi, rn, log = solver.solve(guess)
        chi = fix_gauge(chi)
        trivial = discrete_norm(chi, grid) < TRIVIAL_NORM
        if trivial:
            logger.warning(f"Newton converged to the zero solution at mu={mu}")
        check = discrete_norm(stationary_residual(chi, mu, grid, mass.values, p1, p2), grid)
        logger.info(
            f"Mode mu={mu}: residual {rn:.2e} (independent {check:.2e}) after {len(log) - 1} "
            f"iterations in {time.time() - start:.2f}s"
        )
        return StationaryMode(
            mu=mu, chi=chi, grid=grid, p1=p1, p2=p2, residual_norm=rn,
            iteration_log=log, trivial=trivial, independent_residual=check,
        )

    def solve_line_mode(self, mu: float, p1: float, p2: float, mass: MassProfile, guess: Optional[NDArray] = None) -> StationaryMode:
        """
        X1-independent nonlinear line mode on a line grid (n1 = 1).

        Args:
            mu: propagation constant
            p1, p2: cubic coefficients
            mass: mass sampled on a line grid
            guess: initial chi of shape (2, 1, n2); defaults to A (1, 1) sech(X2)
        """
        if mass.grid.n1 != 1:
            raise ConfigError(f"Line modes need a grid with n1 = 1, got n1 = {mass.grid.n1}")
        if guess is None:
            guess = default_guess(mass.grid, mu, p1, p2)
        return self._solve(mu, p1, p2, mass, guess)

    def lump_guess(self, mu: float, p1: float, p2: float, mass: MassProfile, lump_width: float = 4.0) -> NDArray:
        """
        Line mode on the central X2 column, cut off by exp(-(X1/w)^2).

        Falls back to default_guess for vertical edges or when the line solve fails or is trivial.
        """
        grid = mass.grid
        fallback = default_guess(grid, mu, p1, p2, lump_width)
        if mass.orientation != "horizontal" or grid.n1 == 1:
            return fallback
        line = line_grid(grid.lx2, grid.n2)
        kappa = mass.values[grid.n1 // 2][None, :]
        try:
            chi, _, _ = NewtonCG(line, kappa, mu, p1, p2, self.settings).solve(default_guess(line, mu, p1, p2))
        except NumericalError as e:
            logger.warning(f"Line mode seed failed at mu={mu}, using the sech guess: {e}")
            return fallback
        if discrete_norm(chi, line) < TRIVIAL_NORM:
            return fallback
        X1, _ = grid.mesh
        return chi * np.exp(-(X1 / lump_width) ** 2)

    def solve_lump(
        self,
        mu: float,
        p1: float,
        p2: float,
        mass: MassProfile,
        guess: Optional[NDArray] = None,
        lump_width: float = 4.0,
    ) -> StationaryMode:
        """
        Fully localized mode on the 2D grid, seeded by lump_guess unless a guess is given.

        Raises:
            ConfigError: if the converged mode does not decay at the domain boundary
        """
        if guess is None:
            guess = self.lump_guess(mu, p1, p2, mass, lump_width)
        mode = self._solve(mu, p1, p2, mass, guess)
        if not mode.trivial:
            shell = boundary_shell_fraction(mode.chi, mass.grid)
            if shell > DECAY_TOLERANCE:
                raise ConfigError(
                    f"Lump does not decay at the boundary (shell energy fraction {shell:.2e}); domain too small",
                    detail={"shell_fraction": shell, "mu": mu},
                )
        return mode

    def continuation_sweep(
        self,
        mus: Sequence[float],
        p1: float,
        p2: float,
        mass: MassProfile,
        lump: bool = False,
        guess: Optional[NDArray] = None,
    ) -> Dict[str, Any]:
        """
        Solve along a monotone mu list, each solve seeded by the previous mode.

        Returns:
            {"modes", "power_curve" [(mu, power)], "max_power_jump"}

        Raises:
            ConfigError: non-monotone mu list
            NumericalError: branch lost, with the last good mu
        """
        mus = [float(m) for m in mus]
        steps = np.diff(mus)
        if len(mus) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ConfigError("Continuation needs a strictly monotone mu list")

        solve = self.solve_lump if lump else self.solve_line_mode
        modes: List[StationaryMode] = []
        seed = guess
        for mu in mus:
            try:
                mode = solve(mu, p1, p2, mass, seed)
            except NumericalError as e:
                last_good = modes[-1].mu if modes else None
                raise NumericalError(
                    f"Branch lost at mu={mu} (last good mu={last_good}): {e}",
                    detail={"last_good_mu": last_good, **e.detail},
                )
            if mode.trivial and modes and not modes[-1].trivial:
                raise NumericalError(
                    f"Branch collapsed to zero at mu={mu} (last good mu={modes[-1].mu})",
                    detail={"last_good_mu": modes[-1].mu},
                )
            modes.append(mode)
            seed = mode.chi

        powers = [m.power for m in modes]
        jumps = [abs(b - a) / max(abs(a), 1e-300) for a, b in zip(powers[:-1], powers[1:])]
        return {
            "modes": modes,
            "power_curve": list(zip(mus, powers)),
            "max_power_jump": max(jumps) if jumps else 0.0,
        }

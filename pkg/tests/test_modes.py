import logging

import numpy as np
import numpy.testing as npt
import pytest

from config import NewtonSettings
from errors import ConfigError, NumericalError
from services.envelope_service import EnvelopeField, EnvelopeGrid, EnvelopeService, build_mass, stationary_residual
from services.modes_service import (
    ModeService,
    NewtonCG,
    NewtonStep,
    boundary_shell_fraction,
    default_guess,
    discrete_norm,
    fix_gauge,
    guess_amplitude,
    line_grid,
)


@pytest.fixture
def line_mass():
    return build_mass("double_wall", line_grid(20.0 * np.pi, 256))


def _random_field(shape, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_line_grid_has_no_transverse_derivative():
    grid = line_grid(10.0, 64)
    k1, _ = grid.wavenumbers
    assert grid.n1 == 1
    assert np.all(k1 == 0.0)


def test_guess_amplitude():
    assert guess_amplitude(-0.5, 2.0, 1.0) == pytest.approx(0.5)
    assert guess_amplitude(0.5, 2.0, 1.0) == 1.0


def test_residual_matches_stationary_form(line_mass):
    grid = line_mass.grid
    chi = default_guess(grid, -0.4, 2.0, 1.0) * (1 + 0.2 * _random_field((2, 1, grid.n2), 1))
    solver = NewtonCG(grid, line_mass.values, -0.4, 2.0, 1.0)
    expected = stationary_residual(chi, -0.4, grid, line_mass.values, 2.0, 1.0)
    assert np.allclose(solver.residual(chi), expected)


def test_jacobian_matches_finite_differences(line_mass):
    grid = line_mass.grid
    solver = NewtonCG(grid, line_mass.values, -0.4, 2.0, 1.0)
    chi = default_guess(grid, -0.4, 2.0, 1.0)
    eta = _random_field(chi.shape, 2)
    h = 1e-6
    difference = (solver.residual(chi + h * eta) - solver.residual(chi - h * eta)) / (2 * h)
    npt.assert_allclose(solver.jacobian(chi, eta), difference, rtol=1e-5, atol=1e-6)


def test_jacobian_is_self_adjoint(line_mass):
    grid = line_mass.grid
    solver = NewtonCG(grid, line_mass.values, -0.4, 2.0, 1.0)
    chi = default_guess(grid, -0.4, 2.0, 1.0)
    a = solver.pack(_random_field(chi.shape, 3))
    b = solver.pack(_random_field(chi.shape, 4))
    left = a @ solver.pack(solver.jacobian(chi, solver.unpack(b)))
    right = solver.pack(solver.jacobian(chi, solver.unpack(a))) @ b
    assert left == pytest.approx(right, rel=1e-10)


def test_pack_round_trip(line_mass):
    solver = NewtonCG(line_mass.grid, line_mass.values, -0.4, 2.0, 1.0)
    chi = _random_field(solver.shape, 5)
    npt.assert_array_equal(solver.unpack(solver.pack(chi)), chi)


def test_gauge_fix():
    chi = np.exp(0.3j) * np.ones((2, 1, 8), dtype=complex)
    fixed = fix_gauge(chi)
    assert fixed[0, 0, 4] == pytest.approx(1.0)


def test_linear_edge_mode(line_mass):
    mode = ModeService().solve_line_mode(0.0, 0.0, 0.0, line_mass)
    assert mode.residual_norm < 1e-10
    assert not mode.trivial
    assert mode.asymmetry < 1e-6
    assert mode.independent_residual < 1e-8


def test_line_mode_needs_line_grid():
    mass = build_mass("double_wall", EnvelopeGrid(lx1=10.0, lx2=10.0, n1=8, n2=8))
    with pytest.raises(ConfigError):
        ModeService().solve_line_mode(-0.5, 1.0, 1.0, mass)


def test_wrong_guess_shape(line_mass):
    with pytest.raises(ConfigError):
        ModeService().solve_line_mode(-0.5, 1.0, 1.0, line_mass, guess=np.zeros((2, 1, 8)))


def test_continuation_needs_monotone_mus(line_mass):
    with pytest.raises(ConfigError):
        ModeService().continuation_sweep([-0.2, -0.4, -0.3], 2.0, 1.0, line_mass)


def test_boundary_shell_fraction():
    grid = EnvelopeGrid(lx1=20.0, lx2=20.0, n1=32, n2=32)
    X1, X2 = grid.mesh
    lump = np.stack([np.exp(-(X1 ** 2 + X2 ** 2))] * 2)
    assert boundary_shell_fraction(lump, grid) < 1e-10
    flat = np.ones((2, 32, 32))
    assert boundary_shell_fraction(flat, grid) > 0.1
    assert discrete_norm(flat, grid) == pytest.approx(np.sqrt(800.0))


# ============================================================================
# NEWTON STEP CONTROL
# ============================================================================
def test_newton_log_records_steps(line_mass):
    mode = ModeService().solve_line_mode(-0.4, 2.0, 1.0, line_mass)
    log = mode.iteration_log
    assert all(isinstance(entry, NewtonStep) for entry in log)
    assert log[0].step == 0.0 and log[0].cg_iterations == 0
    assert all(0.0 < entry.step <= 1.0 and entry.cg_iterations >= 1 for entry in log[1:])
    # full steps once inside the quadratic basin
    assert log[-1].step == 1.0
    residuals = [entry.residual for entry in log]
    assert all(b < a for a, b in zip(residuals[:-1], residuals[1:]))
    assert mode.sidecar()["iterations"] == len(log) - 1


def test_line_search_backtracks_on_overshoot(line_mass):
    grid = line_mass.grid
    solver = NewtonCG(grid, line_mass.values, -0.4, 2.0, 1.0, NewtonSettings(min_step=1e-9))
    chi = default_guess(grid, -0.4, 2.0, 1.0)
    r = solver.residual(chi)
    rn = discrete_norm(r, grid)
    # steepest descent of ||r||^2 (J is self-adjoint), scaled far past the cubic's basin
    descent = -solver.jacobian(chi, r)
    descent *= 100.0 * np.max(np.abs(chi)) / np.max(np.abs(descent))

    trial, tn, alpha = solver._line_search(chi, descent, rn)
    assert alpha < 1.0
    assert tn < rn
    assert tn == pytest.approx(discrete_norm(solver.residual(trial), grid))
    npt.assert_allclose(trial, chi + alpha * descent)


def test_cg_stall_is_reported(line_mass, caplog):
    grid = line_mass.grid
    settings = NewtonSettings(cg_max_iterations=1, max_iterations=2)
    solver = NewtonCG(grid, line_mass.values, -0.4, 2.0, 1.0, settings)
    with caplog.at_level(logging.WARNING):
        with pytest.raises(NumericalError) as excinfo:
            solver.solve(default_guess(grid, -0.4, 2.0, 1.0))
    log = excinfo.value.detail["iteration_log"]
    assert len(log) == 3
    assert all(entry.cg_info > 0 and entry.cg_iterations == 1 for entry in log[1:])
    assert "CG stopped at 1 iterations" in caplog.text


def test_lump_guess_follows_line_mode(line_mass):
    grid = EnvelopeGrid(lx1=16.0 * np.pi, lx2=20.0 * np.pi, n1=16, n2=256)
    mass = build_mass("double_wall", grid)
    service = ModeService()
    guess = service.lump_guess(-0.4, 2.0, 1.0, mass, lump_width=4.0)
    line = service.solve_line_mode(-0.4, 2.0, 1.0, line_mass).chi
    center = grid.n1 // 2
    # the central column is the line mode up to a global phase
    overlap = np.vdot(line[:, 0], guess[:, center])
    assert abs(overlap) == pytest.approx(np.sum(np.abs(line) ** 2), rel=1e-8)
    assert np.max(np.abs(guess[:, 0])) < 1e-10 * np.max(np.abs(guess))


def test_lump_guess_without_nonlinearity_falls_back():
    grid = EnvelopeGrid(lx1=20.0, lx2=20.0, n1=16, n2=64)
    mass = build_mass("double_wall", grid)
    guess = ModeService().lump_guess(-0.4, 0.0, 0.0, mass)
    npt.assert_allclose(guess, default_guess(grid, -0.4, 0.0, 0.0, 4.0))


# ============================================================================
# NONLINEAR MODES AT THE HEADLINE PARAMETERS
# ============================================================================
@pytest.fixture(scope="module")
def lump_mode():
    grid = EnvelopeGrid(lx1=16.0 * np.pi, lx2=16.0 * np.pi, n1=64, n2=64)
    return ModeService().solve_lump(-0.8, 2.0, 1.0, build_mass("double_wall", grid))


@pytest.mark.slow
def test_lump_converges(lump_mode):
    assert lump_mode.residual_norm < 1e-10
    assert lump_mode.independent_residual < 1e-8
    assert not lump_mode.trivial
    grid = lump_mode.grid
    assert boundary_shell_fraction(lump_mode.chi, grid) < 1e-8
    # pinned to the edge X2 = 0
    density = np.sum(np.abs(lump_mode.chi) ** 2, axis=0)
    _, X2 = grid.mesh
    assert abs(np.sum(density * X2) / np.sum(density)) < 0.5


@pytest.mark.slow
def test_lump_is_stationary_under_evolution(lump_mode):
    mu, T, dt = -0.8, 5.0, 0.05
    grid = lump_mode.grid
    mass = build_mass("double_wall", grid)
    state = EnvelopeField(grid=grid, alpha=lump_mode.chi, p1=2.0, p2=1.0)
    final = EnvelopeService().evolve(state, mass, dt, int(round(T / dt))).final.alpha

    expected = np.exp(-1j * mu * T) * lump_mode.chi
    scale = np.sqrt(np.sum(np.abs(lump_mode.chi) ** 2))
    assert np.sqrt(np.sum(np.abs(final - expected) ** 2)) / scale < 1e-3
    phase = np.vdot(lump_mode.chi, final) / scale ** 2
    assert abs(phase - np.exp(-1j * mu * T)) < 1e-3


@pytest.mark.slow
def test_line_mode_continuation_to_headline_mu(line_mass):
    service = ModeService(NewtonSettings(tolerance=1e-10))
    sweep = service.continuation_sweep([-0.2, -0.4, -0.6, -0.8], 2.0, 1.0, line_mass)
    modes = sweep["modes"]
    assert len(modes) == 4
    for mode in modes:
        assert mode.residual_norm < 1e-10
        assert not mode.trivial
    powers = [power for _, power in sweep["power_curve"]]
    assert powers == sorted(powers)
    # p1 != p2 breaks the chi1 <-> chi2 balance of the linear mode
    assert modes[-1].asymmetry > 0.01

import asyncio

import numpy as np
import pytest

from errors import ConfigError, NumericalError
from services.envelope_service import (
    EnvelopeField,
    EnvelopeGrid,
    EnvelopeService,
    build_mass,
    curved_edge_initial,
    dirac_operator,
    double_wall,
    edge_packet,
    energy_center_velocity,
    envelope_rhs,
    linear_line_mode,
    nonlinearity,
    observables,
    stability_bound,
    wrap_coordinate,
)


@pytest.fixture
def grid():
    return EnvelopeGrid(lx1=64.0, lx2=40.0, n1=128, n2=128)


def test_grid_validation():
    with pytest.raises(ConfigError):
        EnvelopeGrid(lx1=10.0, lx2=10.0, n1=100, n2=64)
    with pytest.raises(ConfigError):
        EnvelopeGrid(lx1=-1.0, lx2=10.0, n1=64, n2=64)


def test_grid_geometry(grid):
    assert grid.x1[0] == pytest.approx(-32.0)
    assert grid.dx1 == pytest.approx(0.5)
    assert grid.center == pytest.approx((-0.25, -0.15625))
    assert grid.points().shape == (128 * 128, 2)


def test_double_wall_is_periodic_and_odd():
    length = 40.0
    u = np.linspace(-19.0, 19.0, 77)
    values = double_wall(u, length)
    assert np.allclose(values, -double_wall(-u, length))
    assert np.allclose(values[np.abs(u) < 5], np.tanh(u[np.abs(u) < 5]), atol=1e-12)
    assert np.max(np.abs(values)) <= 1.0
    assert np.allclose(wrap_coordinate(np.array([25.0, -21.0]), length), [-15.0, 19.0])


def test_mass_kinds(grid):
    X1, X2 = grid.mesh
    horizontal = build_mass("double_wall", grid)
    near = np.abs(X2) < 5
    assert np.allclose(horizontal.values[near], np.tanh(-X2[near]), atol=1e-10)
    vertical = build_mass("straight_edge", grid, amplitude=0.5, steepness=2.0, orientation="vertical")
    assert np.allclose(vertical.values, 0.5 * np.tanh(2.0 * X1))
    assert not vertical.periodic
    curved = build_mass("curved_edge", grid, preset="half_circle", radius=8.0)
    assert curved.distance_to_edge(np.array([[0.0, 8.0]]))[0] < 0.1
    with pytest.raises(ConfigError):
        build_mass("curved_edge", grid)
    with pytest.raises(ConfigError):
        build_mass("bump", grid)
    with pytest.raises(ConfigError):
        build_mass("double_wall", grid, orientation="diagonal")


def test_custom_mass_and_polyline(grid):
    custom = build_mass("custom", grid, custom=lambda a, b: np.tanh(a - b))
    assert custom.values.shape == (grid.n1, grid.n2)
    with pytest.raises(ConfigError):
        build_mass("custom", grid)
    poly = build_mass("curved_edge", grid, preset="polyline", vertices=[(-32.0, 0.0), (0.0, 4.0), (32.0, 0.0)])
    assert poly.edge(np.array([0.0]))[0] == pytest.approx(4.0)
    with pytest.raises(ConfigError):
        build_mass("curved_edge", grid, preset="polyline", vertices=[(0.0, 1.0)])


def test_line_mode_is_a_zero_energy_state():
    grid = EnvelopeGrid(lx1=16.0, lx2=40.0, n1=16, n2=256)
    mass = build_mass("double_wall", grid)
    state = linear_line_mode(grid)
    residual = dirac_operator(state.alpha, grid, mass.values)
    assert np.max(np.abs(residual)) < 1e-6


def test_rhs_matches_operator_form(grid):
    mass = build_mass("double_wall", grid)
    rng = np.random.default_rng(3)
    alpha = edge_packet(mass).alpha * (1 + 0.1 * rng.standard_normal((2, grid.n1, grid.n2)))
    rhs = envelope_rhs(grid, mass.values, 1.5, 0.5, linear_only=False)(alpha)
    expected = 1j * (dirac_operator(alpha, grid, mass.values) + nonlinearity(alpha, 1.5, 0.5) * alpha)
    assert np.allclose(rhs, expected)


def test_edge_packet_translates_along_the_edge(grid):
    mass = build_mass("double_wall", grid)
    initial = edge_packet(mass, center=0.0, width=4.0)
    trajectory = EnvelopeService().evolve(initial, mass, dt=0.02, steps=500, linear_only=True, cadence=125)
    # unit speed along +X1: 10 time units is 20 grid points
    expected = np.roll(initial.alpha, 20, axis=1)
    assert np.max(np.abs(trajectory.final.alpha - expected)) < 1e-5
    assert trajectory.final.time == pytest.approx(10.0)
    assert len(trajectory.observables) == 5
    first, last = trajectory.observables[0], trajectory.observables[-1]
    assert abs(last.norm - first.norm) / first.norm < 1e-8
    assert last.center[0] - first.center[0] == pytest.approx(10.0, abs=1e-3)
    assert last.edge_fraction > 0.99
    vx, vy = energy_center_velocity(trajectory)
    assert vx == pytest.approx(1.0, abs=1e-3)
    assert abs(vy) < 1e-3


def test_nonlinearity_drives_energy_off_the_edge(grid):
    mass = build_mass("double_wall", grid)
    packet = edge_packet(mass, width=4.0)
    service = EnvelopeService()
    linear = service.evolve(packet, mass, dt=0.02, steps=1000, linear_only=True, cadence=1000)
    nonlinear_state = EnvelopeField(grid=grid, alpha=packet.alpha, p1=2.0, p2=1.0)
    nonlinear = service.evolve(nonlinear_state, mass, dt=0.02, steps=1000, cadence=1000)

    kept = linear.observables[-1].edge_fraction
    leaked = nonlinear.observables[-1].edge_fraction
    assert kept > 0.99
    assert leaked < 0.8 * kept
    first, last = nonlinear.observables[0], nonlinear.observables[-1]
    assert abs(last.norm - first.norm) / first.norm < 1e-5


def test_negative_amplitude_reverses_direction(grid):
    mass = build_mass("double_wall", grid, amplitude=-1.0)
    initial = edge_packet(mass, width=4.0)
    trajectory = EnvelopeService().evolve(initial, mass, dt=0.02, steps=50, linear_only=True, cadence=50)
    assert trajectory.observables[-1].center[0] - trajectory.observables[0].center[0] == pytest.approx(-1.0, abs=1e-3)


def test_vertical_edge_moves_along_x2(grid):
    mass = build_mass("double_wall", grid, orientation="vertical")
    initial = edge_packet(mass, width=4.0)
    trajectory = EnvelopeService().evolve(initial, mass, dt=0.02, steps=50, linear_only=True, cadence=50)
    shift = np.subtract(trajectory.observables[-1].center, trajectory.observables[0].center)
    assert shift[1] == pytest.approx(1.0, abs=1e-3)
    assert abs(shift[0]) < 1e-3


def test_curved_edge_initial_profile():
    grid = EnvelopeGrid(lx1=20.0, lx2=20.0, n1=64, n2=64)
    state = curved_edge_initial(grid, (0.0, 0.0), theta_sharp=0.51, cd=1.76)
    assert np.allclose(state.alpha[1], -1j * state.alpha[0])
    X1, X2 = grid.mesh
    expected = np.cosh(1.76 * X1) ** (-0.51 / 1.76) * np.exp(-0.2 * 1.76 ** 2 * X2 ** 2)
    assert np.allclose(state.alpha[0], expected)
    with pytest.raises(ConfigError):
        curved_edge_initial(grid, (0.0, 0.0), 0.5, 0.0)


def test_unstable_step_is_rejected(grid):
    mass = build_mass("double_wall", grid)
    state = edge_packet(mass)
    lam = stability_bound(grid, mass.values, state.alpha, 0.0, 0.0, True)
    with pytest.raises(ConfigError):
        EnvelopeService().evolve(state, mass, dt=3.0 / lam, steps=1, linear_only=True)


def test_blow_up_keeps_last_stable_state(grid, monkeypatch):
    import services.envelope_service as envelope

    mass = build_mass("double_wall", grid)
    state = edge_packet(mass)
    calls = {"n": 0}
    real_step = envelope.rk4_step

    def failing_step(rhs, y, dt):
        calls["n"] += 1
        if calls["n"] == 3:
            return np.full_like(y, np.nan)
        return real_step(rhs, y, dt)

    monkeypatch.setattr(envelope, "rk4_step", failing_step)
    with pytest.raises(NumericalError) as excinfo:
        EnvelopeService().evolve(state, mass, dt=0.02, steps=10, linear_only=True)
    last = excinfo.value.last_state
    assert last.time == pytest.approx(0.04)
    assert np.all(np.isfinite(last.alpha))
    assert excinfo.value.detail["step"] == 3


def test_parallel_runs(grid):
    mass = build_mass("double_wall", grid)
    runs = [
        {"state": edge_packet(mass, center=c), "mass": mass, "dt": 0.02, "steps": 5, "linear_only": True}
        for c in (-5.0, 5.0)
    ]
    trajectories = asyncio.run(EnvelopeService().evolve_many(runs))
    assert [t.final.time for t in trajectories] == pytest.approx([0.1, 0.1])


def test_observables_of_empty_field(grid):
    mass = build_mass("double_wall", grid)
    empty = EnvelopeField(grid=grid, alpha=np.zeros((2, grid.n1, grid.n2), dtype=complex))
    result = observables(empty, mass)
    assert result.norm == 0.0
    assert result.edge_fraction == 0.0


@pytest.mark.slow
def test_nonlinear_packet_stays_bounded(grid):
    mass = build_mass("double_wall", grid)
    state = edge_packet(mass, width=4.0)
    state = EnvelopeField(grid=grid, alpha=0.5 * state.alpha, p1=-1.0, p2=-0.5)
    trajectory = EnvelopeService().evolve(state, mass, dt=0.02, steps=500, cadence=100)
    first, last = trajectory.observables[0], trajectory.observables[-1]
    assert abs(last.norm - first.norm) / first.norm < 1e-5
    assert last.center[0] > first.center[0]

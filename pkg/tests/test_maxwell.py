import asyncio
from dataclasses import replace

import numpy as np
import numpy.testing as npt
import pytest

from errors import ConfigError
from services.envelope_service import EnvelopeField, EnvelopeGrid, EnvelopeTrajectory, TransportObservables, periodic_center
from services.material_service import zero_perturbation
from services.maxwell_service import (
    ComparisonSetup,
    EnvelopeMapping,
    MaxwellObservables,
    MaxwellService,
    MaxwellState,
    MaxwellTrajectory,
    Supercell,
    assemble_packet,
    boundary_ratio,
    build_modulated_weight,
    compare_with_envelope,
    edge_tube,
    evolve_linear,
    maxwell_rhs,
    maxwell_stability_bound,
    plane_wave,
    refinement_shift,
    resample_periodic,
    synthesize_bloch_field,
    track_centers,
)


@pytest.fixture
def free_space(unit_weight):
    cell = Supercell(1, 3, 8, 8)
    return build_modulated_weight(cell, unit_weight, zero_perturbation(), 0.25)


def test_supercell_geometry():
    cell = Supercell(2, 6, 8, 4)
    assert (cell.nx, cell.ny) == (16, 24)
    assert cell.lx == pytest.approx(2.0 * np.sqrt(3.0))
    assert cell.ly == pytest.approx(6.0)
    assert cell.center == pytest.approx((np.sqrt(3.0), 3.0))
    assert cell.points.shape == (16, 24, 2)


def test_supercell_needs_commensurate_height():
    with pytest.raises(ConfigError):
        Supercell(2, 4, 8, 8)
    with pytest.raises(ConfigError):
        Supercell(0, 3, 8, 8)


def test_dirac_momenta_are_commensurate(example_dirac):
    cell = Supercell(1, 3, 8, 8)
    freqs = cell.frequencies(example_dirac.psi1.problem.momenta)
    assert freqs.dtype.kind == "i"
    with pytest.raises(ConfigError):
        cell.frequencies(np.array([[0.1, 0.0]]))


def test_free_space_symbol(free_space):
    state, omega = plane_wave(free_space.supercell, (1, 1))
    assert np.allclose(maxwell_rhs(free_space)(state.fields), 1j * omega * state.fields)


def test_plane_wave_phase_rotation(free_space):
    state, omega = plane_wave(free_space.supercell, (1, 1))
    trajectory = evolve_linear(state, free_space, dt=0.01, steps=100)
    expected = np.exp(1j * omega * 1.0) * state.fields
    assert trajectory.final.time == pytest.approx(1.0)
    assert np.max(np.abs(trajectory.final.fields - expected)) < 1e-6


def test_energy_is_conserved(example_weight, example_perturbation):
    cell = Supercell(2, 3, 8, 8)
    modulated = build_modulated_weight(cell, example_weight, example_perturbation, 0.25)
    state, _ = plane_wave(cell, (1, 0))
    dt = 0.05 / maxwell_stability_bound(modulated)
    trajectory = evolve_linear(state, modulated, dt=dt, steps=80, cadence=20)
    energies = [o.energy for o in trajectory.observables]
    assert len(energies) == 5
    assert max(abs(e - energies[0]) for e in energies) / energies[0] < 1e-8


def test_unstable_step_is_rejected(free_space):
    state, _ = plane_wave(free_space.supercell, (1, 0))
    dt = 3.0 / maxwell_stability_bound(free_space)
    with pytest.raises(ConfigError):
        evolve_linear(state, free_space, dt=dt, steps=1)


def test_modulated_weight(example_weight, example_perturbation):
    cell = Supercell(64, 3, 2, 2)
    modulated = build_modulated_weight(cell, example_weight, example_perturbation, 0.25)
    X, _ = cell.mesh
    near = np.abs(X - modulated.edge_x) < 4.0
    assert np.allclose(modulated.kappa[near], np.tanh(0.25 * (X[near] - modulated.edge_x)), atol=1e-6)
    assert modulated.max_eigenvalue > 10.0
    assert np.allclose(np.einsum("xyij,xyjk->xyik", modulated.values, modulated.inverse), np.eye(3))
    mask = edge_tube(modulated, 1.0)
    assert np.all(np.abs(X[mask] - modulated.edge_x) <= 4.0)
    assert np.any(mask) and not np.all(mask)
    with pytest.raises(ConfigError):
        build_modulated_weight(cell, example_weight, example_perturbation, 0.0)
    with pytest.raises(ConfigError):
        build_modulated_weight(cell, example_weight, example_perturbation, 10.0)


def test_bloch_synthesis_matches_direct_sum(example_dirac):
    cell = Supercell(1, 3, 32, 32)
    psi = example_dirac.psi1
    values, dropped = synthesize_bloch_field(cell, psi)
    assert dropped == 0.0
    for ix, iy in ((0, 0), (3, 7), (11, 40)):
        x = cell.points[ix, iy]
        direct = psi.coeffs.T @ np.exp(1j * (psi.problem.momenta @ x))
        npt.assert_allclose(values[:, ix, iy], direct, rtol=1e-9, atol=1e-12)


def test_coarse_synthesis_reports_dropped_energy(example_dirac):
    _, dropped = synthesize_bloch_field(Supercell(1, 3, 4, 4), example_dirac.psi1)
    assert 0.0 < dropped < 1.0


def test_resample_band_limited_field():
    x = np.arange(8) / 8.0
    coarse = np.cos(2 * np.pi * x)[:, None] * np.exp(2j * np.pi * np.arange(6) / 6.0)[None, :]
    fine = resample_periodic(coarse, (16, 12))
    xf = np.arange(16) / 16.0
    expected = np.cos(2 * np.pi * xf)[:, None] * np.exp(2j * np.pi * np.arange(12) / 12.0)[None, :]
    npt.assert_allclose(fine, expected, atol=1e-12)


def test_boundary_ratio():
    X, Y = np.meshgrid(np.linspace(-10, 10, 41), np.linspace(-10, 10, 41), indexing="ij")
    assert boundary_ratio(np.stack([np.exp(-(X ** 2 + Y ** 2))] * 2)) < 1e-30
    assert boundary_ratio(np.ones((2, 4, 4))) == pytest.approx(1.0)
    assert boundary_ratio(np.zeros((2, 4, 4))) == 0.0


def test_packet_requires_decayed_envelope(example_dirac):
    cell = Supercell(1, 3, 8, 8)
    grid = EnvelopeGrid(lx1=1.0, lx2=1.0, n1=8, n2=8)
    flat = EnvelopeField(grid=grid, alpha=np.ones((2, 8, 8), dtype=complex))
    with pytest.raises(ConfigError):
        assemble_packet(cell, example_dirac.psi1, example_dirac.psi2, flat)
    packet = assemble_packet(cell, example_dirac.psi1, example_dirac.psi2, flat, decay_tolerance=1.0)
    field1, _ = synthesize_bloch_field(cell, example_dirac.psi1)
    field2, _ = synthesize_bloch_field(cell, example_dirac.psi2)
    npt.assert_allclose(packet.state.fields, field1 + field2, atol=1e-12)


def test_mapping():
    mapping = EnvelopeMapping(x_c=5.0, y_c=2.0, delta=0.25, cd=2.0)
    assert mapping.position((1.0, -0.5)) == pytest.approx((13.0, -2.0))
    assert mapping.time(2.0) == pytest.approx(8.0)
    grid = mapping.envelope_grid(Supercell(4, 6, 4, 4), 16, 16)
    assert grid.lx1 == pytest.approx(0.125 * 4 * np.sqrt(3.0))
    assert grid.lx2 == pytest.approx(0.75)


def _wrapped_gaussian(coords, lengths, centers, width=0.5):
    density = np.ones_like(coords[0])
    for x, length, c in zip(coords, lengths, centers):
        distance = (x - c + length / 2) % length - length / 2
        density = density * np.exp(-(distance / width) ** 2)
    return density


def test_periodic_center_across_the_boundary():
    h = 0.25
    coords = np.meshgrid(np.arange(40) * h, np.arange(40) * h, indexing="ij")
    lengths = (10.0, 10.0)
    density = _wrapped_gaussian(coords, lengths, (9.5, 1.0))
    assert periodic_center(density, coords, lengths, (0.0, 0.0)) == pytest.approx((-0.5, 1.0), abs=1e-12)
    shifted = np.roll(density, 5, axis=0)
    assert periodic_center(shifted, coords, lengths, (0.0, 0.0)) == pytest.approx((0.75, 1.0), abs=1e-12)
    # plain mean is pulled towards the middle of the box
    assert np.sum(density * coords[0]) / np.sum(density) > 5.0


def test_track_centers_unwraps():
    cell = Supercell(1, 3, 8, 8)
    observables = [
        MaxwellObservables(time=t, energy=1.0, center=(0.0, 0.0), edge_fraction=1.0, periodic_center=(0.0, y))
        for t, y in ((0.0, 1.0), (1.0, 1.4), (2.0, -1.2))
    ]
    centers = track_centers(observables, (cell.lx, cell.ly))
    npt.assert_allclose(centers[:, 1], [1.0, 1.4, 1.8])
    plain = [MaxwellObservables(time=0.0, energy=1.0, center=(0.3, 0.2), edge_fraction=1.0)]
    npt.assert_allclose(track_centers(plain, (cell.lx, cell.ly)), [[0.3, 0.2]])


def _maxwell_trajectory(cell, times, centers=None):
    state = MaxwellState(supercell=cell, fields=np.zeros((3, cell.nx, cell.ny), dtype=complex))
    centers = centers or [cell.center] * len(times)
    observables = [
        MaxwellObservables(time=t, energy=1.0, center=c, edge_fraction=1.0, periodic_center=c)
        for t, c in zip(times, centers)
    ]
    return MaxwellTrajectory(final=state, observables=observables)


def test_refinement_shift():
    cell = Supercell(1, 3, 8, 8)
    times = [0.0, 1.0, 2.0]
    coarse = _maxwell_trajectory(cell, times, [(0.0, 0.0), (0.0, 0.1), (0.0, 0.2)])
    fine = _maxwell_trajectory(cell, times, [(0.0, 0.0), (0.01, 0.1), (0.0, 0.22)])
    assert refinement_shift(coarse, fine, 1.0) == pytest.approx(0.02)
    # short runs are measured against one grid spacing
    assert refinement_shift(coarse, fine, 0.01) == pytest.approx(0.02 / cell.dy)
    with pytest.raises(ConfigError):
        refinement_shift(coarse, _maxwell_trajectory(cell, times[:2]), 1.0)


def test_companion_resolution():
    assert ComparisonSetup(refinement="none").companion_resolution() is None
    assert ComparisonSetup(r1=8, r2=6).companion_resolution() == (4, 3)
    assert ComparisonSetup(refinement="double").companion_resolution() == (16, 16)
    for bad in (ComparisonSetup(r1=5), ComparisonSetup(r1=2, r2=2), ComparisonSetup(refinement="triple")):
        with pytest.raises(ConfigError):
            bad.companion_resolution()

def _envelope_trajectory(times):
    grid = EnvelopeGrid(lx1=1.0, lx2=1.0, n1=4, n2=4)
    final = EnvelopeField(grid=grid, alpha=np.ones((2, 4, 4), dtype=complex))
    observables = [TransportObservables(time=t, norm=1.0, center=(0.0, 0.0), edge_fraction=1.0) for t in times]
    return EnvelopeTrajectory(final=final, observables=observables)


def test_comparison_rejects_mismatched_sampling(free_space):
    cell = free_space.supercell
    mapping = EnvelopeMapping(x_c=cell.center[0], y_c=cell.center[1], delta=0.25, cd=1.0)
    with pytest.raises(ConfigError):
        compare_with_envelope(_maxwell_trajectory(cell, [0.0, 4.0]), _envelope_trajectory([0.0, 0.5, 1.0]), free_space, mapping)
    with pytest.raises(ConfigError):
        compare_with_envelope(_maxwell_trajectory(cell, [0.0, 4.0]), _envelope_trajectory([0.0, 0.5]), free_space, mapping)


def test_comparison_needs_theta(example_dirac, example_weight, example_perturbation):
    flat = replace(example_dirac, theta_sharp=0.0)
    with pytest.raises(ConfigError):
        asyncio.run(MaxwellService().run_comparison(flat, example_weight, example_perturbation, ComparisonSetup()))


def test_small_comparison_run(example_dirac, example_weight, example_perturbation):
    setup = ComparisonSetup(
        n1=4, n2=6, r1=8, r2=8, delta=0.25, final_time=0.25, samples=4,
        envelope_n1=16, envelope_n2=16, decay_tolerance=1.0, refinement="halve",
    )
    report, maxwell, envelope = asyncio.run(
        MaxwellService().run_comparison(example_dirac, example_weight, example_perturbation, setup)
    )
    assert len(report.times) == 5
    assert report.times[-1] == pytest.approx(1.0)
    assert len(maxwell.observables) == len(envelope.observables) == 5
    assert envelope.final.time == pytest.approx(0.25)
    assert report.energy_drift < 0.05
    assert np.isfinite(report.relative_discrepancy)
    assert -1.0 <= report.profile_correlation <= 1.0
    assert report.energy_ratio > 0
    assert report.boundary_ratio <= 1.0
    assert len(report.maxwell_edge_fraction) == 5
    assert report.refinement == "halve"
    assert np.isfinite(report.refinement_shift) and report.refinement_shift >= 0.0


def test_comparison_without_refinement(example_dirac, example_weight, example_perturbation):
    setup = ComparisonSetup(
        n1=4, n2=6, r1=8, r2=8, delta=0.25, final_time=0.25, samples=2,
        envelope_n1=16, envelope_n2=16, refinement="none",
    )
    report, _, _ = asyncio.run(MaxwellService().run_comparison(example_dirac, example_weight, example_perturbation, setup))
    assert report.refinement == "none"
    assert report.refinement_shift is None


@pytest.mark.slow
def test_packet_follows_the_envelope(example_dirac, example_weight, example_perturbation):
    setup = ComparisonSetup(refinement="double")
    report, maxwell, _ = asyncio.run(
        MaxwellService().run_comparison(example_dirac, example_weight, example_perturbation, setup)
    )
    assert maxwell.final.time == pytest.approx(50.0)
    assert report.relative_discrepancy < 0.1
    assert report.refinement_shift < 0.01

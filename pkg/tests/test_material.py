import numpy as np
import pytest

from errors import ConfigError
from services.material_service import (
    PerturbationWeight,
    anti_pt_residual,
    cell_grid,
    check_honeycomb,
    eval_h,
    fourier_coefficients,
    fourier_series_weight,
    h_weight,
    low_contrast_weight,
    perturbed,
    synthesize,
)
from services.lattice_service import ROTATION


def test_h_is_rotation_invariant(lattice):
    x = cell_grid(lattice, 16)
    assert np.allclose(eval_h(x @ ROTATION), eval_h(x))
    assert np.allclose(eval_h(-x), eval_h(x))
    assert eval_h(np.zeros(2)) == pytest.approx(3.0)


def test_example_weight_is_honeycomb(example_weight):
    certificate = check_honeycomb(example_weight)
    assert certificate.is_honeycomb
    assert certificate.failures() == []
    low, high = certificate.bounds
    assert 0.0 < low <= high
    # A = 10 - h peaks where h = -3/2
    assert high == pytest.approx(11.5, rel=1e-2)


def test_identity_is_honeycomb(unit_weight):
    certificate = check_honeycomb(unit_weight)
    assert certificate.is_honeycomb
    assert certificate.bounds == pytest.approx((1.0, 1.0))


def test_rotation_breaking_weight_is_reported():
    weight = fourier_series_weight(
        [(0, 0, [2, 0, 0, 2]), (1, 0, [0.1, 0, 0, 0.1]), (-1, 0, [0.1, 0, 0, 0.1])],
        [(0, 0, 1.0)],
        name="stripes",
    )
    certificate = check_honeycomb(weight)
    assert not certificate.is_honeycomb
    assert certificate.failures() == ["rot_invariant"]
    assert certificate.rot_invariant.max_residual > 0.01


def test_fourier_terms_need_hermitian_partners():
    with pytest.raises(ConfigError):
        fourier_series_weight([(0, 0, [1, 0, 0, 1]), (1, 0, [0.1, 0, 0, 0.1])], [(0, 0, 1.0)])
    with pytest.raises(ConfigError):
        fourier_series_weight([(0, 0, [1, 0, 0, 1])], [(0, 0, 1.0), (0, 1, 0.2j)])


def test_fourier_series_matches_h_weight(lattice):
    terms = [(0, 0, [10, 0, 0, 10])] + [
        (m1, m2, [-0.5, 0, 0, -0.5]) for m1, m2 in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1))
    ]
    weight = fourier_series_weight(terms, [(0, 0, 1.0)])
    x = cell_grid(lattice, 16)
    expected = (10.0 - eval_h(x))[..., None, None] * np.eye(2)
    assert np.allclose(weight.eval_A(x), expected)


def test_fourier_coefficients_of_example(example_weight, lattice):
    table = fourier_coefficients(example_weight.eval_W, 3, 32, lattice)
    assert np.allclose(table.coefficient((0, 0))[:2, :2], 10.0 * np.eye(2))
    for m in ((1, 0), (0, 1), (-1, -1)):
        assert np.allclose(table.coefficient(m)[:2, :2], -0.5 * np.eye(2))
    assert np.allclose(table.coefficient((1, -1))[:2, :2], 0.0)
    assert table.hermitian_residual() < 1e-12
    assert np.allclose(table.coefficient((7, 7)), 0.0)


def test_synthesis_reproduces_trigonometric_field(lattice):
    table = fourier_coefficients(h_weight().eval_W, 2, 16, lattice)
    samples = synthesize(table, 16)
    assert np.allclose(samples[..., 2, 2], eval_h(cell_grid(lattice, 16)))


def test_pointwise_inverse(example_weight, lattice):
    x = cell_grid(lattice, 8)
    product = example_weight.eval_W(x) @ example_weight.eval_W_inv(x)
    assert np.allclose(product, np.eye(3))


def test_example_perturbation_is_anti_pt(example_perturbation):
    assert example_perturbation.anti_pt_certified
    assert anti_pt_residual(example_perturbation) < 1e-12


def test_even_perturbation_is_not_anti_pt():
    even = PerturbationWeight(name="even", eval_V=lambda x: eval_h(x)[..., None, None] * np.eye(3))
    assert anti_pt_residual(even) > 1.0


def test_perturbed_weight(example_weight, example_perturbation, lattice):
    weight = perturbed(example_weight, example_perturbation, 0.1)
    x = cell_grid(lattice, 8)
    A = weight.eval_A(x)
    assert np.allclose(A[..., 0, 1], 0.1j * eval_h(x))
    assert np.allclose(A[..., 1, 0], -0.1j * eval_h(x))


def test_perturbed_rejects_off_block_coupling(example_weight):
    def eval_V(x):
        v = np.zeros(np.shape(x)[:-1] + (3, 3), dtype=complex)
        v[..., 0, 2] = 1.0
        v[..., 2, 0] = 1.0
        return v

    with pytest.raises(ConfigError):
        perturbed(example_weight, PerturbationWeight(name="coupling", eval_V=eval_V), 0.1)


def test_low_contrast_bounds():
    weight = low_contrast_weight(h_weight(), 0.1)
    low, high = weight.bounds
    assert low == pytest.approx(0.85, abs=1e-3)
    assert high == pytest.approx(1.3, abs=1e-3)

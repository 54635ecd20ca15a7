import math

import numpy as np
import pytest

from bishadow.charts import flat_torus
from bishadow.errors import (MagnitudeViolationError, ParameterDomainError,
                             TubeEscapeError)
from bishadow.systems import (constant_displacement, continuity_modulus,
                              finite_difference_jacobian, lift_step,
                              make_cat_family, make_coupled_linear_family,
                              make_perturbed_family,
                              make_scalar_affine_family,
                              make_sin_perturbed_cat, measure_gap,
                              profiled_displacement, unperturbed)


def test_cat_matrix_eigenvalues():
    fam = make_cat_family()
    vals = np.linalg.eigvals(fam.jacobian(0, fam.chart.point([0.1, 0.2])))
    vals = np.sort(vals.real)
    assert vals[1] == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-12)
    assert vals[0] == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-12)


def test_cat_fixed_point_and_wrap():
    fam = make_cat_family()
    np.testing.assert_allclose(fam.evaluate(0, np.array([0.0, 0.0])),
                               [0.0, 0.0])
    np.testing.assert_allclose(fam.evaluate(3, np.array([0.5, 0.5])),
                               [0.5, 0.0], atol=1e-15)


def test_coupled_family_blocks_are_parameters():
    fam = make_coupled_linear_family(2.0, 0.5, 0.1, 0.2)
    j = fam.jacobian(0, fam.chart.point([0.3, 0.4]))
    np.testing.assert_array_equal(j, [[2.0, 0.1], [0.2, 0.5]])


def test_coupled_family_rejects_bad_parameters():
    with pytest.raises(ParameterDomainError):
        make_coupled_linear_family(0.9, 0.5, 0.0, 0.0)
    with pytest.raises(ParameterDomainError):
        make_coupled_linear_family(2.0, 1.1, 0.0, 0.0)
    # (1.2, 0.9, 0.5, 0.5) is constructible; it fails certification, not
    # construction
    make_coupled_linear_family(1.2, 0.9, 0.5, 0.5)


def test_decoupled_family_is_product():
    fam = make_coupled_linear_family(2.0, 0.5, 0.0, 0.0)
    x = fam.chart.point([0.1, 0.3])
    np.testing.assert_allclose(fam.evaluate(0, x), [0.2, 0.15], atol=1e-15)


def test_lift_step_exact_orbit_has_zero_offset():
    fam = make_cat_family()
    x = fam.chart.point([0.21, 0.34])
    step = lift_step(fam, 0, x, fam.evaluate(0, x))
    assert step.defect == 0.0
    np.testing.assert_array_equal(step.map(np.zeros(2)), np.zeros(2))


def test_lift_step_offset_is_defect_vector():
    fam = make_cat_family()
    x = fam.chart.point([0.21, 0.34])
    w = np.array([1e-3, -2e-3])
    x_next = fam.chart.exp(fam.evaluate(0, x), w)
    step = lift_step(fam, 0, x, x_next)
    assert step.defect == pytest.approx(np.linalg.norm(w), abs=1e-15)
    np.testing.assert_allclose(step.map(np.zeros(2)), -w, atol=1e-15)


def test_lift_step_linear_part_exact():
    fam = make_scalar_affine_family(2.0)
    zero = fam.chart.point([0.0])
    step = lift_step(fam, 0, zero, zero)
    for z in (0.01, -0.2, 0.37):
        np.testing.assert_allclose(step.map(np.array([z])), [2.0 * z],
                                   atol=1e-15)
    np.testing.assert_array_equal(step.derivative(np.array([0.1])), [[2.0]])


def test_lift_step_rejects_large_defect():
    fam = make_cat_family()
    x = fam.chart.point([0.0, 0.0])
    with pytest.raises(TubeEscapeError):
        lift_step(fam, 0, x, fam.chart.point([0.5, 0.5]))


def test_perturbed_family_zero_displacement():
    fam = make_cat_family()
    pert = make_perturbed_family(fam, constant_displacement([0.0, 0.0]), 0.0,
                                 affine=True)
    x = fam.chart.point([0.4, 0.7])
    np.testing.assert_array_equal(pert.maps.evaluate(0, x),
                                  fam.evaluate(0, x))
    assert pert.gap_profile(17) == 0.0


def test_perturbed_family_constant_gap_measured():
    fam = make_cat_family()
    c = np.array([6e-4, -8e-4])   # |c| = 1e-3
    pert = make_perturbed_family(fam, constant_displacement(c), 1e-3,
                                 affine=True)
    measured = measure_gap(fam, pert.maps, index=0, samples=1000, seed=3)
    assert measured == pytest.approx(1e-3, abs=1e-12)


def test_perturbed_family_decaying_profile():
    fam = make_cat_family()
    mag = lambda i: 1e-3 / (1 + abs(i))  # noqa: E731
    pert = make_perturbed_family(
        fam, profiled_displacement([1.0, 0.0], mag), mag)
    assert pert.gap_profile(9) == pytest.approx(1e-4)
    gaps = pert.gap_sequence(range(-2, 3))
    np.testing.assert_allclose(gaps, [1e-3 / 3, 1e-3 / 2, 1e-3, 1e-3 / 2,
                                      1e-3 / 3])


def test_perturbed_family_magnitude_violation():
    fam = make_cat_family()
    with pytest.raises(MagnitudeViolationError):
        make_perturbed_family(fam, constant_displacement([1e-3, 0.0]), 1e-4)


def test_jacobian_matches_finite_differences():
    fam = make_sin_perturbed_cat(0.01)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.uniform(0, 1, size=2)
        fd = finite_difference_jacobian(fam.evaluate, fam.chart, 0, x)
        np.testing.assert_allclose(fam.jacobian(0, x), fd, atol=1e-6)


def test_continuity_modulus_affine_is_zero():
    assert continuity_modulus(make_cat_family(), 0.01, 50) == 0.0
    assert continuity_modulus(make_coupled_linear_family(2.0, 0.5, 0.1, 0.1),
                              0.01, 50) == 0.0


def test_continuity_modulus_sin_below_analytic_bound():
    eps, r = 0.01, 0.01
    fam = make_sin_perturbed_cat(eps)
    analytic = eps * 2 * math.pi * (2 * math.pi * r)
    sampled = continuity_modulus(fam, radius=r, samples=500, seed=7)
    assert 0.0 < sampled <= analytic


def test_unperturbed_wrapper():
    fam = make_cat_family()
    pert = unperturbed(fam)
    assert pert.maps is fam
    assert pert.gap_profile(5) == 0.0

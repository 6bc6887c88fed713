import math

import numpy as np
import pytest

from config import settings
from core.errors import BlowUpError, ConfigurationError, GridMismatchError, NonUnitPointError
from core.geometry import exp_map, geodesic_distance, stereographic_inverse, tangent_frames
from core.harmonics import basis_index, coefficient_count, degree_dimension, paneitz_eigenvalues
from core.quadrature import SPHERE_VOLUME, build_grid, s3_directions
from core.spectral import (
    GridField,
    SpectralField,
    analyze,
    apply_laplacian,
    apply_paneitz,
    coordinate_field,
    evaluate_at,
    grid_for,
    integrate,
    pointwise_exp_product,
    project_function,
    random_factor,
    random_field,
    synthesize,
    tail_fraction,
)
from models.schemas import GridSpec


def test_degree_dimensions():
    assert [degree_dimension(k) for k in range(4)] == [1, 5, 14, 30]
    assert coefficient_count(1) == 6
    assert coefficient_count(2) == 20
    assert basis_index(3).size == coefficient_count(3)


def test_first_slots_of_each_degree_are_zonal():
    index = basis_index(2)
    assert index.position(1, 0, 0, 0) == 1
    assert index.position(2, 0, 0, 0) == 6


def test_grid_weights_sum_to_volume(grid):
    assert grid.weights.sum() == pytest.approx(SPHERE_VOLUME, rel=1e-13)


def test_grid_nodes_are_unit(grid):
    norms = np.linalg.norm(grid.nodes, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-14


def test_grid_needs_enough_nodes():
    with pytest.raises(ConfigurationError):
        build_grid(GridSpec(band_limit=8, oversample=1), n_axis=5)


def test_second_moment_of_a_coordinate(grid):
    x5 = GridField(grid, np.array(grid.coordinates[4]))
    assert integrate(x5 * x5) == pytest.approx(SPHERE_VOLUME / 5.0, rel=1e-13)


def test_round_trip(band_limit, rng, grid):
    u = random_field(band_limit, 1.0, rng)
    back = analyze(synthesize(u, grid))
    assert np.max(np.abs(back.coeffs - u.coeffs)) < 1e-11


def test_round_trip_on_base_grid(band_limit, rng):
    u = random_field(band_limit, 1.0, rng)
    base = build_grid(GridSpec(band_limit=band_limit, oversample=1))
    assert np.max(np.abs(analyze(synthesize(u, base)).coeffs - u.coeffs)) < 1e-11


def test_constant_field_evaluates_to_constant(unit_points):
    c = SpectralField.constant(2.5, 4)
    assert np.allclose(c.evaluate(unit_points), 2.5, atol=1e-13)
    assert c.mean == 2.5


def test_coordinate_field_matches_coordinate(unit_points):
    for i in range(1, 6):
        assert np.allclose(coordinate_field(i).evaluate(unit_points), unit_points[:, i - 1], atol=1e-12)


def test_point_evaluation_agrees_with_synthesis(rng):
    u = random_field(6, 1.0, rng)
    grid = grid_for(6)
    nodal = synthesize(u, grid).values.reshape(-1)
    assert np.max(np.abs(u.evaluate(grid.nodes) - nodal)) < 1e-11


def test_evaluate_at_single_point():
    x = np.array([0.0, 0.6, 0.0, 0.0, 0.8])
    assert evaluate_at(coordinate_field(2), x) == pytest.approx(0.6, abs=1e-13)


def test_evaluate_rejects_non_unit_points():
    with pytest.raises(NonUnitPointError):
        coordinate_field(1).evaluate(np.array([[1.0, 1.0, 0.0, 0.0, 0.0]]))


def test_synthesis_needs_matching_grid(rng):
    u = random_field(10, 1.0, rng)
    with pytest.raises(GridMismatchError):
        synthesize(u, grid_for(8))


def test_laplacian_of_coordinate():
    x3 = coordinate_field(3, 4)
    assert np.allclose(apply_laplacian(x3, "beltrami").coeffs, -4.0 * x3.coeffs)
    assert np.allclose(apply_laplacian(x3, "nonnegative").coeffs, 4.0 * x3.coeffs)


def test_laplacian_follows_settings(monkeypatch):
    x3 = coordinate_field(3, 4)
    monkeypatch.setattr(settings, "laplacian_convention", "nonnegative")
    assert np.allclose(apply_laplacian(x3).coeffs, 4.0 * x3.coeffs)


def test_paneitz_spectrum():
    lam = paneitz_eigenvalues(3)
    index = basis_index(3)
    for k, expected in ((0, 0.0), (1, 24.0), (2, 120.0), (3, 360.0)):
        assert np.all(lam[index.k == k] == expected)


def test_paneitz_factors_through_laplacian(band_limit, rng):
    u = random_field(band_limit, 1.0, rng)
    lap = apply_laplacian(u, "beltrami")
    composed = apply_laplacian(lap, "beltrami") - lap.scaled(2.0)
    assert np.allclose(apply_paneitz(u).coeffs, composed.coeffs, rtol=1e-13, atol=1e-9)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_harmonic_polynomials_have_pure_degree(band_limit, k):
    field = project_function(lambda *x: np.real((x[0] + 1j * x[1]) ** k), band_limit)
    energy = field.degree_energy()
    assert (energy.sum() - energy[k]) / energy.sum() < 1e-12


def test_projection_of_quadratic_splits_into_degrees_0_and_2():
    field = project_function(lambda *x: x[4] ** 2, 4)
    assert field.mean == pytest.approx(0.2, abs=1e-13)
    energy = field.degree_energy()
    assert energy[1] < 1e-26 and energy[3] < 1e-26 and energy[4] < 1e-26
    assert energy[2] > 0.01


@pytest.mark.parametrize("op", [apply_laplacian, apply_paneitz], ids=["laplacian", "paneitz"])
def test_green_identity(grid, rng, op):
    u = synthesize(random_field(grid.band_limit, 1.0, rng), grid)
    v = synthesize(random_field(grid.band_limit, 1.0, rng), grid)
    lhs = integrate(u * synthesize(op(analyze(v)), grid))
    rhs = integrate(v * synthesize(op(analyze(u)), grid))
    assert abs(lhs) > 1e-6
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs))


def test_corrupted_ordering_breaks_round_trip(monkeypatch, band_limit, rng):
    u = random_field(band_limit, 1.0, rng)
    monkeypatch.setattr(settings, "debug_corrupt_ordering", True)
    back = analyze(synthesize(u, grid_for(band_limit)))
    assert back.coeffs[1] == pytest.approx(u.coeffs[6], abs=1e-11)
    assert back.coeffs[6] == pytest.approx(u.coeffs[1], abs=1e-11)


def test_band_limited_field_has_no_tail(grid, smooth_field):
    assert tail_fraction(synthesize(smooth_field, grid), grid.band_limit) < 1e-13


def test_exponential_overflow_is_reported(grid):
    big = GridField(grid, np.full(grid.shape, 200.0))
    with pytest.raises(BlowUpError):
        pointwise_exp_product(big, 4.0)


def test_resize_keeps_low_coefficients(smooth_field):
    up = smooth_field.resized(10)
    assert up.band_limit == 10
    assert np.array_equal(up.coeffs[:smooth_field.coeffs.size], smooth_field.coeffs)
    assert np.array_equal(up.resized(smooth_field.band_limit).coeffs, smooth_field.coeffs)


def test_s3_rule_is_normalized_and_exact():
    dirs, w = s3_directions(4)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    # mean of d_i^2 over S^3 is 1/4
    assert float(w @ dirs[:, 0] ** 2) == pytest.approx(0.25, abs=1e-14)


def test_exp_map_moves_by_the_step_length(unit_points):
    frames = tangent_frames(unit_points)
    xi = np.tile([0.3, 0.0, 0.4, 0.0], (len(unit_points), 1))
    moved = exp_map(unit_points, frames, xi)
    assert np.allclose(geodesic_distance(unit_points, moved), 0.5, atol=1e-12)


def test_stereographic_chart_centre_and_unit_sphere():
    q = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    assert np.allclose(stereographic_inverse(q, np.zeros(4)), q)
    z = np.array([[1.0, 0.0, 0.0, 0.0]])
    # |z| = 1 maps to the equator of the chart, geodesic distance pi/2
    assert geodesic_distance(stereographic_inverse(q, z)[0], q) == pytest.approx(math.pi / 2, abs=1e-12)


def test_tail_fraction_of_values_near_the_overflow_limit(grid):
    x5 = np.array(grid.coordinates[4])
    huge = GridField(grid, 1e300 * (1.0 + 0.5 * x5))
    assert tail_fraction(huge, grid.band_limit) < 1e-12
    assert tail_fraction(GridField(grid, np.zeros(grid.shape)), grid.band_limit) == 0.0


def test_random_factor_has_zero_mean_and_the_requested_rms(rng):
    u = random_factor(8, 0.2, rng, max_degree=3)
    assert u.mean == 0.0
    assert math.sqrt(float(np.sum(u.coeffs ** 2))) == pytest.approx(0.2, rel=1e-12)
    assert u.degree_energy()[4:].sum() == 0.0

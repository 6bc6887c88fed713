import math

import numpy as np
import pytest
from scipy.special import eval_gegenbauer, roots_legendre

from config import settings
from core.errors import GaugeFailure, ResolutionError
from core.quadrature import SPHERE_VOLUME
from core.spectral import SpectralField, project_function, random_factor, random_field
from services.conformal_ops import liouville_energy, q_curvature, volume, volume_normalized
from services.mobius_gauge import (
    MobiusBoost,
    boost_apply,
    boost_factor,
    center_of_mass,
    gauge_diagnostics,
    normalize,
)

POLE = np.array([0.0, 0.0, 0.6, 0.0, 0.8])


def test_boost_maps_sphere_to_sphere(unit_points):
    images = MobiusBoost(POLE, 0.7).apply(unit_points)
    assert np.allclose(np.linalg.norm(images, axis=1), 1.0, atol=1e-13)


def test_boost_fixes_poles_and_moves_toward_pole():
    b = MobiusBoost(POLE, 0.7)
    assert np.allclose(b.apply(POLE), POLE)
    assert np.allclose(b.apply(-POLE), -POLE)
    x = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    assert float(b.apply(x)[0] @ POLE) == pytest.approx(math.tanh(0.7), abs=1e-14)


def test_inverse_and_composition(unit_points):
    b = MobiusBoost(POLE, 0.4)
    assert np.allclose(b.inverse().apply(b.apply(unit_points)), unit_points, atol=1e-13)
    c = b.then(MobiusBoost(POLE, 0.3))
    assert c.t == pytest.approx(0.7)
    assert b.then(b.inverse()).is_identity


def test_composition_needs_shared_pole():
    with pytest.raises(ValueError):
        MobiusBoost(POLE, 0.1).then(MobiusBoost(np.array([1.0, 0, 0, 0, 0]), 0.1))


def test_ball_parametrization_round_trip():
    a = 0.3 * POLE
    b = MobiusBoost.from_ball(a)
    assert np.allclose(b.ball_vector, a)
    assert MobiusBoost.from_ball(np.zeros(5)).is_identity
    with pytest.raises(ValueError):
        MobiusBoost.from_ball(POLE)


def test_pole_must_be_unit():
    with pytest.raises(ValueError):
        MobiusBoost(np.array([1.0, 1.0, 0.0, 0.0, 0.0]), 0.2)


def test_boost_factor_preserves_volume():
    # e^{4w} dv_c is the pullback of dv_c
    w = boost_factor(MobiusBoost(POLE, 0.5), 12)
    assert volume(w) == pytest.approx(SPHERE_VOLUME, rel=1e-8)


def test_boost_factor_matches_log_factor(unit_points):
    b = MobiusBoost(POLE, 0.3)
    assert np.allclose(boost_factor(b, 12).evaluate(unit_points), b.log_factor(unit_points), atol=1e-8)


def test_boost_of_round_metric_stays_round():
    v = boost_apply(SpectralField.zeros(12), MobiusBoost(POLE, 0.15))
    assert np.max(np.abs(q_curvature(v).values - 3.0)) < 1e-7


def test_boost_apply_then_inverse(smooth_field):
    u = smooth_field.resized(14)
    b = MobiusBoost(POLE, 0.3)
    back = boost_apply(boost_apply(u, b), b.inverse())
    assert (back - u).l2_norm() / u.l2_norm() < 1e-8


def test_boost_apply_preserves_energy_and_volume(smooth_field):
    u = smooth_field.resized(14)
    v = boost_apply(u, MobiusBoost(POLE, 0.2))
    assert volume(v) == pytest.approx(volume(u), rel=1e-9)
    assert liouville_energy(v) == pytest.approx(liouville_energy(u), abs=1e-8)


def test_strong_boost_is_unresolved():
    # a zonal degree-4 factor pushed toward the pole leaves the L = 4 band
    u = project_function(lambda *x: eval_gegenbauer(4, 1.5, 0.6 * x[2] + 0.8 * x[4]), 4)
    with pytest.raises(ResolutionError):
        boost_apply(u, MobiusBoost(POLE, 0.5))


def test_center_of_mass_of_round_metric_is_zero():
    assert np.linalg.norm(center_of_mass(SpectralField.zeros(6))) < 1e-14


def test_center_of_mass_points_away_from_the_pole():
    # e^{4w} concentrates at -p for t > 0
    com = center_of_mass(boost_factor(MobiusBoost(POLE, 0.5), 10))
    assert float(com @ POLE) < -0.1


def test_normalize_recovers_inverse_boost():
    b = MobiusBoost(POLE, 0.5)
    result = normalize(boost_factor(b, 14))
    assert result.com_norm_solved <= 1e-10
    assert result.com_norm_after <= 1e-7
    assert result.com_norm_before > 0.1
    assert np.linalg.norm(result.boost.ball_vector - b.inverse().ball_vector) < 1e-6
    assert np.max(np.abs(result.v.coeffs)) < 1e-6


def test_normalize_reports_the_center_of_mass_of_the_returned_factor(smooth_field):
    u = smooth_field.resized(10) + boost_factor(MobiusBoost(POLE, 0.3), 10)
    result = normalize(u)
    assert result.com_norm_after == pytest.approx(float(np.linalg.norm(center_of_mass(result.v))), rel=1e-12)
    assert result.com_norm_solved <= settings.gauge_tol
    assert result.com_norm_after <= 1e-6


def test_normalize_is_a_no_op_on_balanced_factor():
    result = normalize(SpectralField.zeros(8))
    assert result.iterations == 0
    assert result.boost.is_identity


def test_normalize_reports_non_convergence():
    with pytest.raises(GaugeFailure):
        normalize(boost_factor(MobiusBoost(POLE, 0.5), 10), max_iters=1, tol=1e-300)


def test_gauge_diagnostics_on_normalized_factor(smooth_field):
    result = normalize(smooth_field.resized(10))
    v, _ = volume_normalized(result.v)
    diag = gauge_diagnostics(v)
    assert diag.jensen_ok
    assert diag.h1_norm >= 0.0


def test_gauge_diagnostics_of_round_metric():
    u = SpectralField.zeros(4)
    diag = gauge_diagnostics(u)
    assert diag.mean_v == 0.0
    assert diag.h1_norm == 0.0
    assert diag.jensen_ok


def test_identity_boost_returns_the_same_field(band_limit, rng):
    u = random_field(band_limit, 0.1, rng)
    assert boost_apply(u, MobiusBoost.identity()) is u


@pytest.mark.slow
def test_normalize_at_acceptance_resolution():
    L = settings.test_band_limit
    b = MobiusBoost(POLE, 1.0)
    result = normalize(boost_factor(b, L))
    assert result.com_norm_solved <= 1e-10
    assert result.com_norm_after <= 1e-6
    assert np.linalg.norm(result.boost.ball_vector - b.inverse().ball_vector) < 1e-5


def _random_boosts(rng: np.random.Generator, count: int, t_max: float):
    poles = rng.normal(size=(count, 5))
    poles /= np.linalg.norm(poles, axis=1, keepdims=True)
    return [MobiusBoost(p, t) for p, t in zip(poles, rng.uniform(-t_max, t_max, size=count))]


def test_log_factor_is_a_volume_preserving_pullback():
    # int e^{4w} dc = 3/4 int_{-1}^{1} e^{4w(s)} (1 - s^2) ds for w zonal about the pole
    s, ws = roots_legendre(400)
    for b in _random_boosts(np.random.default_rng(31), 10, 2.0):
        e = np.linalg.svd(b.pole[None, :])[2][1]
        points = s[:, None] * b.pole[None, :] + np.sqrt(1.0 - s * s)[:, None] * e[None, :]
        mass = 0.75 * float(np.sum(ws * (1.0 - s * s) * np.exp(4.0 * b.log_factor(points))))
        assert mass == pytest.approx(1.0, rel=1e-7), b.describe()


@pytest.mark.slow
def test_random_boosts_keep_the_round_metric_and_the_energy():
    L = settings.default_band_limit
    rng = np.random.default_rng(47)
    for b in _random_boosts(rng, 10, 0.3):
        v = boost_apply(SpectralField.zeros(L), b)
        assert np.max(np.abs(q_curvature(v).values - 3.0)) <= 1e-7, b.describe()
        u = random_factor(L, 0.05, rng, max_degree=3)
        w = boost_apply(u, b)
        assert volume(w) == pytest.approx(volume(u), rel=1e-7)
        E = liouville_energy(u)
        assert abs(liouville_energy(w) - E) <= 1e-7 * (1.0 + abs(E))

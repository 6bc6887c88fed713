import itertools

import numpy as np
import pytest

from config import settings
from core.errors import DegenerateFunctionError
from core.spectral import SpectralField
from models.schemas import CriticalPoint
from services.function_specs import f_field
from services.morse_gate import (
    _stencil,
    build_report,
    chart_derivatives,
    check_function,
    degree_criterion,
    feasibility_bruteforce,
    solve_counting_system,
)

QUADRIC = "quadric:1,2,3.5,4,5;0"


def _counts(total: int):
    for m in itertools.product(range(total + 1), repeat=5):
        if sum(m) <= total:
            yield list(m)


@pytest.fixture(scope="module")
def quadric_report():
    return check_function(f_field(QUADRIC, 4))


def test_stencil_has_33_offsets():
    assert _stencil(1e-3).shape == (33, 4)


def test_chart_derivatives_of_a_coordinate():
    f = f_field("linear:0,0,0,0,1;0", 4)
    north = np.array([[0.0, 0.0, 0.0, 0.0, 1.0]])
    grad, hess, _ = chart_derivatives(f, north)
    assert np.linalg.norm(grad) < 1e-8
    # x5 = cos(r) near the pole: Hessian -I
    assert np.allclose(hess[0], -np.eye(4), atol=1e-4)


def test_tilted_linear_function_is_feasible():
    report = check_function(f_field("linear:0,0,0,0,1;2", 4))
    assert len(report.points) == 2
    assert report.m == [1, 0, 0, 0, 0]
    assert report.feasible
    assert not report.condition_satisfied
    assert report.k == [0, 0, 0, 0, 0]
    assert report.euler_sum == 2
    assert report.hypothesis_violations == []


def test_quadric_satisfies_the_condition(quadric_report):
    assert len(quadric_report.points) == 10
    assert quadric_report.m == [2, 2, 2, 0, 0]
    assert not quadric_report.feasible
    assert quadric_report.condition_satisfied
    assert quadric_report.k is None
    assert quadric_report.euler_sum == 2
    assert quadric_report.degree_sum == 2
    assert quadric_report.hypothesis_violations == []


def test_quadric_critical_points_sit_on_the_axes(quadric_report):
    for p in quadric_report.points:
        x = np.abs(np.array(p.location))
        assert np.max(x) == pytest.approx(1.0, abs=1e-8)
        i = int(np.argmax(x))
        a = [1.0, 2.0, 3.5, 4.0, 5.0][i]
        assert p.f_value == pytest.approx(a, abs=1e-8)
        assert p.laplacian_value == pytest.approx(31.0 - 10.0 * a, abs=1e-8)


def test_shifted_quadric_keeps_its_counts(quadric_report):
    shifted = f_field("quadric:1,2,3.5,4,5;-1.5", 4)
    report = build_report(quadric_report.points, shifted)
    assert report.m == [2, 2, 2, 0, 0]
    assert report.condition_satisfied
    assert min(p.f_value for p in report.points) == pytest.approx(-0.5, abs=1e-8)


def test_vanishing_laplacian_is_a_violation():
    report = check_function(f_field("quadric:1,2,3,4,5;0", 4))
    assert len(report.hypothesis_violations) == 2
    assert all("Laplacian" in v for v in report.hypothesis_violations)


def test_zero_level_critical_point_is_a_violation():
    report = check_function(f_field("linear:0,0,0,0,1;1", 4))
    assert any("f = 0" in v for v in report.hypothesis_violations)


def test_laplacian_sign_follows_the_convention(monkeypatch, quadric_report):
    flipped = [p.model_copy(update={"laplacian_value": -p.laplacian_value}) for p in quadric_report.points]
    monkeypatch.setattr(settings, "laplacian_convention", "nonnegative")
    assert build_report(flipped).m == [2, 2, 2, 0, 0]


def test_degenerate_point_is_reported():
    point = CriticalPoint(location=[0, 0, 0, 0, 1], f_value=1.0, grad_norm=0.0,
                          hessian_eigenvalues=[-1.0, -1.0, -1.0, 0.0], morse_index=3,
                          laplacian_value=-3.0, degenerate=True)
    report = build_report([point])
    assert report.m == [0, 0, 0, 0, 0]
    assert "degenerate" in report.hypothesis_violations[0]


def test_constant_function_is_degenerate():
    with pytest.raises(DegenerateFunctionError):
        check_function(SpectralField.constant(2.0, 4))


def test_counting_system_examples():
    assert solve_counting_system([1, 0, 0, 0, 0]) == (True, [0, 0, 0, 0])
    assert solve_counting_system([2, 2, 2, 0, 0]) == (False, [1, 1, 1, -1])
    assert solve_counting_system([0, 0, 0, 0, 0])[0] is False
    assert solve_counting_system([2, 2, 1, 0, 0]) == (True, [1, 1, 0, 0])


def test_recursion_agrees_with_exhaustive_search():
    for m in _counts(12):
        feasible, k = solve_counting_system(m)
        brute, k_brute = feasibility_bruteforce(m)
        assert feasible == brute, m
        if feasible:
            assert k_brute == k + [0]


def test_degree_criterion_agrees_with_recursion():
    for m in _counts(12):
        assert degree_criterion(m) == solve_counting_system(m)[0], m


def test_bruteforce_rejects_bad_counts():
    with pytest.raises(ValueError):
        feasibility_bruteforce([1, 0, 0, -1, 0])

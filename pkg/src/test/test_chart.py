import math

import numpy as np
import pytest

from foliate.exceptions import ConfigurationError, DomainError, UsageError
from foliate.geometry.chart import (
    Chart,
    QuadratureRule,
    ScalarField,
    constant_field,
    derived_field,
    directional_derivative,
    evaluate,
    fourier_interpolant,
    integrate,
    linear_combination,
    stack_fields,
    stencil_gradient,
)
from foliate.scenarios import carriere


def _torus() -> Chart:
    return Chart(("x", "y"), ((0.0, 1.0), (0.0, 1.0)), ("periodic", "periodic"))


def _sphere_chart() -> Chart:
    return Chart(
        ("s", "theta", "phi"),
        ((0.0, 1.0), (0.0, math.pi), (0.0, 2 * math.pi)),
        ("periodic", "open", "periodic"),
        polar=("theta",),
    )


def _wave(chart: Chart) -> ScalarField:
    # sin(2 pi x) cos(2 pi y) with its exact gradient
    def fn(p):
        return np.sin(2 * np.pi * p[0]) * np.cos(2 * np.pi * p[1])

    def grad(p):
        return np.stack(
            [
                2 * np.pi * np.cos(2 * np.pi * p[0]) * np.cos(2 * np.pi * p[1]),
                -2 * np.pi * np.sin(2 * np.pi * p[0]) * np.sin(2 * np.pi * p[1]),
            ]
        )

    return ScalarField(chart=chart, fn=fn, exact_grad=grad)


#####
# Chart construction
#####
def test_chart_rejects_empty_interval():
    with pytest.raises(UsageError):
        Chart(("x",), ((1.0, 1.0),), ("periodic",))


def test_chart_rejects_unknown_periodicity():
    with pytest.raises(UsageError):
        Chart(("x",), ((0.0, 1.0),), ("circular",))


def test_polar_axis_must_be_open():
    with pytest.raises(UsageError):
        Chart(("theta",), ((0.0, math.pi),), ("periodic",), polar=("theta",))


def test_unknown_axis_name():
    with pytest.raises(UsageError):
        _torus().axis("z")


def test_wrap_reduces_periodic_and_rejects_open():
    chart = _sphere_chart()

    wrapped = chart.wrap(np.array([1.25, 1.0, -0.5]))

    assert wrapped[0] == pytest.approx(0.25)
    assert wrapped[2] == pytest.approx(2 * math.pi - 0.5)
    with pytest.raises(DomainError):
        chart.wrap(np.array([0.0, 4.0, 0.0]))


def test_wrap_reduces_twisted_periodic_axes():
    #####
    # Scenario: a point outside the Carriere fundamental box on every axis
    # Expected: each twisted-periodic coordinate is reduced into [0, 1)
    #####
    chart = carriere().chart

    wrapped = chart.wrap(np.array([1.25, -0.5, 2.75]))

    np.testing.assert_allclose(wrapped, [0.25, 0.5, 0.75])


def test_polar_stencil_steps_shrink_near_poles():
    chart = _sphere_chart()
    points = np.array([[0.1, 0.1], [math.pi / 2, 0.01], [1.0, 1.0]])

    steps = chart.stencil_steps(points, 1e-3)

    assert steps[1, 0] == pytest.approx(1e-3)
    assert steps[1, 1] == pytest.approx(1e-3 * math.sin(0.01))
    assert np.all(steps[0] == 1e-3)


def test_random_points_stay_inside_open_axes():
    chart = _sphere_chart()

    points = chart.random_points(np.random.default_rng(0), 200)

    assert points.shape == (3, 200)
    assert np.all(points[1] > 0.05 * math.pi - 1e-12)
    assert np.all(points[1] < 0.95 * math.pi + 1e-12)


#####
# Fields and derivatives
#####
def test_stencil_gradient_matches_exact_gradient():
    chart = _torus()
    field = _wave(chart)
    points = chart.random_points(np.random.default_rng(1), 20)

    fd5 = stencil_gradient(field, points, 1e-3, 5)
    fd3 = stencil_gradient(field, points, 1e-5, 3)

    assert np.max(np.abs(fd5 - field.gradient(points))) < 1e-8
    assert np.max(np.abs(fd3 - field.gradient(points))) < 1e-6


def test_derived_field_uses_five_point_stencil():
    chart = _torus()
    wave = _wave(chart)
    squared = derived_field(chart, lambda p: wave(p) ** 2)
    points = chart.random_points(np.random.default_rng(2), 10)

    expected = 2 * wave(points) * wave.gradient(points)

    assert squared.stencil == 5
    assert np.max(np.abs(squared.gradient(points) - expected)) < 1e-7


def test_constant_field_has_zero_gradient_and_broadcasts():
    chart = _torus()
    field = constant_field(chart, np.eye(2))
    points = np.zeros((2, 3, 4))

    assert field(points).shape == (2, 2, 3, 4)
    assert field.gradient(points).shape == (2, 2, 2, 3, 4)
    assert not field.gradient(points).any()


def test_component_keeps_exact_gradient():
    chart = _torus()
    wave = _wave(chart)
    pair = stack_fields([wave, constant_field(chart, 3.0)])
    points = chart.random_points(np.random.default_rng(3), 5)

    first = pair.component(0)

    assert first.exact_grad is not None
    np.testing.assert_allclose(first(points), wave(points))
    np.testing.assert_allclose(first.gradient(points), wave.gradient(points))
    np.testing.assert_allclose(pair.component(1)(points), 3.0)


def test_stack_fields_rejects_non_scalar():
    chart = _torus()

    with pytest.raises(UsageError):
        stack_fields([constant_field(chart, np.ones(2))])


def test_linear_combination_needs_matching_lengths():
    chart = _torus()
    wave = _wave(chart)

    combo = linear_combination([2.0, -1.0], [wave, wave])
    points = chart.random_points(np.random.default_rng(4), 5)

    np.testing.assert_allclose(combo(points), wave(points))
    with pytest.raises(UsageError):
        linear_combination([1.0], [wave, wave])


def test_evaluate_wraps_periodic_coordinates():
    chart = _torus()
    wave = _wave(chart)

    assert evaluate(wave, np.array([1.25, 2.0])) == pytest.approx(1.0)


def test_directional_derivative_rejects_non_finite_direction():
    chart = _torus()
    wave = _wave(chart)

    assert directional_derivative(wave, np.array([0.0, 0.0]), np.array([1.0, 0.0])) == (
        pytest.approx(2 * np.pi)
    )
    with pytest.raises(DomainError):
        directional_derivative(wave, np.array([0.0, 0.0]), np.array([np.nan, 0.0]))


#####
# Quadrature
#####
def test_quadrature_needs_two_nodes_per_axis():
    with pytest.raises(ConfigurationError):
        QuadratureRule(_torus(), (1, 8))


def test_trapezoid_is_spectrally_accurate_on_periodic_axes():
    chart = _torus()
    rule = QuadratureRule.uniform(chart, 16)
    bump = ScalarField(
        chart=chart, fn=lambda p: np.exp(np.cos(2 * np.pi * p[0]) + np.sin(2 * np.pi * p[1]))
    )

    # the mean of exp(cos) over a period is I_0(1)
    i0 = 1.2660658777520082

    assert integrate(bump, rule) == pytest.approx(i0 * i0, abs=1e-12)


def test_polar_axis_integrates_area_element():
    chart = _sphere_chart()
    rule = QuadratureRule.uniform(chart, 8)

    area = rule.integrate_values(np.sin(rule.nodes[1]))

    assert area == pytest.approx(4 * math.pi, abs=1e-12)


def test_fourier_interpolant_reproduces_trig_polynomial():
    chart = _torus()
    rule = QuadratureRule.uniform(chart, 8)
    wave = _wave(chart)
    interp = fourier_interpolant(chart, (0, 1), wave(rule.nodes))
    points = chart.random_points(np.random.default_rng(5), 10)

    np.testing.assert_allclose(interp(points), wave(points), atol=1e-12)
    np.testing.assert_allclose(interp.gradient(points), wave.gradient(points), atol=1e-10)


def test_fourier_interpolant_needs_periodic_axes():
    chart = _sphere_chart()

    with pytest.raises(UsageError):
        fourier_interpolant(chart, (1,), np.zeros(4))

import math
from dataclasses import replace

import numpy as np
import pytest

from foliate.exceptions import DomainError, UsageError
from foliate.geometry.chart import constant_field, linear_combination
from foliate.geometry.operators import random_basic_function
from foliate.scenarios import carriere, flat_torus, product_sphere
from foliate.services.context import GeometryContext, Resolutions
from foliate.services.functionals import (
    F_Q,
    W_Q,
    assemble,
    classical_F,
    euler_lagrange_variance,
    first_variation_check,
    lambda_minimizer,
    lambda_Q,
    mu_Q,
    normalized_lambda_Q,
    normalizing_constant,
    potential_values,
    richardson,
)

LN_RHO = 0.9624236501192069
L2 = LN_RHO * LN_RHO
FLAT_MU = -math.log(4 * math.pi) - 2.0

SMALL = Resolutions(
    resolution=16, leaf_resolution=2, verify_resolution=4, suite_resolution=16, basis_modes=2
)


def _context(scenario):
    return GeometryContext(scenario, SMALL)


#####
# F^Q and W^Q by direct quadrature
#####
def test_F_Q_of_zero_on_carriere():
    #####
    # Scenario: f = 0 on the Carriere torus (unit volume)
    # Expected: F_Q = int S + |tau|^2 = -2 L^2 + L^2 = -L^2
    #####
    context = _context(carriere())

    assert context.volume() == pytest.approx(1.0, abs=1e-12)
    assert F_Q(context, constant_field(context.scenario.chart, 0.0)) == pytest.approx(
        -L2, abs=1e-8
    )


def test_classical_F_ignores_mean_curvature():
    context = _context(carriere())
    zero = constant_field(context.scenario.chart, 0.0)

    assert classical_F(context, zero) == pytest.approx(-2 * L2, abs=1e-8)


def test_W_Q_at_the_normalizing_constant_on_flat_torus():
    context = _context(flat_torus())
    c = normalizing_constant(context, 1.0)

    value = W_Q(context, constant_field(context.scenario.chart, c), 1.0)

    assert c == pytest.approx(-math.log(4 * math.pi), abs=1e-12)
    assert value == pytest.approx(FLAT_MU, abs=1e-10)


def test_W_Q_rejects_non_positive_sigma():
    context = _context(flat_torus())
    zero = constant_field(context.scenario.chart, 0.0)

    with pytest.raises(DomainError):
        W_Q(context, zero, 0.0)
    with pytest.raises(DomainError):
        W_Q(context, zero, -1.0)


def test_potential_on_carriere_is_constant():
    context = _context(carriere())

    values = potential_values(context, context.verify_nodes)

    np.testing.assert_allclose(values, -L2, atol=1e-8)


#####
# lambda^Q
#####
def test_lambda_Q_on_carriere():
    context = _context(carriere())

    report = lambda_Q(context)

    assert report.converged
    assert report.value == pytest.approx(-L2, abs=1e-6)
    assert report.constraint_residual < 1e-10
    assert report.diagnostics["dense_check"] == pytest.approx(report.value, abs=1e-8)


def test_normalized_lambda_Q_on_carriere():
    context = _context(carriere())

    report = normalized_lambda_Q(context, lambda_Q(context))

    assert report.value == pytest.approx(-L2, abs=1e-6)
    assert report.diagnostics["volume"] == pytest.approx(1.0, abs=1e-12)


def test_lambda_Q_on_sphere():
    context = _context(product_sphere())

    report = lambda_Q(context)

    assert report.value == pytest.approx(2.0, abs=1e-6)


def test_lambda_Q_on_flat_torus_is_zero():
    context = _context(flat_torus())
    system = assemble(context)

    report = lambda_Q(context, system)

    assert report.value == pytest.approx(0.0, abs=1e-10)
    assert len(report.minimizer_samples) > 0


def test_lambda_minimizer_satisfies_euler_lagrange():
    context = _context(carriere())

    f = lambda_minimizer(context)

    assert euler_lagrange_variance(context, f) < 1e-10


def test_unconverged_lambda_normalizes_to_nan():
    context = _context(carriere())
    report = lambda_Q(context, tolerance=0.0, max_iterations=1)

    normalized = normalized_lambda_Q(context, report)

    assert not report.converged
    assert not normalized.converged
    assert math.isnan(normalized.value)


def _normalized(context, f):
    """f + log int e^{-f} dV, so that int e^{-f} dV = 1."""
    rule = context.rule
    z = context.integrate(np.exp(-f(rule.nodes)), rule)
    return linear_combination([1.0, 1.0], [f, constant_field(context.scenario.chart, math.log(z))])


@pytest.mark.parametrize("build", [carriere, flat_torus])
def test_lambda_Q_bounds_F_Q_from_below(build):
    #####
    # Scenario: 20 seeded random basic f, each normalized to int e^{-f} dV = 1
    # Expected: lambda_Q <= F_Q(f) for every one of them
    #####
    context = _context(build())
    chart = context.scenario.chart
    axes = sorted(context.scenario.basic_indices)
    lam = lambda_Q(context).value

    for seed in range(20):
        f = random_basic_function(chart, axes, np.random.default_rng(seed))
        assert F_Q(context, _normalized(context, f)) >= lam - 1e-9, seed


@pytest.mark.parametrize("build", [carriere, product_sphere])
def test_lambda_Q_is_resolved(build):
    coarse = lambda_Q(_context(build())).value
    fine = lambda_Q(GeometryContext(build(), replace(SMALL, resolution=32))).value

    assert fine == pytest.approx(coarse, abs=1e-6)


@pytest.mark.parametrize("scale", [0.5, 2.0])
def test_normalized_lambda_Q_is_scale_invariant(scale):
    context = _context(carriere(scale=scale))

    report = normalized_lambda_Q(context)

    assert lambda_Q(context).value == pytest.approx(-L2 / scale, abs=1e-6)
    assert report.diagnostics["volume"] == pytest.approx(scale, abs=1e-10)
    assert report.value == pytest.approx(-L2, abs=1e-6)


#####
# mu^Q
#####
def test_mu_Q_on_flat_torus():
    #####
    # Scenario: flat torus, sigma = 1
    # Expected: the constant is the minimizer, mu = -log(4 pi) - 2
    #####
    context = _context(flat_torus())

    report = mu_Q(context, 1.0)

    assert report.converged
    assert report.sigma == 1.0
    assert report.value == pytest.approx(FLAT_MU, abs=1e-6)
    assert report.value <= report.diagnostics["start_constant"] + 1e-12
    assert report.constraint_residual < 1e-8


def test_mu_Q_rejects_non_positive_sigma():
    with pytest.raises(DomainError):
        mu_Q(_context(flat_torus()), 0.0)


@pytest.mark.parametrize("scale", [0.5, 2.0])
def test_mu_Q_is_invariant_under_joint_scaling(scale):
    #####
    # Scenario: g_Q -> c g_Q together with sigma -> c sigma on the flat torus
    # Expected: mu_Q does not move
    #####
    base = mu_Q(_context(flat_torus()), 1.0).value

    scaled = mu_Q(_context(flat_torus(scale=scale)), scale).value

    assert scaled == pytest.approx(base, abs=1e-5)


def test_mu_Q_on_flat_torus_rises_toward_zero():
    #####
    # Scenario: flat torus, sigma in {1, 0.1, 0.01}
    # Expected: negative values shrinking toward 0; the constant is optimal
    # while sigma is large and only an upper bound at sigma = 0.01
    #####
    context = _context(flat_torus())

    reports = [mu_Q(context, sigma) for sigma in (1.0, 0.1, 0.01)]
    values = [r.value for r in reports]

    assert values[0] == pytest.approx(FLAT_MU, abs=1e-6)
    assert values[1] == pytest.approx(-math.log(0.4 * math.pi) - 2.0, abs=1e-6)
    assert values[0] < values[1] < values[2]
    assert abs(values[2]) < abs(values[1]) < abs(values[0])
    assert values[2] <= reports[2].diagnostics["start_constant"] + 1e-12


#####
# First variations
#####
def test_richardson_is_exact_on_cubics():
    assert richardson(lambda e: 3 * e**3 + 2 * e**2 + 5 * e + 1) == pytest.approx(5.0, abs=1e-9)


def test_first_variation_on_carriere():
    context = _context(carriere())
    calc = context.calculus

    gaps = first_variation_check(context, calc.metric_form(), context.scenario.probe_rate)

    assert [g.name for g in gaps] == ["scalar_curvature", "F_Q", "W_Q", "drift_energy"]
    for g in gaps:
        assert g.gap < 1e-5, g.name


def test_first_variation_needs_symmetric_perturbation():
    context = _context(carriere())
    calc = context.calculus

    with pytest.raises(UsageError):
        first_variation_check(context, calc.kappa_form(), context.scenario.probe_rate)

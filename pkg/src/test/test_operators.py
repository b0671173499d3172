from dataclasses import replace

import numpy as np
import pytest

from foliate.exceptions import UsageError
from foliate.geometry.chart import constant_field
from foliate.geometry.operators import (
    BasicForm,
    function_form,
    integration_identity_suite,
    one_form,
    random_basic_function,
    random_basic_one_form,
    random_symmetric_tensor,
    random_two_form,
    zero_form,
)
from foliate.scenarios import carriere, flat_torus, product_sphere
from foliate.services.context import GeometryContext, Resolutions

LN_RHO = 0.9624236501192069
L2 = LN_RHO * LN_RHO

SMALL = Resolutions(
    resolution=16, leaf_resolution=2, verify_resolution=4, suite_resolution=24, basis_modes=2
)


def _context(scenario, resolutions=SMALL):
    return GeometryContext(scenario, resolutions)


#####
# BasicForm construction
#####
def test_form_degree_must_be_supported():
    chart = flat_torus().chart

    with pytest.raises(UsageError):
        BasicForm(3, constant_field(chart, np.zeros((2, 2, 2))))


def test_form_shape_must_match_degree():
    chart = flat_torus().chart

    with pytest.raises(UsageError):
        BasicForm(1, constant_field(chart, 0.0))


def test_only_two_tensors_carry_a_kind():
    chart = flat_torus().chart

    with pytest.raises(UsageError):
        BasicForm(1, constant_field(chart, np.zeros(2)), "symmetric")


def test_forms_of_different_degree_do_not_add():
    chart = flat_torus().chart

    with pytest.raises(UsageError):
        zero_form(chart, 1, 2) + zero_form(chart, 2, 2)


def test_form_arithmetic():
    chart = flat_torus().chart
    a = one_form(constant_field(chart, np.array([1.0, 2.0])))
    b = one_form(constant_field(chart, np.array([0.5, 0.5])))
    points = np.zeros((3, 2))

    combined = 2 * a - b + (-b)

    np.testing.assert_allclose(combined(points)[:, 0], [1.0, 3.0])


#####
# First- and second-order operators
#####
def test_d_B_of_probe_on_flat_torus():
    context = _context(flat_torus())
    calc = context.calculus
    f = function_form(context.scenario.probe_function)
    nodes = context.verify_nodes

    df = calc.d_B(f)(nodes)

    np.testing.assert_allclose(df[0], 0.0, atol=1e-12)
    np.testing.assert_allclose(df[1], -2 * np.pi * np.sin(2 * np.pi * nodes[2]), atol=1e-12)


def test_d_B_of_two_form_is_refused():
    calc = _context(flat_torus()).calculus

    with pytest.raises(UsageError):
        calc.d_B(zero_form(calc.chart, 2, 2))


def test_basic_laplacian_on_flat_torus():
    #####
    # Scenario: f = cos(2 pi t) on the flat torus
    # Expected: Delta_B f = 4 pi^2 f (non-negative Laplacian)
    #####
    context = _context(flat_torus())
    f = function_form(context.scenario.probe_function)
    nodes = context.verify_nodes

    lap = context.calculus.basic_laplacian(f)(nodes)

    np.testing.assert_allclose(lap, 4 * np.pi**2 * f(nodes), atol=1e-6)


def test_basic_laplacian_on_sphere():
    context = _context(product_sphere())
    f = function_form(context.scenario.probe_function)
    nodes = context.verify_nodes

    lap = context.calculus.basic_laplacian(f)(nodes)

    # cos(theta) is a first spherical harmonic
    np.testing.assert_allclose(lap, 2.0 * np.cos(nodes[1]), atol=1e-6)


def test_carriere_codifferentials_of_kappa():
    #####
    # Scenario: kappa_B = -L e^3 on the Carriere torus
    # Expected: delta_T kappa = -L^2 while delta_B kappa = 0
    #####
    context = _context(carriere())
    calc = context.calculus
    nodes = context.verify_nodes
    kappa = calc.kappa_form()

    np.testing.assert_allclose(calc.delta_T(kappa)(nodes), -L2, atol=1e-8)
    np.testing.assert_allclose(calc.delta_B(kappa)(nodes), 0.0, atol=1e-8)
    np.testing.assert_allclose(calc.d_B(kappa)(nodes), 0.0, atol=1e-8)


def test_delta_T_of_function_is_undefined():
    calc = _context(carriere()).calculus

    with pytest.raises(UsageError):
        calc.delta_T(zero_form(calc.chart, 0, 2))


#####
# Pairings
#####
def test_two_form_pairing_carries_one_half():
    context = _context(flat_torus())
    calc = context.calculus
    area = BasicForm(2, constant_field(calc.chart, np.array([[0.0, 1.0], [-1.0, 0.0]])))
    nodes = context.verify_nodes

    np.testing.assert_allclose(calc.norm_squared(area)(nodes), 1.0, atol=1e-12)


def test_symmetric_pairing_is_full_contraction():
    context = _context(carriere(scale=2.0))
    calc = context.calculus
    nodes = context.verify_nodes

    np.testing.assert_allclose(calc.norm_squared(calc.metric_form())(nodes), 2.0, atol=1e-12)
    np.testing.assert_allclose(calc.trace(calc.metric_form())(nodes), 2.0, atol=1e-12)


def test_pairing_needs_equal_degrees():
    calc = _context(flat_torus()).calculus

    with pytest.raises(UsageError):
        calc.inner(zero_form(calc.chart, 1, 2), zero_form(calc.chart, 2, 2))


#####
# Pointwise identities
#####
def test_weitzenbock_on_carriere_random_form():
    context = _context(carriere())
    calc = context.calculus
    eta = random_basic_one_form(calc, context.scenario.form_indices, np.random.default_rng(7))

    assert calc.weitzenbock_residual(eta, context.verify_nodes) < 1e-4


def test_weitzenbock_on_sphere_probe_form():
    context = _context(product_sphere())
    calc = context.calculus
    eta = one_form(context.scenario.probe_form)

    assert calc.weitzenbock_residual(eta, context.verify_nodes) < 1e-4


def test_bochner_on_carriere_probe_form():
    context = _context(carriere())
    calc = context.calculus
    eta = one_form(context.scenario.probe_form)
    nodes = context.verify_nodes

    assert calc.bochner_residual(eta, nodes) < 1e-4
    assert calc.rough_bochner_residual(eta, nodes) < 1e-4


def test_a_tau_matches_bundle_map():
    context = _context(carriere())
    calc = context.calculus
    eta = random_basic_one_form(calc, context.scenario.form_indices, np.random.default_rng(8))

    assert calc.a_tau_identity_residual(eta, context.verify_nodes) < 1e-6


def test_exponential_laplacian_on_flat_torus():
    context = _context(flat_torus())
    calc = context.calculus
    f = function_form(
        random_basic_function(calc.chart, context.scenario.form_indices, np.random.default_rng(9))
    )

    assert calc.exponential_laplacian_residual(f, context.verify_nodes) < 1e-4


def test_random_forms_are_reproducible_and_basic():
    context = _context(flat_torus())
    calc = context.calculus
    axes = context.scenario.form_indices
    nodes = context.verify_nodes

    first = random_basic_one_form(calc, axes, np.random.default_rng(3))(nodes)
    second = random_basic_one_form(calc, axes, np.random.default_rng(3))(nodes)
    h = random_symmetric_tensor(calc, axes, np.random.default_rng(4))
    omega = random_two_form(calc, axes, np.random.default_rng(5))

    np.testing.assert_array_equal(first, second)
    np.testing.assert_allclose(h(nodes), np.swapaxes(h(nodes), 0, 1), atol=1e-14)
    np.testing.assert_allclose(omega(nodes), -np.swapaxes(omega(nodes), 0, 1), atol=1e-14)
    assert calc.check_basic(h, nodes) < 1e-8


def test_random_function_needs_an_axis():
    chart = flat_torus().chart

    with pytest.raises(UsageError):
        random_basic_function(chart, (), np.random.default_rng(0))


#####
# Integration identities
#####
def test_integration_identities_on_carriere_probes():
    context = _context(carriere())
    calc = context.calculus
    scenario = context.scenario

    gaps = integration_identity_suite(
        calc,
        context.suite_rule,
        eta=one_form(scenario.probe_form),
        f=function_form(scenario.probe_function),
        fdot=function_form(scenario.probe_rate),
        h=calc.metric_form(),
        omega=zero_form(calc.chart, 2, 2),
    )

    assert {g.name for g in gaps} == {
        "divergence",
        "adjoint_functions",
        "adjoint_two_forms",
        "weighted_divergence",
        "double_divergence",
        "trace_laplacian",
        "gradient_pairing",
        "energy_rewrite",
        "exponential_laplacian",
    }
    for g in gaps:
        assert g.gap < 1e-6, g.name


def test_integration_identities_on_flat_torus_random_forms():
    context = _context(flat_torus(), replace(SMALL, suite_resolution=32))
    calc = context.calculus
    axes = context.scenario.form_indices
    rng = np.random.default_rng(11)

    gaps = integration_identity_suite(
        calc,
        context.suite_rule,
        eta=random_basic_one_form(calc, axes, rng),
        f=function_form(random_basic_function(calc.chart, axes, rng)),
        fdot=function_form(random_basic_function(calc.chart, axes, rng)),
        h=random_symmetric_tensor(calc, axes, rng),
        omega=random_two_form(calc, axes, rng),
    )

    for g in gaps:
        assert g.gap < 1e-4, g.name

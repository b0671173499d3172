import numpy as np
import pytest

from foliate.exceptions import ModelError, NumericError, UsageError
from foliate.geometry.chart import QuadratureRule, ScalarField
from foliate.geometry.frame import (
    FramePresentation,
    MetricField,
    compatibility_residual,
    first_bianchi_residual,
    koszul,
    levi_civita,
    lie_bracket,
    torsion_residual,
)
from foliate.scenarios import carriere, flat_torus, product_nil, product_sphere

LN_RHO = 0.9624236501192069


def _nodes(scenario, n=4):
    return QuadratureRule.uniform(scenario.chart, n).nodes


#####
# Frames and structure constants
#####
def test_carriere_structure_constants():
    #####
    # Scenario: e1 = rho^-t d_x, e2 = rho^t d_y, e3 = d_t
    # Expected: [e3, e2] = L e2, [e3, e1] = -L e1, the leaf block is involutive
    #####
    scenario = carriere()
    nodes = _nodes(scenario)

    c = scenario.frame.structure(nodes)

    np.testing.assert_allclose(c[2, 1, 1], LN_RHO, atol=1e-12)
    np.testing.assert_allclose(c[1, 2, 1], -LN_RHO, atol=1e-12)
    np.testing.assert_allclose(c[2, 0, 0], -LN_RHO, atol=1e-12)
    np.testing.assert_allclose(c[0, 1], 0.0, atol=1e-12)
    assert scenario.frame.involutivity_residual(nodes) < 1e-12


def test_nil_bracket_is_the_central_direction():
    scenario = product_nil()
    nodes = _nodes(scenario, 3)

    c = scenario.frame.structure(nodes)

    # [e_x, e_y] = e_z in the Milnor frame
    np.testing.assert_allclose(c[1, 2, 3], 1.0, atol=1e-12)
    np.testing.assert_allclose(c[2, 1, 3], -1.0, atol=1e-12)


def test_lie_bracket_matches_structure_constants():
    scenario = carriere()
    e1, e2, e3 = scenario.frame.frame
    nodes = _nodes(scenario, 3)

    bracket = lie_bracket(e3, e2)(nodes)

    np.testing.assert_allclose(bracket, LN_RHO * e2(nodes), atol=1e-9)


def test_degenerate_foliation_is_a_model_error():
    chart = flat_torus().chart
    frame = flat_torus().frame.frame

    with pytest.raises(ModelError):
        FramePresentation(chart, frame, p=0, q=3)


def test_frame_size_must_match_chart():
    scenario = flat_torus()

    with pytest.raises(UsageError):
        FramePresentation(scenario.chart, scenario.frame.frame[:2], p=1, q=1)


def test_singular_frame_is_reported():
    scenario = flat_torus()
    e = scenario.frame.frame
    frame = FramePresentation(scenario.chart, (e[0], e[1], e[1]), p=1, q=2)

    with pytest.raises(NumericError) as exc_info:
        frame.check_independence(_nodes(scenario, 2))

    assert "singular" in str(exc_info.value)


#####
# Metrics and the ambient connection
#####
def test_non_positive_metric_names_a_node():
    scenario = flat_torus()
    chart = scenario.chart
    bad = ScalarField(chart=chart, fn=lambda p: np.diag([1.0, -1.0]), shape=(2, 2))
    metric = MetricField(scenario.frame, bad)

    with pytest.raises(NumericError) as exc_info:
        metric.check(_nodes(scenario, 2))

    assert "not positive definite" in str(exc_info.value)


def test_transverse_metric_shape_is_checked():
    scenario = flat_torus()
    wrong = ScalarField(chart=scenario.chart, fn=lambda p: np.eye(3), shape=(3, 3))

    with pytest.raises(UsageError):
        MetricField(scenario.frame, wrong)


def test_sphere_density_is_the_area_element():
    scenario = product_sphere(radius=2.0)
    nodes = np.array([[0.3], [0.7], [1.0]])

    density = scenario.metric.density(nodes)

    np.testing.assert_allclose(density, 4.0 * np.sin(0.7), rtol=1e-12)


def test_carriere_ambient_connection():
    #####
    # Scenario: Koszul formula in the orthonormal Carriere frame
    # Expected: D_{e2} e2 = L e3, D_{e1} e1 = -L e3, D_{e3} vanishes
    #####
    scenario = carriere()
    nodes = _nodes(scenario)

    gam = koszul(scenario.metric, nodes)

    np.testing.assert_allclose(gam[1, 1, 2], LN_RHO, atol=1e-12)
    np.testing.assert_allclose(gam[1, 2, 1], -LN_RHO, atol=1e-12)
    np.testing.assert_allclose(gam[0, 0, 2], -LN_RHO, atol=1e-12)
    np.testing.assert_allclose(gam[2], 0.0, atol=1e-12)


@pytest.mark.parametrize("build", [carriere, flat_torus, product_nil])
def test_levi_civita_is_torsion_free_and_compatible(build):
    scenario = build()
    conn = levi_civita(scenario.metric)
    nodes = _nodes(scenario, 3)

    assert torsion_residual(conn, nodes) < 1e-10
    assert compatibility_residual(conn, nodes) < 1e-10


def test_first_bianchi_identity_on_carriere():
    scenario = carriere()
    conn = levi_civita(scenario.metric)

    assert first_bianchi_residual(conn, _nodes(scenario, 3)) < 1e-6


def test_connection_values_are_memoized():
    scenario = carriere()
    conn = levi_civita(scenario.metric)
    nodes = _nodes(scenario, 2)

    first = conn(nodes)
    second = conn(nodes.copy())

    assert first is second
    assert not first.flags.writeable

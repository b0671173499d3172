import numpy as np
import pytest

from foliate.exceptions import UsageError
from foliate.geometry.chart import constant_field, derived_field
from foliate.scenarios import carriere, flat_torus, product_sphere
from foliate.services.context import GeometryContext, Resolutions
from foliate.services.soliton import (
    SolitonCandidate,
    classify,
    fit_lambda,
    gradient_identity_suite,
    lie_derivative_metric,
    residual_norms,
    soliton_residual,
    theorem_consistency_report,
    twisted_identity_suite,
)

LN_RHO = 0.9624236501192069
L2 = LN_RHO * LN_RHO

SMALL = Resolutions(
    resolution=16, leaf_resolution=2, verify_resolution=4, suite_resolution=8, basis_modes=2
)


def _context(scenario):
    return GeometryContext(scenario, SMALL)


#####
# Candidates
#####
def test_generic_candidate_refuses_potential():
    context = _context(carriere())

    with pytest.raises(UsageError):
        SolitonCandidate(context, f=constant_field(context.scenario.chart, 0.0))


def test_gradient_candidate_refuses_vector_field():
    context = _context(carriere())

    with pytest.raises(UsageError):
        SolitonCandidate(
            context, x=constant_field(context.scenario.chart, np.zeros(2)), kind="gradient"
        )


@pytest.mark.parametrize(
    ("lam", "expected"),
    [(0.5, "shrinking"), (-0.5, "expanding"), (1e-9, "steady"), (-1e-9, "steady")],
)
def test_classify(lam, expected):
    assert classify(lam) == expected


#####
# Lie derivative of the transverse metric
#####
def test_constant_field_on_flat_torus_is_killing():
    context = _context(flat_torus())
    calc = context.calculus
    x = constant_field(context.scenario.chart, np.array([1.0, 0.0]))

    lie = lie_derivative_metric(calc, x, context.verify_nodes)

    np.testing.assert_allclose(lie(context.verify_nodes), 0.0, atol=1e-12)


def test_mean_curvature_field_stretches_carriere():
    #####
    # Scenario: X = tau = -L e3 on the Carriere torus
    # Expected: L_X g_Q = diag(2 L^2, 0) in the (e2, e3) frame
    #####
    context = _context(carriere())
    calc = context.calculus
    tau = calc.geometry.tau_field
    nodes = context.verify_nodes

    lie = lie_derivative_metric(calc, tau)(nodes)

    np.testing.assert_allclose(lie[0, 0], 2 * L2, atol=1e-8)
    np.testing.assert_allclose(lie[0, 1], 0.0, atol=1e-8)
    np.testing.assert_allclose(lie[1, 1], 0.0, atol=1e-8)


def test_lie_derivative_needs_a_transverse_vector():
    context = _context(flat_torus())

    with pytest.raises(UsageError):
        lie_derivative_metric(context.calculus, constant_field(context.scenario.chart, 0.0))


def test_lie_derivative_needs_a_basic_field():
    context = _context(flat_torus())
    chart = context.scenario.chart

    def fn(p):
        return np.stack([np.sin(2 * np.pi * p[0]), np.zeros_like(p[0])])

    x = derived_field(chart, fn, (2,))

    with pytest.raises(UsageError):
        lie_derivative_metric(context.calculus, x, context.verify_nodes)


#####
# Residuals
#####
def test_carriere_is_an_expanding_soliton():
    context = _context(carriere())
    candidate = SolitonCandidate(context)

    report = soliton_residual(candidate)

    assert report.fitted_lambda == pytest.approx(-L2, abs=1e-8)
    assert report.classification == "expanding"
    assert report.applicable
    assert report.residual("soliton").sup < 1e-8


def test_twisted_candidate_on_carriere_is_not_a_soliton():
    context = _context(carriere())
    candidate = SolitonCandidate(context, kind="twisted-gradient")

    report = soliton_residual(candidate)

    assert report.classification == "not-a-soliton"
    assert not report.applicable
    assert report.fitted_lambda == pytest.approx(-L2 / 2, abs=1e-8)


def test_fixed_lambda_is_not_refitted():
    context = _context(carriere())
    candidate = SolitonCandidate(context, lam=1.0)

    report = soliton_residual(candidate)

    assert report.fitted_lambda == 1.0
    assert report.classification == "not-a-soliton"
    assert fit_lambda(candidate) == pytest.approx(-L2, abs=1e-8)


def test_flat_torus_translation_is_steady():
    context = _context(flat_torus())
    x = constant_field(context.scenario.chart, np.array([0.0, 1.0]))

    report = soliton_residual(SolitonCandidate(context, x=x))

    assert report.classification == "steady"


def test_sphere_is_a_shrinking_soliton():
    context = _context(product_sphere())

    report = soliton_residual(SolitonCandidate(context), tolerance=1e-4)

    assert report.classification == "shrinking"
    assert report.fitted_lambda == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("kind", ["generic", "twisted-gradient"])
def test_fitted_lambda_minimizes_the_residual(kind):
    #####
    # Scenario: the fitted lambda on Carriere, then moved by 0.01 either way
    # Expected: the L2 residual strictly grows on both sides, soliton or not
    #####
    candidate = SolitonCandidate(_context(carriere()), kind=kind)
    lam = fit_lambda(candidate)

    best = residual_norms(candidate, lam).l2

    assert residual_norms(candidate, lam - 0.01).l2 > best
    assert residual_norms(candidate, lam + 0.01).l2 > best


@pytest.mark.parametrize("scale", [2.0, 4.0])
def test_classification_is_scale_covariant(scale):
    #####
    # Scenario: g_Q replaced by c g_Q
    # Expected: lambda becomes lambda / c and the verdict does not change
    #####
    carriere_report = soliton_residual(SolitonCandidate(_context(carriere(scale=scale))))
    sphere_report = soliton_residual(
        SolitonCandidate(_context(product_sphere(scale=scale))), tolerance=1e-4
    )

    assert carriere_report.fitted_lambda == pytest.approx(-L2 / scale, abs=1e-8)
    assert carriere_report.classification == "expanding"
    assert sphere_report.fitted_lambda == pytest.approx(1.0 / scale, abs=1e-5)
    assert sphere_report.classification == "shrinking"


#####
# Identity suites
#####
def test_gradient_identities_on_carriere():
    context = _context(carriere())

    report = gradient_identity_suite(SolitonCandidate(context, kind="gradient"))

    assert report.applicable
    assert [r.name for r in report.residuals] == [
        "soliton",
        "gradient_trace",
        "gradient_conservation",
        "gradient_contracted_bianchi",
        "gradient_scalar_laplacian",
    ]
    for r in report.residuals:
        assert r.passed, r.name
    assert report.notes == ()


def test_twisted_suite_flags_non_soliton():
    context = _context(carriere())

    report = twisted_identity_suite(SolitonCandidate(context))

    assert not report.applicable
    assert report.residuals[0].name == "soliton"
    assert "twisted_tautness" in [r.name for r in report.residuals]
    assert len(report.notes) == 1


#####
# Implications
#####
def test_carriere_consistency():
    context = _context(carriere())

    report = theorem_consistency_report(SolitonCandidate(context))
    verdicts = {v.name: v for v in report.verdicts}

    assert report.tautness == "non-taut"
    assert report.classification == "expanding"
    assert report.consistent
    assert verdicts["non_taut_implies_expanding"].applicable
    assert verdicts["non_taut_implies_expanding"].holds
    assert verdicts["expanding_gradient_is_einstein"].holds
    assert not verdicts["shrinking_implies_taut"].applicable


def test_flat_torus_steady_consistency():
    context = _context(flat_torus())
    x = constant_field(context.scenario.chart, np.array([0.0, 1.0]))

    report = theorem_consistency_report(SolitonCandidate(context, x=x))
    verdicts = {v.name: v for v in report.verdicts}

    assert report.consistent
    assert verdicts["steady_implies_ricci_flat"].holds
    assert verdicts["taut_soliton_is_gradient"].holds


def test_sphere_consistency():
    context = _context(product_sphere())
    candidate = SolitonCandidate(context)
    residual = soliton_residual(candidate, tolerance=1e-4)

    report = theorem_consistency_report(candidate, residual)
    verdicts = {v.name: v for v in report.verdicts}

    assert report.tautness == "taut"
    assert verdicts["shrinking_implies_taut"].holds
    assert report.consistent

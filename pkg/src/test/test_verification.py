from dataclasses import replace

import numpy as np
import pytest

from foliate.config import Tolerances
from foliate.exceptions import UsageError
from foliate.scenarios import carriere, flat_torus
from foliate.services.context import GeometryContext, Resolutions
from foliate.services.verification import (
    OPERATOR_IDENTITIES,
    GoldenEvaluator,
    curvature_suite,
    golden_checks,
    integration_suite,
    operator_suite,
    probe_points,
    scenario_candidate,
    soliton_checks,
    transverse_torsion_residual,
    verify_scenario,
)

LN_RHO = 0.9624236501192069

SMALL = Resolutions(
    resolution=16, leaf_resolution=2, verify_resolution=4, suite_resolution=32, basis_modes=2
)


def _context(scenario, flip=False):
    return GeometryContext(scenario, SMALL, flip_connection_sign=flip)


#####
# Curvature suite
#####
@pytest.mark.parametrize("build", [flat_torus, carriere])
def test_curvature_suite_passes(build):
    suite = curvature_suite(_context(build()), Tolerances())

    assert suite.name == "curvature"
    assert suite.passed, suite.failures
    assert "transverse_torsion" in [r.name for r in suite.residuals]


def test_flipped_connection_is_detected():
    #####
    # Scenario: the Q x Q connection block negated on the Carriere torus
    # Expected: the transverse torsion check fails while ambient checks hold
    #####
    context = _context(carriere(), flip=True)

    suite = curvature_suite(context, Tolerances())

    assert "curvature.transverse_torsion" in suite.failures
    assert "curvature.ambient_torsion" not in suite.failures
    assert transverse_torsion_residual(context.geometry, context.verify_nodes) == pytest.approx(
        2 * LN_RHO
    )


#####
# Operator and integration suites
#####
def test_probe_points_are_seeded():
    context = _context(carriere())

    first = probe_points(context, np.random.default_rng(1), count=10)
    second = probe_points(context, np.random.default_rng(1), count=10)

    assert first.shape == (3, 10)
    np.testing.assert_array_equal(first, second)


def test_probe_points_are_capped_by_the_grid():
    context = _context(carriere())

    points = probe_points(context, np.random.default_rng(1), count=10_000)

    assert points.shape == (3, 4**3)


def test_operator_suite_on_carriere():
    suite = operator_suite(_context(carriere()), Tolerances(), seed=0, forms=1)

    assert [r.name for r in suite.residuals] == ["test_forms_basic", *OPERATOR_IDENTITIES]
    assert suite.passed, suite.failures
    assert "seed 0" in suite.notes[0]


def test_integration_suite_on_carriere():
    suite = integration_suite(_context(carriere()), Tolerances(), seed=0, forms=1)

    assert len(suite.residuals) == 9
    assert suite.passed, suite.failures


#####
# Solitons
#####
def test_scenario_candidates():
    assert scenario_candidate(_context(carriere())).kind == "generic"
    assert scenario_candidate(_context(flat_torus())).kind == "gradient"


@pytest.mark.parametrize(("build", "expected"), [(carriere, "expanding"), (flat_torus, "steady")])
def test_soliton_checks(build, expected):
    checks = soliton_checks(_context(build()), Tolerances())

    assert checks.expected_class == expected
    assert checks.soliton.classification == expected
    assert checks.failures == ()
    assert checks.consistency.consistent


#####
# Golden values
#####
def test_carriere_golden_values():
    results = golden_checks(_context(carriere()))

    assert {r.name for r in results} >= {"scalar_curvature", "lambda_Q", "soliton_lambda"}
    for r in results:
        assert r.passed, (r.name, r.value, r.expected)
        assert r.provenance.startswith("[")


def test_golden_subset():
    results = golden_checks(_context(carriere()), names=frozenset({"ln_rho"}))

    assert [r.name for r in results] == ["ln_rho"]
    assert results[0].value == pytest.approx(LN_RHO, abs=1e-12)


def test_unknown_golden_name():
    evaluator = GoldenEvaluator(_context(carriere()))

    with pytest.raises(UsageError):
        evaluator.value("torsion_norm", 0.0)


def test_unknown_cycle():
    evaluator = GoldenEvaluator(_context(carriere()))

    with pytest.raises(UsageError):
        evaluator.value("loop_integral:x-loop", 0.0)


#####
# Whole run
#####
def test_verify_flat_torus():
    verification = verify_scenario(_context(flat_torus()), Tolerances(), seed=0, forms=1)

    assert verification.passed, verification.failures
    assert [s.name for s in verification.suites] == ["curvature", "operators", "integration"]
    assert all(g.passed for g in verification.golden)


def test_verify_reports_mutation():
    context = GeometryContext(carriere(), replace(SMALL, suite_resolution=16), True)

    verification = verify_scenario(context, Tolerances(), seed=0, forms=0)

    assert not verification.passed
    assert "curvature.transverse_torsion" in verification.failures

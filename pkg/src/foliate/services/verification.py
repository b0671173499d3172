"""
Residual suites behind `foliate verify`.

What lives here
- `curvature_suite`: structural identities of the frame, the ambient and
  the transverse connection, and the curvature (Bianchi, symmetries).
- `operator_suite`: pointwise operator identities (Weitzenbock, Bochner,
  rough Bochner, A_tau, exponential Laplacian) on seeded random basic forms.
- `integration_suite`: the integrated identities on the suite grid.
- `soliton_checks`: the scenario's soliton candidate through the residual,
  gradient and twisted suites and the implication cross-check.
- `GoldenEvaluator`: computes the value behind every golden registry name.

Every check is an `IdentityResidual`; pointwise-only checks carry l2 = nan.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from foliate.config import ScenarioParams, Tolerances
from foliate.exceptions import usage_error
from foliate.geometry.chart import DEFAULT_FD_STEP, Array, constant_field, stencil_gradient
from foliate.geometry.frame import (
    as_matrices,
    batched_inverse,
    compatibility_residual,
    first_bianchi_residual,
    lowered_curvature,
    torsion_residual,
)
from foliate.geometry.operators import (
    BasicForm,
    function_form,
    integration_identity_suite,
    one_form,
    random_basic_function,
    random_basic_one_form,
    random_symmetric_tensor,
    random_two_form,
)
from foliate.geometry.transverse import (
    MeanCurvatureData,
    TransverseCurvature,
    TransverseGeometry,
    bundle_like_residual,
    contracted_bianchi_residual,
    mean_curvature,
    second_bianchi_residual,
)
from foliate.scenarios import GoldenValue
from foliate.services.context import GeometryContext
from foliate.services.functionals import F_Q, FunctionalReport, lambda_Q, normalized_lambda_Q
from foliate.services.soliton import (
    ConsistencyReport,
    IdentityResidual,
    ResidualReport,
    SolitonCandidate,
    fit_lambda,
    gradient_identity_suite,
    soliton_residual,
    theorem_consistency_report,
    twisted_identity_suite,
)

logger = logging.getLogger("foliate.verification")

PROBE_POINTS = 48


@dataclass(frozen=True)
class SuiteResult:
    name: str
    residuals: tuple[IdentityResidual, ...]
    elapsed_ms: float
    notes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.residuals)

    @property
    def failures(self) -> list[str]:
        return [f"{self.name}.{r.name}" for r in self.residuals if not r.passed]


def _check(name: str, value: float, tolerance: float) -> IdentityResidual:
    return IdentityResidual(name=name, sup=float(value), l2=math.nan, tolerance=tolerance)


def _finish(
    name: str, residuals: list[IdentityResidual], started: float, notes: list[str] | None = None
) -> SuiteResult:
    elapsed = 1000 * (time.perf_counter() - started)
    suite = SuiteResult(name, tuple(residuals), elapsed, tuple(notes or ()))
    logger.info(
        "%s suite: %d/%d within tolerance (%.1f ms)",
        name,
        sum(r.passed for r in residuals),
        len(residuals),
        suite.elapsed_ms,
    )
    return suite


# -- curvature -------------------------------------------------------------


def transverse_torsion_residual(geometry: TransverseGeometry, points: Array) -> float:
    """max |nabla_a e_b - nabla_b e_a - pi[e_a, e_b]| over transverse a, b."""
    p = geometry.p
    gam = geometry.connection(points)[p:, p:, p:]
    c = geometry.frame.structure(points)[p:, p:, p:]
    return float(np.max(np.abs(gam - np.swapaxes(gam, 0, 1) - c)))


def transverse_compatibility_residual(geometry: TransverseGeometry, points: Array) -> float:
    """max |e_i(G_ab) - G(nabla_i e_a, e_b) - G(e_a, nabla_i e_b)| over every frame index i."""
    g = geometry.G(points)
    e = geometry.frame.matrix(points)
    eg = np.einsum("im...,abm...->iab...", e, geometry.metric.transverse_gradient(points))
    low = np.einsum("iam...,mb...->iab...", geometry.gamma(points), g)
    return float(np.max(np.abs(eg - low - np.swapaxes(low, 1, 2))))


def analytic_gradient_residual(context: GeometryContext, step: float) -> float:
    """max gap between the supplied gradients of the frame, g_Q and the probes and central
    differences at `step`."""
    nodes = context.verify_nodes
    chart = context.scenario.chart
    steps = chart.stencil_steps(nodes, step)
    frame = context.scenario.frame
    metric = context.metric
    scenario = context.scenario
    pairs = [
        (frame.matrix, frame.matrix_gradient),
        (metric.transverse_matrix, metric.transverse_gradient),
        (scenario.probe_function, scenario.probe_function.gradient),
        (scenario.probe_rate, scenario.probe_rate.gradient),
        (scenario.probe_form, scenario.probe_form.gradient),
    ]
    return max(
        float(np.max(np.abs(grad(nodes) - stencil_gradient(fn, nodes, steps, 3))))
        for fn, grad in pairs
    )


def _cyclic(r: Array) -> float:
    cyc = r + np.einsum("bcan...->abcn...", r) + np.einsum("cabn...->abcn...", r)
    return float(np.max(np.abs(cyc)))


def _pair_antisymmetry(r: Array) -> float:
    return float(
        max(np.max(np.abs(r + np.swapaxes(r, 0, 1))), np.max(np.abs(r + np.swapaxes(r, 2, 3))))
    )


def curvature_suite(
    context: GeometryContext, tolerances: Tolerances, fd_step: float = DEFAULT_FD_STEP
) -> SuiteResult:
    started = time.perf_counter()
    geo = context.geometry
    nodes = context.verify_nodes
    analytic, fd = tolerances.analytic, tolerances.finite_difference
    curvature = geo.curvature(nodes)
    lowered = lowered_curvature(geo.ambient, nodes)
    mc = mean_curvature(context.metric, points=nodes, require_basic=False, geometry=geo)
    checks = [
        ("analytic_gradients", analytic_gradient_residual(context, fd_step), fd),
        ("involutivity", geo.frame.involutivity_residual(nodes), analytic),
        ("bundle_like", bundle_like_residual(context.metric, nodes), analytic),
        ("ambient_torsion", torsion_residual(geo.ambient, nodes), analytic),
        ("ambient_compatibility", compatibility_residual(geo.ambient, nodes), analytic),
        ("ambient_first_bianchi", first_bianchi_residual(geo.ambient, nodes), fd),
        ("ambient_pair_antisymmetry", _pair_antisymmetry(lowered), fd),
        ("transverse_torsion", transverse_torsion_residual(geo, nodes), analytic),
        ("transverse_compatibility", transverse_compatibility_residual(geo, nodes), analytic),
        ("transverse_first_bianchi", _cyclic(curvature.riemann), fd),
        ("ricci_symmetry", curvature.symmetry_residual(), fd),
        ("ricci_trace", curvature.trace_residual(), analytic),
        ("contracted_bianchi", contracted_bianchi_residual(geo, nodes), fd),
        ("second_bianchi", second_bianchi_residual(geo, nodes), fd),
        ("kappa_basic", mc.leaf_derivative, analytic),
        ("kappa_closed", mc.closedness, analytic),
    ]
    return _finish("curvature", [_check(*c) for c in checks], started)


# -- operator identities ---------------------------------------------------


def probe_points(
    context: GeometryContext, rng: np.random.Generator, count: int = PROBE_POINTS
) -> Array:
    """A seeded subset of the verify grid, shape (dim, count)."""
    nodes = context.verify_nodes
    flat = nodes.reshape(nodes.shape[0], -1)
    idx = np.sort(rng.choice(flat.shape[1], size=min(count, flat.shape[1]), replace=False))
    return flat[:, idx]


def _test_pairs(
    context: GeometryContext, rng: np.random.Generator, forms: int
) -> list[tuple[BasicForm, BasicForm]]:
    """The scenario's probe pair followed by `forms` seeded random (eta, f) pairs."""
    scenario = context.scenario
    calc = context.calculus
    axes = scenario.form_indices
    pairs = [(one_form(scenario.probe_form), function_form(scenario.probe_function))]
    for _ in range(forms):
        eta = random_basic_one_form(calc, axes, rng)
        f = function_form(random_basic_function(scenario.chart, axes, rng))
        pairs.append((eta, f))
    return pairs


OPERATOR_IDENTITIES = (
    "weitzenbock",
    "bochner",
    "rough_bochner",
    "a_tau_bundle_map",
    "exponential_laplacian",
)


def operator_suite(
    context: GeometryContext, tolerances: Tolerances, seed: int, forms: int
) -> SuiteResult:
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    calc = context.calculus
    points = probe_points(context, rng)
    worst = dict.fromkeys(OPERATOR_IDENTITIES, 0.0)
    leaf = 0.0
    for eta, f in _test_pairs(context, rng, forms):
        leaf = max(leaf, calc.geometry.leaf_derivative(eta.field, points))
        values = (
            calc.weitzenbock_residual(eta, points),
            calc.bochner_residual(eta, points),
            calc.rough_bochner_residual(eta, points),
            calc.a_tau_identity_residual(eta, points),
            calc.exponential_laplacian_residual(f, points),
        )
        for name, v in zip(OPERATOR_IDENTITIES, values, strict=True):
            worst[name] = max(worst[name], v)
    residuals = [_check("test_forms_basic", leaf, tolerances.analytic)]
    residuals += [_check(n, worst[n], tolerances.finite_difference) for n in OPERATOR_IDENTITIES]
    notes = [f"{forms} random forms plus the probe form at {points.shape[1]} nodes (seed {seed})"]
    return _finish("operators", residuals, started, notes)


def integration_suite(
    context: GeometryContext, tolerances: Tolerances, seed: int, forms: int
) -> SuiteResult:
    started = time.perf_counter()
    rng = np.random.default_rng(seed + 1)
    scenario = context.scenario
    calc = context.calculus
    axes = scenario.form_indices
    worst: dict[str, float] = {}
    for k in range(forms + 1):
        if k == 0:
            eta = one_form(scenario.probe_form)
            f = function_form(scenario.probe_function)
            fdot = function_form(scenario.probe_rate)
        else:
            eta = random_basic_one_form(calc, axes, rng)
            f = function_form(random_basic_function(scenario.chart, axes, rng))
            fdot = function_form(random_basic_function(scenario.chart, axes, rng))
        h = random_symmetric_tensor(calc, axes, rng)
        omega = random_two_form(calc, axes, rng)
        for gap in integration_identity_suite(calc, context.suite_rule, eta, f, fdot, h, omega):
            worst[gap.name] = max(worst.get(gap.name, 0.0), gap.gap)
    residuals = [_check(n, v, tolerances.finite_difference) for n, v in worst.items()]
    return _finish("integration", residuals, started)


# -- solitons --------------------------------------------------------------


def scenario_candidate(context: GeometryContext) -> SolitonCandidate:
    scenario = context.scenario
    if scenario.soliton_kind == "generic":
        return SolitonCandidate(context)
    return SolitonCandidate(context, f=scenario.soliton_potential, kind=scenario.soliton_kind)


@dataclass(frozen=True)
class SolitonChecks:
    soliton: ResidualReport
    twisted: ResidualReport
    consistency: ConsistencyReport
    expected_class: str | None
    failures: tuple[str, ...] = ()
    elapsed_ms: float = 0.0


def _suite_failures(prefix: str, report: ResidualReport) -> list[str]:
    # identities after the base residual only bind on actual solitons
    if not report.applicable:
        return []
    return [f"{prefix}.{r.name}" for r in report.residuals[1:] if not r.passed]


def soliton_checks(context: GeometryContext, tolerances: Tolerances) -> SolitonChecks:
    started = time.perf_counter()
    candidate = scenario_candidate(context)
    kwargs = dict(
        analytic=tolerances.analytic,
        finite_difference=tolerances.finite_difference,
        tolerance=tolerances.soliton,
    )
    if candidate.kind == "gradient":
        report = gradient_identity_suite(candidate, **kwargs)
    else:
        report = soliton_residual(candidate, tolerances.soliton, tolerances.steady_dead_zone)
    twisted = twisted_identity_suite(
        SolitonCandidate(context, f=candidate.f, kind="twisted-gradient"), **kwargs
    )
    consistency = theorem_consistency_report(candidate, report, tolerances.soliton)
    expected = context.scenario.expected_class
    failures: list[str] = []
    if expected is not None and report.classification != expected:
        failures.append("soliton.classification")
    failures += _suite_failures("soliton", report)
    failures += _suite_failures("twisted", twisted)
    failures += [f"consistency.{v.name}" for v in consistency.verdicts if v.holds is False]
    return SolitonChecks(
        soliton=report,
        twisted=twisted,
        consistency=consistency,
        expected_class=expected,
        failures=tuple(failures),
        elapsed_ms=1000 * (time.perf_counter() - started),
    )


# -- golden values ---------------------------------------------------------


@dataclass(frozen=True)
class GoldenResult:
    name: str
    value: float
    expected: float
    provenance: str
    tolerance: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.value) and abs(self.value - self.expected) <= self.tolerance


def _worst(values: Array | float, expected: float) -> float:
    """The sample farthest from `expected`."""
    flat = np.ravel(np.asarray(values, dtype=float))
    return float(flat[np.argmax(np.abs(flat - expected))])


class GoldenEvaluator:
    """Computes registry values lazily; pointwise quantities report their worst node."""

    def __init__(
        self,
        context: GeometryContext,
        params: ScenarioParams | None = None,
        soliton_lambda: float | None = None,
    ) -> None:
        self.context = context
        self.params = ScenarioParams() if params is None else params
        self._soliton_lambda = soliton_lambda
        self.nodes = context.verify_nodes

    @cached_property
    def curvature(self) -> TransverseCurvature:
        return self.context.geometry.curvature(self.nodes)

    @cached_property
    def mean(self) -> MeanCurvatureData:
        return mean_curvature(
            self.context.metric,
            points=self.nodes,
            require_basic=False,
            geometry=self.context.geometry,
        )

    @cached_property
    def lam(self) -> FunctionalReport:
        return lambda_Q(self.context)

    def _ricci_eigenvalues(self) -> Array:
        q = self.context.q
        curv = self.curvature
        ginv = as_matrices(batched_inverse(curv.metric.reshape(q, q, -1)))
        ric = np.moveaxis(curv.ricci.reshape(q, q, -1), -1, 0)
        return np.linalg.eigvals(ginv @ ric).real

    def _soliton(self) -> float:
        if self._soliton_lambda is not None:
            return self._soliton_lambda
        return fit_lambda(scenario_candidate(self.context))

    def value(self, name: str, expected: float) -> float:
        ctx = self.context
        geo = ctx.geometry
        calc = ctx.calculus
        q = ctx.q
        if name.startswith("loop_integral:"):
            loops = dict(self.mean.loop_integrals)
            cycle = name.split(":", 1)[1]
            if cycle not in loops:
                raise usage_error(f"Scenario has no cycle named {cycle!r}")
            return loops[cycle]
        if name == "ricci_sup":
            return float(np.max(np.abs(self.curvature.ricci)))
        if name == "scalar_curvature":
            return _worst(self.curvature.scalar, expected)
        if name == "sectional_curvature":
            return _worst(self.curvature.sectional(0, 1), expected)
        if name == "ricci_eigenvalue":
            return _worst(self._ricci_eigenvalues(), expected)
        if name == "ricci_xx":
            return _worst(self.curvature.ricci[0, 0], expected)
        if name == "ricci_zz":
            return _worst(self.curvature.ricci[q - 1, q - 1], expected)
        if name == "tau_component":
            return _worst(geo.tau(self.nodes)[q - 1], expected)
        if name == "kappa_component":
            return _worst(geo.kappa(self.nodes)[q - 1], expected)
        if name == "delta_T_kappa":
            return _worst(calc.delta_T(calc.kappa_form())(self.nodes), expected)
        if name == "delta_B_kappa":
            return _worst(calc.delta_B(calc.kappa_form())(self.nodes), expected)
        if name == "ln_rho":
            eig = np.linalg.eigvals(np.asarray(self.params.a_matrix, dtype=float))
            return float(math.log(np.max(np.abs(eig))))
        if name == "scalar_integral":
            rule = ctx.rule
            return ctx.integrate(geo.scalar(rule.nodes), rule)
        if name == "lambda_Q":
            return self.lam.value if self.lam.converged else math.nan
        if name == "normalized_lambda_Q":
            return normalized_lambda_Q(ctx, self.lam).value
        if name == "F_Q_zero":
            return F_Q(ctx, constant_field(ctx.scenario.chart, 0.0))
        if name == "soliton_lambda":
            return self._soliton()
        raise usage_error(f"No evaluator for golden value {name!r}")

    def check(self, golden: GoldenValue) -> GoldenResult:
        value = self.value(golden.name, golden.value)
        result = GoldenResult(
            name=golden.name,
            value=value,
            expected=golden.value,
            provenance=f"[{golden.provenance}]",
            tolerance=golden.tolerance,
        )
        log = logger.info if result.passed else logger.warning
        log("golden %s: %.12g vs %.12g %s", golden.name, value, golden.value, result.provenance)
        return result


FUNCTIONAL_GOLDEN = frozenset({"lambda_Q", "normalized_lambda_Q", "F_Q_zero"})


def golden_checks(
    context: GeometryContext,
    params: ScenarioParams | None = None,
    names: frozenset[str] | None = None,
    soliton_lambda: float | None = None,
) -> list[GoldenResult]:
    """Check the scenario's registry values (all of them, or those in `names`)."""
    evaluator = GoldenEvaluator(context, params, soliton_lambda)
    return [
        evaluator.check(g)
        for g in context.scenario.golden
        if names is None or g.name in names
    ]


# -- the whole verify run --------------------------------------------------


@dataclass(frozen=True)
class Verification:
    suites: tuple[SuiteResult, ...]
    solitons: SolitonChecks
    golden: tuple[GoldenResult, ...]
    failures: tuple[str, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_scenario(
    context: GeometryContext,
    tolerances: Tolerances,
    seed: int,
    forms: int,
    params: ScenarioParams | None = None,
    fd_step: float = DEFAULT_FD_STEP,
) -> Verification:
    suites = (
        curvature_suite(context, tolerances, fd_step),
        operator_suite(context, tolerances, seed, forms),
        integration_suite(context, tolerances, seed, forms),
    )
    solitons = soliton_checks(context, tolerances)
    golden = tuple(golden_checks(context, params, soliton_lambda=solitons.soliton.fitted_lambda))
    failures = [name for s in suites for name in s.failures]
    failures += list(solitons.failures)
    failures += [f"golden.{g.name}" for g in golden if not g.passed]
    for name in failures:
        logger.warning("verification failure: %s", name)
    return Verification(suites=suites, solitons=solitons, golden=golden, failures=tuple(failures))

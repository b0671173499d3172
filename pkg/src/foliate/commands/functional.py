"""`foliate functional`: F^Q, lambda^Q, W^Q and mu^Q over the sigma list."""

import logging
import time
from pathlib import Path

from foliate.commands.common import (
    EXIT_FAILED,
    EXIT_OK,
    build_context,
    emit_schema,
    golden_reads,
    report_path,
)
from foliate.config import RunConfig
from foliate.exceptions import NumericError, convergence_error
from foliate.geometry.chart import ScalarField, constant_field
from foliate.schemas import FunctionalRead, FunctionalRunReport, VariationGapRead
from foliate.services.context import GeometryContext
from foliate.services.functionals import (
    F_Q,
    W_Q,
    FunctionalReport,
    GalerkinSystem,
    assemble,
    euler_lagrange_variance,
    first_variation_check,
    lambda_minimizer,
    lambda_Q,
    mu_Q,
    normalized_lambda_Q,
)
from foliate.services.reporting import timestamp, write_json
from foliate.services.verification import FUNCTIONAL_GOLDEN, golden_checks

logger = logging.getLogger("foliate.commands.functional")

VARIATION_TOLERANCE = 1e-5


def _potential(context: GeometryContext, choice: str) -> ScalarField:
    if choice == "probe":
        return context.scenario.probe_function
    return constant_field(context.scenario.chart, 0.0)


def _lambda(
    context: GeometryContext, system: GalerkinSystem, config: RunConfig
) -> FunctionalReport:
    report = lambda_Q(context, system, config.functional.eigen_tolerance)
    try:
        variance = euler_lagrange_variance(context, lambda_minimizer(context, system))
    except NumericError as exc:
        logger.warning("no Euler-Lagrange check: %s", exc)
        return report
    diagnostics = {**report.diagnostics, "euler_lagrange_variance": variance}
    return FunctionalReport(
        name=report.name,
        value=report.value,
        converged=report.converged,
        iterations=report.iterations,
        constraint_residual=report.constraint_residual,
        minimizer_samples=report.minimizer_samples,
        diagnostics=diagnostics,
    )


def evaluate_functionals(context: GeometryContext, config: RunConfig) -> list[FunctionalReport]:
    opts = config.functional
    f = _potential(context, opts.f)
    system = assemble(context)
    reports: list[FunctionalReport] = []
    lam: FunctionalReport | None = None
    for name in opts.functionals:
        if name == "F_Q":
            reports.append(FunctionalReport(name="F_Q", value=F_Q(context, f)))
        elif name == "lambda_Q":
            lam = lam or _lambda(context, system, config)
            reports.append(lam)
        elif name == "normalized_lambda_Q":
            lam = lam or _lambda(context, system, config)
            reports.append(normalized_lambda_Q(context, lam))
        elif name == "W_Q":
            reports += [
                FunctionalReport(name="W_Q", value=W_Q(context, f, s), sigma=s) for s in opts.sigma
            ]
        elif name == "mu_Q":
            reports += [
                mu_Q(context, s, system, opts.tolerance, opts.max_iterations) for s in opts.sigma
            ]
    return reports


def variation_gaps(context: GeometryContext, config: RunConfig) -> list[VariationGapRead]:
    """First variations along the conformal direction h = g_Q with fdot the probe rate."""
    calc = context.calculus
    gaps = first_variation_check(
        context,
        calc.metric_form(),
        context.scenario.probe_rate,
        f=_potential(context, config.functional.f),
        sigma=config.functional.sigma[0],
    )
    return [
        VariationGapRead(
            name=g.name,
            finite_difference=g.finite_difference,
            formula=g.formula,
            gap=g.gap,
            tolerance=VARIATION_TOLERANCE,
            passed=g.gap < VARIATION_TOLERANCE,
        )
        for g in gaps
    ]


def run(config: RunConfig, out_dir: Path) -> int:
    """Exit 0 iff every value converged and every check passed; raises after writing when a
    minimization did not converge."""
    started = time.perf_counter()
    context = build_context(config)
    reports = evaluate_functionals(context, config)
    gaps = variation_gaps(context, config) if config.functional.first_variation else []
    golden = golden_checks(context, config.scenario_params, FUNCTIONAL_GOLDEN)
    converged = all(r.converged for r in reports)
    passed = converged and all(g.passed for g in gaps) and all(g.passed for g in golden)
    report = FunctionalRunReport(
        scenario=context.scenario.name,
        seed=config.seed,
        generated_at=timestamp(),
        converged=converged,
        passed=passed,
        functionals=[FunctionalRead.model_validate(r) for r in reports],
        first_variation=gaps,
        golden=golden_reads(golden),
    )
    write_json(report_path(config, out_dir), report)
    emit_schema(config, out_dir)
    logger.info(
        "functional %s: %d values, converged=%s, passed=%s (%.1f ms)",
        report.scenario,
        len(reports),
        converged,
        passed,
        1000 * (time.perf_counter() - started),
    )
    if not converged:
        failed = sorted({r.name for r in reports if not r.converged})
        raise convergence_error(f"{', '.join(failed)} did not converge; partial report written")
    return EXIT_OK if passed else EXIT_FAILED

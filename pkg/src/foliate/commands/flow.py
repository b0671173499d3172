"""`foliate flow`: transverse Ricci flow with monitors, written as trace.csv + report.json."""

import logging
import time
from pathlib import Path

from foliate.commands.common import (
    EXIT_FAILED,
    EXIT_OK,
    build_context,
    emit_schema,
    report_path,
)
from foliate.config import RunConfig
from foliate.schemas import TRACE_COLUMNS, FlowReport, SelfSimilarRead, TraceRow
from foliate.services.context import GeometryContext
from foliate.services.flow import FlowTrace, closed_form_error, run_flow, self_similar_check
from foliate.services.reporting import timestamp, write_csv, write_json
from foliate.services.soliton import fit_lambda
from foliate.services.verification import scenario_candidate

logger = logging.getLogger("foliate.commands.flow")

SELF_SIMILAR_CLASSES = ("shrinking", "steady", "expanding")


def _self_similar(context: GeometryContext, config: RunConfig) -> SelfSimilarRead | None:
    """Dynamic check for scenarios whose soliton field vanishes (Einstein solitons)."""
    scenario = context.scenario
    if scenario.expected_class not in SELF_SIMILAR_CLASSES:
        return None
    candidate = scenario_candidate(context)
    if candidate.kind != "generic" and not candidate.potential.constant:
        return None
    lam = fit_lambda(candidate)
    check = self_similar_check(context, lam, None, config.flow.t_end, config.flow.h)
    return SelfSimilarRead.model_validate(check)


def _closed_form(context: GeometryContext, config: RunConfig, trace: FlowTrace) -> float | None:
    if context.scenario.flow_solution is None or not trace.completed:
        return None
    return closed_form_error(context, config.flow.t_end, config.flow.h)


def run(config: RunConfig, out_dir: Path) -> int:
    """Exit 0 iff the flow completed with every applicable monotonicity verdict holding."""
    started = time.perf_counter()
    context = build_context(config)
    trace = run_flow(context, config.flow, config.tolerances, raise_on_halt=False)
    rows = [TraceRow.model_validate(r) for r in trace.rows]
    write_csv(out_dir / config.output.trace, TRACE_COLUMNS, rows)
    report = FlowReport(
        scenario=context.scenario.name,
        seed=config.seed,
        generated_at=timestamp(),
        completed=trace.completed,
        monotone=trace.monotone,
        tautness=trace.tautness,
        normalized_applicable=trace.normalized_applicable,
        last_good_time=trace.last_good_time,
        rows=len(rows),
        halt=str(trace.halted) if trace.halted is not None else None,
        self_similar=_self_similar(context, config) if trace.completed else None,
        closed_form_error=_closed_form(context, config, trace),
    )
    write_json(report_path(config, out_dir), report)
    emit_schema(config, out_dir)
    logger.info(
        "flow %s: %d rows, completed=%s, monotone=%s (%.1f ms)",
        report.scenario,
        report.rows,
        report.completed,
        report.monotone,
        1000 * (time.perf_counter() - started),
    )
    if trace.halted is not None:
        # partial trace is on disk; the CLI maps the halt to its exit code
        raise trace.halted
    return EXIT_OK if trace.monotone else EXIT_FAILED

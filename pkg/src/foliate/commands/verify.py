"""`foliate verify`: curvature, operator, integration and soliton suites plus golden values."""

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
from foliate.schemas import (
    ConsistencyRead,
    MutationRead,
    SolitonRead,
    SuiteRead,
    VerifyReport,
)
from foliate.services.reporting import timestamp, write_json
from foliate.services.verification import verify_scenario

logger = logging.getLogger("foliate.commands.verify")


def run(config: RunConfig, out_dir: Path) -> int:
    """Exit 0 iff every suite, implication and golden value passes."""
    started = time.perf_counter()
    context = build_context(config)
    if config.mutate_connection:
        logger.warning("transverse connection block sign-flipped; failures are expected")
    result = verify_scenario(
        context,
        config.tolerances,
        config.seed,
        config.random_forms,
        config.scenario_params,
        config.fd_step,
    )
    solitons = result.solitons
    report = VerifyReport(
        scenario=context.scenario.name,
        seed=config.seed,
        generated_at=timestamp(),
        passed=result.passed,
        failures=list(result.failures),
        golden=golden_reads(result.golden),
        suites=[SuiteRead.model_validate(s) for s in result.suites],
        soliton=SolitonRead.model_validate(solitons.soliton),
        twisted=SolitonRead.model_validate(solitons.twisted),
        consistency=ConsistencyRead.model_validate(solitons.consistency),
        mutation=(
            MutationRead(detected=not result.passed, failing_identities=list(result.failures))
            if config.mutate_connection
            else None
        ),
    )
    write_json(report_path(config, out_dir), report)
    emit_schema(config, out_dir)
    logger.info(
        "verify %s: %s, %d failures (%.1f ms)",
        report.scenario,
        "passed" if report.passed else "FAILED",
        len(report.failures),
        1000 * (time.perf_counter() - started),
    )
    return EXIT_OK if report.passed else EXIT_FAILED

"""Shared plumbing for the command modules: exit codes, context building, output files."""

import logging
from pathlib import Path

from foliate.config import RunConfig
from foliate.schemas import GoldenCheck
from foliate.scenarios import build_scenario
from foliate.services.context import GeometryContext, Resolutions
from foliate.services.reporting import copy_schema
from foliate.services.verification import GoldenResult

logger = logging.getLogger("foliate.commands")

EXIT_OK = 0
EXIT_FAILED = 2


def build_context(config: RunConfig) -> GeometryContext:
    scenario = build_scenario(config.scenario, config.scenario_params)
    logger.info(
        "context: resolution %d, leaf %d, verify %d, suite %d",
        config.resolution,
        config.leaf_resolution,
        config.verify_resolution,
        config.suite_resolution,
    )
    return GeometryContext(scenario, Resolutions.from_config(config), config.mutate_connection)


def golden_reads(results: list[GoldenResult] | tuple[GoldenResult, ...]) -> list[GoldenCheck]:
    return [GoldenCheck.model_validate(g) for g in results]


def report_path(config: RunConfig, out_dir: Path) -> Path:
    return out_dir / config.output.report


def emit_schema(config: RunConfig, out_dir: Path) -> Path:
    return copy_schema(out_dir, config.output.schema_copy)

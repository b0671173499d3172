"""
Configuration.

What lives here
- `Settings`: environment (and `.env`) configuration shared by every
  command: output directory override, log level, debug flag.
- `RunConfig`: one run's configuration, read from a TOML file by
  `load_config`. The format is documented in `schema.txt` next to this
  module; commands copy that file into the output directory.

Called by / import relationships
- `foliate.main` builds `Settings` once and calls `load_config`.
- `foliate.scenarios.build_scenario` reads `ScenarioParams`.
- Commands read tolerances and options from `RunConfig`.
"""

from __future__ import annotations

import logging
import math
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from foliate.exceptions import configuration_error

logger = logging.getLogger("foliate.config")

PROJECT_ROOT = Path(__file__).resolve().parents[2]
ROOT_ENV_FILE = PROJECT_ROOT / ".env"
SCHEMA_FILE = Path(__file__).with_name("schema.txt")

ScenarioName = Literal["flat_torus", "product_sphere", "carriere", "product_nil"]
CommandName = Literal["verify", "flow", "functional"]
FunctionalName = Literal["F_Q", "lambda_Q", "normalized_lambda_Q", "W_Q", "mu_Q"]


class Settings(BaseSettings):
    """
    Environment settings (prefix `FOLIATE_`).

    Notes
    - Unknown env vars are ignored (`extra="ignore"`).
    - `output_dir` overrides the `[output] dir` of any run config; the
      `--out` flag overrides both.
    """

    model_config = SettingsConfigDict(
        env_prefix="FOLIATE_",
        env_file=(str(ROOT_ENV_FILE), ".env"),
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Debug mode prints tracebacks for hard errors.
    debug: bool = False
    log_level: str = "INFO"
    output_dir: Path | None = None


@lru_cache
def load_settings() -> Settings:
    return Settings()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Tolerances(_Section):
    analytic: float = Field(1e-8, gt=0)
    finite_difference: float = Field(1e-4, gt=0)
    soliton: float = Field(1e-6, gt=0)
    steady_dead_zone: float = Field(1e-8, gt=0)
    monotonicity: float = Field(1e-7, gt=0)


class FlowOptions(_Section):
    t_end: float = Field(0.4, gt=0)
    h: float = Field(0.05, gt=0)
    max_halvings: int = Field(10, ge=0, le=40)
    deturck: bool = False
    # mu_Q monitor with sigma(t) = sigma0 - t
    monitor_mu: bool = False
    sigma0: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def check_sigma_profile(self) -> FlowOptions:
        if self.monitor_mu and self.sigma0 <= self.t_end:
            raise ValueError("sigma0 must exceed t_end so that sigma(t) stays positive")
        return self


class FunctionalOptions(_Section):
    sigma: list[float] = Field(default_factory=lambda: [1.0, 0.1, 0.01], min_length=1)
    functionals: list[FunctionalName] = Field(
        default_factory=lambda: ["F_Q", "lambda_Q", "normalized_lambda_Q", "W_Q", "mu_Q"]
    )
    # f used by F_Q / W_Q: the zero function or the scenario's probe function
    f: Literal["zero", "probe"] = "zero"
    max_iterations: int = Field(5000, ge=1)
    tolerance: float = Field(1e-8, gt=0)
    eigen_tolerance: float = Field(1e-10, gt=0)
    first_variation: bool = True

    @field_validator("sigma")
    @classmethod
    def positive_sigma(cls, values: list[float]) -> list[float]:
        if any(not s > 0 for s in values):
            raise ValueError("every sigma must be positive")
        return values


class ScenarioParams(_Section):
    a_matrix: list[list[int]] = Field(default_factory=lambda: [[2, 1], [1, 1]])
    radius: float = Field(1.0, gt=0)
    perturbation: float = Field(0.0, ge=-0.5, le=0.5)
    scale: float = Field(1.0, gt=0)

    @field_validator("a_matrix")
    @classmethod
    def hyperbolic_sl2z(cls, a: list[list[int]]) -> list[list[int]]:
        if len(a) != 2 or any(len(row) != 2 for row in a):
            raise ValueError("A must be a 2x2 integer matrix")
        if a[0][0] * a[1][1] - a[0][1] * a[1][0] != 1:
            raise ValueError("A must have determinant 1")
        if a[0][0] + a[1][1] <= 2:
            raise ValueError("A must have trace strictly greater than 2")
        return a

    @property
    def rho(self) -> float:
        tr = self.a_matrix[0][0] + self.a_matrix[1][1]
        return (tr + math.sqrt(tr * tr - 4)) / 2

    @property
    def log_rho(self) -> float:
        return math.log(self.rho)


class OutputOptions(_Section):
    dir: Path | None = None
    report: str = "report.json"
    trace: str = "trace.csv"
    schema_copy: str = "schema.txt"


class RunConfig(_Section):
    scenario: ScenarioName
    command: CommandName | None = None
    resolution: int = Field(128, ge=8)
    leaf_resolution: int = Field(4, ge=2)
    verify_resolution: int = Field(12, ge=4)
    suite_resolution: int = Field(32, ge=8)
    fd_step: float = Field(1e-5, gt=0, lt=0.1)
    seed: int = Field(1, ge=0)
    basis_modes: int = Field(6, ge=1, le=32)
    random_forms: int = Field(20, ge=1)
    # verify only: rerun every suite with the Q x Q connection block negated
    mutate_connection: bool = False
    tolerances: Tolerances = Field(default_factory=Tolerances)
    flow: FlowOptions = Field(default_factory=FlowOptions)
    functional: FunctionalOptions = Field(default_factory=FunctionalOptions)
    scenario_params: ScenarioParams = Field(default_factory=ScenarioParams)
    output: OutputOptions = Field(default_factory=OutputOptions)


_TABLE = re.compile(r"^\s*\[+\s*([A-Za-z0-9_.\-]+)\s*\]+")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def locate_key(text: str, loc: tuple) -> int | None:
    """1-based line of the TOML key named by a pydantic error location."""
    path = [str(part) for part in loc if isinstance(part, str)]
    if not path:
        return None
    *tables, key = path
    want = ".".join(tables)
    current = ""
    fallback = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        table = _TABLE.match(line)
        if table:
            current = table.group(1)
            if current == ".".join(path):
                fallback = lineno
            continue
        m = _KEY.match(line)
        if m and m.group(1) == key and current == want:
            return lineno
    return fallback


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise configuration_error(f"{source}: not valid TOML ({exc})") from None
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or "<root>"
        line = locate_key(text, first["loc"])
        where = f" (line {line})" if line is not None else ""
        raise configuration_error(f"{source}: field {field}{where}: {first['msg']}") from None
    if config.scenario == "carriere":
        params = config.scenario_params
        logger.info(
            "carriere A=%s rho=%.10g ln(rho)=%.10g", params.a_matrix, params.rho, params.log_rho
        )
    return config


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise configuration_error(f"Cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))


def resolve_output_dir(config: RunConfig, settings: Settings, cli_out: str | Path | None) -> Path:
    if cli_out is not None:
        return Path(cli_out)
    if settings.output_dir is not None:
        return settings.output_dir
    if config.output.dir is not None:
        return config.output.dir
    return Path("out")

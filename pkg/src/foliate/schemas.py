"""
Pydantic models for every report and trace row the CLI writes.

What lives here
- Pure data models (no numerics). Services return plain dataclasses; the
  commands build these models from them with `model_validate(obj)`, which
  `from_attributes=True` allows.
- `foliate.services.reporting` serializes them (sorted keys, 17 significant
  digits, non-finite numbers as null).

Called by / import relationships
- `foliate.commands.*` build `VerifyReport`, `FlowReport` and
  `FunctionalRunReport`; `TraceRow` is one CSV line of `trace.csv`.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class _Read(BaseModel):
    # Allows building the model from service dataclasses.
    model_config = ConfigDict(from_attributes=True)


# ----- Shared -----
class GoldenCheck(_Read):
    """A computed value against a registry value with its provenance tag."""

    name: str
    value: float
    expected: float
    # [PUBLISHED], [DERIVED] or [TRIVIAL], copied from the scenario registry.
    provenance: str
    tolerance: float
    passed: bool


class ResidualRead(_Read):
    name: str
    sup: float
    l2: float
    tolerance: float
    passed: bool


class SuiteRead(_Read):
    """One named group of residual checks; timings go to the log only."""

    name: str
    passed: bool
    residuals: list[ResidualRead] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)


# ----- Soliton -----
class SolitonRead(_Read):
    residuals: list[ResidualRead]
    fitted_lambda: float | None
    classification: Literal["shrinking", "steady", "expanding", "not-a-soliton"] | None
    applicable: bool
    notes: list[str] = Field(default_factory=list)


class TheoremVerdictRead(_Read):
    name: str
    applicable: bool
    # None when the implication's hypothesis does not hold for this candidate.
    holds: bool | None
    detail: str


class ConsistencyRead(_Read):
    tautness: Literal["taut", "non-taut", "inconclusive"]
    classification: str | None
    fitted_lambda: float | None
    consistent: bool
    verdicts: list[TheoremVerdictRead]


class MutationRead(BaseModel):
    """Outcome of a verify run with the Q x Q connection block sign-flipped."""

    detected: bool
    failing_identities: list[str]


class VerifyReport(BaseModel):
    command: Literal["verify"] = "verify"
    scenario: str
    seed: int
    generated_at: str
    passed: bool
    failures: list[str]
    golden: list[GoldenCheck]
    suites: list[SuiteRead]
    soliton: SolitonRead
    twisted: SolitonRead
    consistency: ConsistencyRead
    # present only for runs with the connection deliberately corrupted
    mutation: MutationRead | None = None


# ----- Flow -----
class TraceRow(_Read):
    """One accepted step of the flow; column order of trace.csv."""

    t: float
    scalar_min: float
    scalar_max: float
    lambda_Q: float
    normalized_lambda_Q: float
    mu_Q: float
    monotonicity_flag: bool
    spd_ok: bool
    h: float
    halvings: int
    kappa_drift: float
    leaf_drift: float


TRACE_COLUMNS = tuple(TraceRow.model_fields)


class SelfSimilarRead(_Read):
    mode: Literal["dynamic", "algebraic"]
    lam: float
    residual: float
    t_end: float
    passed: bool
    detail: str


class FlowReport(BaseModel):
    command: Literal["flow"] = "flow"
    scenario: str
    seed: int
    generated_at: str
    completed: bool
    monotone: bool
    tautness: str
    normalized_applicable: bool
    last_good_time: float
    rows: int
    halt: str | None = None
    self_similar: SelfSimilarRead | None = None
    # sup |g_Q(t) - closed form| over accepted steps, when the scenario has one
    closed_form_error: float | None = None


# ----- Functionals -----
class FunctionalRead(_Read):
    name: str
    value: float
    sigma: float | None
    converged: bool
    iterations: int
    constraint_residual: float
    # f = -2 log u sampled on the basic grid (deterministic subsample).
    minimizer_samples: list[float]
    diagnostics: dict[str, float]


class VariationGapRead(_Read):
    name: str
    finite_difference: float
    formula: float
    gap: float
    tolerance: float
    passed: bool


class FunctionalRunReport(BaseModel):
    command: Literal["functional"] = "functional"
    scenario: str
    seed: int
    generated_at: str
    converged: bool
    passed: bool
    functionals: list[FunctionalRead]
    first_variation: list[VariationGapRead] = Field(default_factory=list)
    golden: list[GoldenCheck] = Field(default_factory=list)

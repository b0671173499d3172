"""
Transverse Ricci soliton residuals.

A candidate carries a soliton vector field X in transverse frame components
(or a potential f, from which X = grad f or grad f + tau_B is built). The
residual Ric^Q + 1/2 L_X g_Q - lambda g_Q is measured pointwise in the
g_Q-norm (sup over the verify grid) and in L^2(dV) (suite grid).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from foliate.exceptions import usage_error
from foliate.geometry.chart import Array, ScalarField, constant_field, derived_field
from foliate.geometry.operators import BasicCalculus, BasicForm, function_form
from foliate.geometry.transverse import Tautness, mean_curvature, tautness_diagnostic
from foliate.services.context import GeometryContext

logger = logging.getLogger("foliate.soliton")

SolitonKind = Literal["generic", "gradient", "twisted-gradient"]
Classification = Literal["shrinking", "steady", "expanding", "not-a-soliton"]

APPLICABLE_BELOW = 1e-6


def lie_derivative_metric(
    calculus: BasicCalculus, x: ScalarField, points: Array | None = None
) -> BasicForm:
    """
    (L_X g_Q)(e_a, e_b) = X(g_ab) - g(pi[X, e_a], e_b) - g(e_a, pi[X, e_b]).

    `x` holds the transverse frame components of X. With `points`, X is
    first checked to be basic there.
    """
    if x.shape != (calculus.q,):
        raise usage_error(f"Vector field needs shape ({calculus.q},), got {x.shape}")
    geo = calculus.geometry
    if points is not None:
        leaf = geo.leaf_derivative(x, points)
        if leaf > calculus.tolerance:
            raise usage_error(f"Vector field is not basic (leaf derivative {leaf:.3e})")
    metric = geo.metric
    frame = geo.frame
    p = calculus.p

    def fn(pts: Array) -> Array:
        xv = x(pts)
        g = geo.G(pts)
        e = frame.matrix(pts)[p:]
        dg = np.einsum("km...,abm...->abk...", e, metric.transverse_gradient(pts))
        dx = calculus.transverse_derivative(x, pts)
        c = frame.structure(pts)[p:, p:, p:]
        bracket = np.einsum("k...,kam...->am...", xv, c) - np.swapaxes(dx, 0, 1)
        return (
            np.einsum("k...,abk...->ab...", xv, dg)
            - np.einsum("am...,mb...->ab...", bracket, g)
            - np.einsum("am...,bm...->ab...", g, bracket)
        )

    return BasicForm(2, derived_field(calculus.chart, fn, (calculus.q, calculus.q)), "symmetric")


@dataclass(frozen=True, eq=False)
class SolitonCandidate:
    context: GeometryContext
    x: ScalarField | None = None
    f: ScalarField | None = None
    lam: float | None = None
    kind: SolitonKind = "generic"

    def __post_init__(self) -> None:
        if self.kind == "generic" and self.f is not None:
            raise usage_error("A generic candidate takes a vector field, not a potential")
        if self.kind != "generic" and self.x is not None:
            raise usage_error("A gradient candidate takes a potential, not a vector field")

    @property
    def calculus(self) -> BasicCalculus:
        return self.context.calculus

    @property
    def potential(self) -> ScalarField:
        if self.f is not None:
            return self.f
        return constant_field(self.context.scenario.chart, 0.0)

    @cached_property
    def vector_field(self) -> ScalarField:
        chart = self.context.scenario.chart
        q = self.context.q
        if self.kind == "generic":
            return self.x if self.x is not None else constant_field(chart, np.zeros(q))
        calc = self.calculus
        geo = calc.geometry
        f = self.potential
        twisted = self.kind == "twisted-gradient"

        def fn(points: Array) -> Array:
            df = calc.transverse_derivative(f, points)
            grad = np.einsum("ij...,j...->i...", geo.Ginv(points), df)
            return grad + geo.tau(points) if twisted else grad

        return derived_field(chart, fn, (q,))

    def with_lambda(self, lam: float | None) -> SolitonCandidate:
        return SolitonCandidate(self.context, self.x, self.f, lam, self.kind)


@dataclass(frozen=True)
class IdentityResidual:
    name: str
    sup: float
    l2: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.sup < self.tolerance


@dataclass(frozen=True)
class ResidualReport:
    residuals: tuple[IdentityResidual, ...]
    fitted_lambda: float | None = None
    classification: Classification | None = None
    applicable: bool = True
    notes: tuple[str, ...] = ()

    def residual(self, name: str) -> IdentityResidual:
        for r in self.residuals:
            if r.name == name:
                return r
        raise KeyError(name)


def _pointwise_norm(calc: BasicCalculus, form: BasicForm, points: Array) -> Array:
    if form.degree == 0:
        return np.abs(form(points))
    return np.sqrt(np.maximum(calc.norm_squared(form)(points), 0.0))


def measure(
    context: GeometryContext, name: str, form: BasicForm, tolerance: float
) -> IdentityResidual:
    calc = context.calculus
    sup = float(np.max(_pointwise_norm(calc, form, context.verify_nodes)))
    rule = context.suite_rule
    values = _pointwise_norm(calc, form, rule.nodes)
    l2 = math.sqrt(max(context.integrate(values * values, rule), 0.0))
    return IdentityResidual(name=name, sup=sup, l2=l2, tolerance=tolerance)


def soliton_tensor(candidate: SolitonCandidate) -> BasicForm:
    """Ric^Q + 1/2 L_X g_Q."""
    calc = candidate.calculus
    lie = lie_derivative_metric(calc, candidate.vector_field, candidate.context.verify_nodes)
    return calc.ricci_form() + 0.5 * lie


def fit_lambda(candidate: SolitonCandidate, tensor: BasicForm | None = None) -> float:
    """lambda* = int <T, g_Q> dV / int <g_Q, g_Q> dV = int tr_g T dV / (q V)."""
    ctx = candidate.context
    t = soliton_tensor(candidate) if tensor is None else tensor
    rule = ctx.suite_rule
    trace = candidate.calculus.trace(t)(rule.nodes)
    return ctx.integrate(trace, rule) / (ctx.q * ctx.volume(rule))


def residual_norms(
    candidate: SolitonCandidate, lam: float, tensor: BasicForm | None = None
) -> IdentityResidual:
    t = soliton_tensor(candidate) if tensor is None else tensor
    calc = candidate.calculus
    return measure(candidate.context, "soliton", t - lam * calc.metric_form(), APPLICABLE_BELOW)


def classify(lam: float, dead_zone: float = 1e-8) -> Classification:
    if abs(lam) < dead_zone:
        return "steady"
    return "shrinking" if lam > 0 else "expanding"


def soliton_residual(
    candidate: SolitonCandidate, tolerance: float = 1e-6, dead_zone: float = 1e-8
) -> ResidualReport:
    started = time.perf_counter()
    tensor = soliton_tensor(candidate)
    lam = fit_lambda(candidate, tensor) if candidate.lam is None else candidate.lam
    norms = residual_norms(candidate, lam, tensor)
    norms = IdentityResidual(norms.name, norms.sup, norms.l2, tolerance)
    verdict: Classification = classify(lam, dead_zone) if norms.passed else "not-a-soliton"
    logger.info(
        "soliton residual (%s): lambda=%.12g sup=%.3e -> %s (%.1f ms)",
        candidate.kind,
        lam,
        norms.sup,
        verdict,
        1000 * (time.perf_counter() - started),
    )
    return ResidualReport(
        residuals=(norms,),
        fitted_lambda=lam,
        classification=verdict,
        applicable=norms.sup < APPLICABLE_BELOW,
    )


def _interior_ricci(calc: BasicCalculus, v: ScalarField) -> BasicForm:
    """(i_V Ric)_b = V^a Ric_ab."""
    geo = calc.geometry
    return calc.derived(lambda p: np.einsum("a...,ab...->b...", v(p), geo.ricci(p)), 1)


def _directional(calc: BasicCalculus, eta: BasicForm, v: ScalarField) -> BasicForm:
    """eta(V) for a 1-form eta."""
    return calc.derived(lambda p: np.einsum("a...,a...->...", eta(p), v(p)), 0)


def _suite(
    candidate: SolitonCandidate,
    twisted: bool,
    analytic: float,
    finite_difference: float,
    tolerance: float,
) -> ResidualReport:
    base = soliton_residual(candidate, tolerance)
    lam = base.fitted_lambda if candidate.lam is None else candidate.lam
    ctx = candidate.context
    calc = candidate.calculus
    q = ctx.q
    f = function_form(candidate.potential)
    df = calc.d_B(f)
    s = calc.scalar_form()
    ds = calc.d_B(s)
    kappa = calc.kappa_form()
    ric_sq = calc.norm_squared(calc.ricci_form())
    geo = calc.geometry
    chart = ctx.scenario.chart

    def grad_field(with_tau: bool) -> ScalarField:
        def fn(p: Array) -> Array:
            g = calc.sharp(df, p)
            return g + geo.tau(p) if with_tau else g

        return derived_field(chart, fn, (q,))

    grad_f = grad_field(False)
    drift = grad_field(True)
    qlam = function_form(constant_field(chart, q * lam))
    lam_f = f * (2.0 * lam)
    prefix = "twisted" if twisted else "gradient"

    if twisted:
        trace_identity = s - calc.delta_T(df + kappa) - qlam
        energy = s + calc.norm_squared(df + kappa) - lam_f
        conservation = calc.d_B(energy) - kappa * (2.0 * lam)
        contracted = ds - _interior_ricci(calc, drift) * 2.0
        laplace = (
            calc.basic_laplacian(s)
            + s * (2.0 * lam)
            + _directional(calc, ds, grad_f)
            - ric_sq * 2.0
        )
    else:
        trace_identity = s - calc.delta_T(df) - qlam
        energy = s + calc.norm_squared(df) - lam_f
        conservation = calc.d_B(energy)
        contracted = ds - _interior_ricci(calc, grad_f) * 2.0
        minus_tau = derived_field(chart, lambda p: grad_f(p) - geo.tau(p), (q,))
        laplace = (
            calc.basic_laplacian(s)
            - ric_sq * 2.0
            + s * (2.0 * lam)
            + _directional(calc, ds, minus_tau)
        )
    residuals = [
        measure(ctx, f"{prefix}_trace", trace_identity, analytic),
        measure(ctx, f"{prefix}_conservation", conservation, analytic),
        measure(ctx, f"{prefix}_contracted_bianchi", contracted, analytic),
        measure(ctx, f"{prefix}_scalar_laplacian", laplace, finite_difference),
    ]
    notes: list[str] = []
    if twisted and lam is not None and abs(lam) > 0:
        tautness = kappa - calc.d_B(energy) * (1.0 / (2.0 * lam))
        residuals.append(measure(ctx, "twisted_tautness", tautness, analytic))
    if not base.applicable:
        notes.append(
            f"soliton residual {base.residuals[0].sup:.3e} exceeds {APPLICABLE_BELOW:.0e}; "
            "identities only hold on solitons"
        )
    report = ResidualReport(
        residuals=(base.residuals[0], *residuals),
        fitted_lambda=lam,
        classification=base.classification,
        applicable=base.applicable,
        notes=tuple(notes),
    )
    logger.info(
        "%s identity suite: applicable=%s, %d/%d within tolerance",
        prefix,
        report.applicable,
        sum(r.passed for r in residuals),
        len(residuals),
    )
    return report


def gradient_identity_suite(
    candidate: SolitonCandidate,
    analytic: float = 1e-8,
    finite_difference: float = 1e-4,
    tolerance: float = 1e-6,
) -> ResidualReport:
    """S - delta_T df = q lambda, d(S + |df|^2 - 2 lambda f) = 0, dS = 2 i_{grad f} Ric and the
    Laplacian identity for S, evaluated as residual fields."""
    if candidate.kind != "gradient":
        candidate = SolitonCandidate(
            candidate.context, f=candidate.f, lam=candidate.lam, kind="gradient"
        )
    return _suite(candidate, False, analytic, finite_difference, tolerance)


def twisted_identity_suite(
    candidate: SolitonCandidate,
    analytic: float = 1e-8,
    finite_difference: float = 1e-4,
    tolerance: float = 1e-6,
) -> ResidualReport:
    if candidate.kind != "twisted-gradient":
        candidate = SolitonCandidate(
            candidate.context, f=candidate.f, lam=candidate.lam, kind="twisted-gradient"
        )
    return _suite(candidate, True, analytic, finite_difference, tolerance)


@dataclass(frozen=True)
class TheoremVerdict:
    name: str
    applicable: bool
    holds: bool | None = None
    detail: str = ""


@dataclass(frozen=True)
class ConsistencyReport:
    tautness: Tautness
    classification: Classification | None
    fitted_lambda: float | None
    verdicts: tuple[TheoremVerdict, ...] = field(default_factory=tuple)

    @property
    def consistent(self) -> bool:
        return all(v.holds is not False for v in self.verdicts)


def theorem_consistency_report(
    candidate: SolitonCandidate,
    report: ResidualReport | None = None,
    threshold: float = 1e-6,
) -> ConsistencyReport:
    """
    Check the implications that hold for transverse Ricci solitons on
    compact foliated manifolds against one candidate.
    """
    ctx = candidate.context
    calc = candidate.calculus
    base = soliton_residual(candidate) if report is None else report
    lam = base.fitted_lambda
    verdict = base.classification
    nodes = ctx.verify_nodes
    mc = mean_curvature(ctx.metric, points=nodes, geometry=calc.geometry)
    taut = tautness_diagnostic(mc)
    is_soliton = verdict not in (None, "not-a-soliton")

    def sup(form: BasicForm) -> float:
        return float(np.max(_pointwise_norm(calc, form, nodes)))

    verdicts = []
    shrinking = verdict == "shrinking"
    verdicts.append(
        TheoremVerdict(
            "shrinking_implies_taut",
            shrinking,
            (taut == "taut") if shrinking else None,
            f"tautness {taut}",
        )
    )
    steady = verdict == "steady"
    if steady:
        ric = sup(calc.ricci_form())
        potential_df = calc.d_B(function_form(candidate.potential))
        drift = sup(potential_df + calc.kappa_form())
        verdicts.append(
            TheoremVerdict(
                "steady_implies_ricci_flat",
                True,
                ric < threshold and drift < threshold,
                f"|Ric| {ric:.3e}, |grad f + tau_B| {drift:.3e}",
            )
        )
    else:
        verdicts.append(TheoremVerdict("steady_implies_ricci_flat", False))
    taut_soliton = is_soliton and taut == "taut"
    if taut_soliton:
        x_flat = calc.derived(
            lambda p: np.einsum(
                "ab...,b...->a...", calc.geometry.G(p), candidate.vector_field(p)
            ),
            1,
        )
        closed = sup(calc.d_B(x_flat))
        verdicts.append(
            TheoremVerdict(
                "taut_soliton_is_gradient",
                True,
                closed < threshold,
                f"|d X_flat| {closed:.3e}",
            )
        )
    else:
        verdicts.append(TheoremVerdict("taut_soliton_is_gradient", False))
    non_taut = is_soliton and taut == "non-taut"
    verdicts.append(
        TheoremVerdict(
            "non_taut_implies_expanding",
            non_taut,
            (lam is not None and lam < 0) if non_taut else None,
            f"lambda {lam:.12g}" if lam is not None else "",
        )
    )
    gradient_like = candidate.kind == "gradient" or (
        candidate.kind == "generic" and candidate.x is None
    )
    delta_kappa = sup(calc.delta_B(calc.kappa_form()))
    einstein_case = verdict == "expanding" and gradient_like and delta_kappa < threshold
    if einstein_case:
        deviation = sup(calc.ricci_form() - lam * calc.metric_form())
        verdicts.append(
            TheoremVerdict(
                "expanding_gradient_is_einstein",
                True,
                deviation < threshold,
                f"|Ric - lambda g| {deviation:.3e}",
            )
        )
    else:
        verdicts.append(TheoremVerdict("expanding_gradient_is_einstein", False))
    result = ConsistencyReport(
        tautness=taut, classification=verdict, fitted_lambda=lam, verdicts=tuple(verdicts)
    )
    for v in result.verdicts:
        if v.holds is False:
            logger.warning("implication %s violated: %s", v.name, v.detail)
    return result

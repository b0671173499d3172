"""
Transverse Ricci flow dg_Q/dt = -2 Ric^Q with the leaf metric and the frame frozen.

The state is the matrix of g_Q in the transverse frame. When that matrix and
its Ricci tensor are the same at every node the flow is a q x q matrix ODE
(homogeneous path); otherwise g_Q is sampled on the trapezoid grid of the
basic axes and re-interpolated spectrally at every stage.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from foliate.config import FlowOptions, Tolerances
from foliate.exceptions import BlowUpError, NumericError, blow_up, model_error, usage_error
from foliate.geometry.chart import (
    Array,
    QuadratureRule,
    ScalarField,
    constant_field,
    fourier_interpolant,
)
from foliate.geometry.frame import as_matrices
from foliate.geometry.transverse import deturck_field, mean_curvature, tautness_diagnostic
from foliate.services.context import GeometryContext
from foliate.services.functionals import basic_grid, lambda_Q, mu_Q
from foliate.services.soliton import SolitonCandidate, lie_derivative_metric, soliton_residual

logger = logging.getLogger("foliate.flow")

SPD_FLOOR = 1e-10
HOMOGENEITY = 1e-12


@dataclass(frozen=True)
class FlowState:
    time: float
    values: Array

    @property
    def homogeneous(self) -> bool:
        return self.values.ndim == 2

    def min_eigenvalue(self) -> float:
        mats = self.values if self.homogeneous else as_matrices(self.values)
        return float(np.min(np.linalg.eigvalsh(mats)))


def _flatten(values: Array) -> Array:
    return values.reshape(values.shape[:2] + (-1,))


def _variance(values: Array) -> float:
    """Largest per-component variance across nodes."""
    return float(np.max(np.var(_flatten(values), axis=-1)))


def _tensor_interpolant(
    context: GeometryContext, axes: tuple[int, ...], values: Array
) -> ScalarField:
    chart = context.scenario.chart
    q = values.shape[0]
    comps = [[fourier_interpolant(chart, axes, values[a, b]) for b in range(q)] for a in range(q)]

    def fn(points: Array) -> Array:
        return np.stack([np.stack([c(points) for c in row]) for row in comps])

    def grad(points: Array) -> Array:
        return np.stack([np.stack([c.gradient(points) for c in row]) for row in comps])

    return ScalarField(chart=chart, fn=fn, exact_grad=grad, shape=(q, q))


class FlowIntegrator:
    """Right-hand side, stepping and state-to-geometry conversion for one scenario."""

    def __init__(self, context: GeometryContext, deturck: bool = False) -> None:
        self.context = context
        self.deturck = deturck
        scenario = context.scenario
        chart = scenario.chart
        self.axes = tuple(sorted(scenario.basic_indices))
        # basic axes on the trapezoid grid, other coordinates at mid-domain
        self.grid = basic_grid(context, context.suite_rule, 0.5)
        mid = np.array([lo + 0.5 * (hi - lo) for lo, hi in chart.domain])
        self.representative = mid.reshape(chart.dim, 1)
        self.reference = context.geometry.connection if deturck else None

    def initial_state(self) -> FlowState:
        ctx = self.context
        g = ctx.geometry.G(self.grid)
        ric = ctx.geometry.ricci(self.grid)
        if _variance(g) < HOMOGENEITY and _variance(ric) < HOMOGENEITY:
            logger.info("homogeneous flow path")
            return FlowState(0.0, _flatten(g).mean(axis=-1))
        chart = ctx.scenario.chart
        if any(chart.periodicity[a] == "open" for a in self.axes):
            raise model_error(
                "Inhomogeneous flow needs periodic basic axes for spectral interpolation"
            )
        logger.info("grid flow path on %s nodes", "x".join(str(s) for s in g.shape[2:]))
        return FlowState(0.0, g)

    def transverse_field(self, values: Array) -> ScalarField:
        if values.ndim == 2:
            return constant_field(self.context.scenario.chart, values)
        return _tensor_interpolant(self.context, self.axes, values)

    def context_for(self, values: Array) -> GeometryContext:
        return self.context.with_transverse(self.transverse_field(values))

    def rhs(self, values: Array) -> Array:
        """-2 Ric^Q, minus L_X g_Q for the DeTurck field X when enabled."""
        ctx = self.context_for(values)
        points = self.representative if values.ndim == 2 else self.grid
        out = -2.0 * ctx.geometry.ricci(points)
        if self.deturck:
            x = deturck_field(self.reference, ctx.geometry.connection)
            out = out - lie_derivative_metric(ctx.calculus, x)(points)
        return out[..., 0] if values.ndim == 2 else out

    def rk4(self, state: FlowState, h: float) -> FlowState:
        y0 = state.values
        k1 = self.rhs(y0)
        k2 = self.rhs(y0 + 0.5 * h * k1)
        k3 = self.rhs(y0 + 0.5 * h * k2)
        k4 = self.rhs(y0 + h * k3)
        y = y0 + h * (k1 / 6 + k2 / 3 + k3 / 3 + k4 / 6)
        return FlowState(state.time + h, 0.5 * (y + np.swapaxes(y, 0, 1)))


def flow_step(
    integrator: FlowIntegrator, state: FlowState, h: float, max_halvings: int = 10
) -> tuple[FlowState, float, int]:
    """One accepted RK4 step: the new state, the step used and the number of halvings."""
    if not h > 0:
        raise usage_error(f"Step size must be positive, got {h}")
    step = h
    for halvings in range(max_halvings + 1):
        reason = ""
        try:
            new = integrator.rk4(state, step)
            lowest = new.min_eigenvalue()
            if not math.isfinite(lowest) or lowest <= SPD_FLOOR:
                reason = f"min eigenvalue {lowest:.3e}"
        except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
            reason = str(exc)
        if not reason:
            return new, step, halvings
        logger.warning("step rejected at t=%.6g h=%.3e: %s", state.time, step, reason)
        step *= 0.5
    raise blow_up(
        f"g_Q lost positive definiteness after {max_halvings} step halvings", state.time
    )


@dataclass(frozen=True)
class MonitorRow:
    t: float
    h: float
    halvings: int
    scalar_min: float
    scalar_max: float
    lambda_Q: float
    normalized_lambda_Q: float
    mu_Q: float
    kappa_drift: float
    leaf_drift: float
    monotonicity_flag: bool
    spd_ok: bool


@dataclass
class FlowTrace:
    scenario: str
    rows: list[MonitorRow] = field(default_factory=list)
    tautness: str = "inconclusive"
    normalized_applicable: bool = False
    halted: BlowUpError | None = None

    @property
    def completed(self) -> bool:
        return self.halted is None

    @property
    def monotone(self) -> bool:
        return all(r.monotonicity_flag for r in self.rows)

    @property
    def last_good_time(self) -> float:
        return self.rows[-1].t if self.rows else 0.0


class _Monitors:
    def __init__(
        self, integrator: FlowIntegrator, options: FlowOptions, tolerances: Tolerances
    ) -> None:
        self.integrator = integrator
        self.options = options
        self.tolerance = tolerances.monotonicity
        ctx = integrator.context
        nodes = QuadratureRule.uniform(ctx.scenario.chart, 4).nodes
        self.nodes = nodes
        self.kappa0 = ctx.geometry.kappa(nodes)
        mc = mean_curvature(ctx.metric, points=nodes, geometry=ctx.geometry)
        self.tautness = tautness_diagnostic(mc)
        self.previous: MonitorRow | None = None

    def row(self, state: FlowState, h: float, halvings: int) -> MonitorRow:
        ctx = self.integrator.context_for(state.values)
        if not state.homogeneous:
            res = ctx.resolutions
            ctx = GeometryContext(ctx.scenario, replace(res, resolution=res.suite_resolution))
        geo = ctx.geometry
        s = geo.scalar(self.nodes)
        lam = lambda_Q(ctx)
        lam_value = lam.value if lam.converged else math.nan
        normalized = math.nan
        applicable = self.tautness == "taut" and lam_value <= 0
        if applicable:
            normalized = ctx.volume() ** (2.0 / ctx.q) * lam_value
        mu = math.nan
        if self.options.monitor_mu:
            report = mu_Q(ctx, self.options.sigma0 - state.time)
            mu = report.value if report.converged else math.nan
        kappa_drift = float(np.max(np.abs(geo.kappa(self.nodes) - self.kappa0)))
        leaf_drift = geo.leaf_derivative(ctx.transverse_field(), self.nodes)
        flag = True
        prev = self.previous
        if prev is not None:
            flag = lam_value - prev.lambda_Q >= -self.tolerance
            if applicable and not math.isnan(prev.normalized_lambda_Q):
                flag = flag and normalized - prev.normalized_lambda_Q >= -self.tolerance
            if self.options.monitor_mu:
                flag = flag and mu - prev.mu_Q >= -self.tolerance
        if kappa_drift > 1e-8:
            logger.warning("kappa_B drifted by %.3e at t=%.6g", kappa_drift, state.time)
        row = MonitorRow(
            t=state.time,
            h=h,
            halvings=halvings,
            scalar_min=float(np.min(s)),
            scalar_max=float(np.max(s)),
            lambda_Q=lam_value,
            normalized_lambda_Q=normalized,
            mu_Q=mu,
            kappa_drift=kappa_drift,
            leaf_drift=leaf_drift,
            monotonicity_flag=bool(flag),
            spd_ok=state.min_eigenvalue() > SPD_FLOOR,
        )
        self.previous = row
        return row


def run_flow(
    context: GeometryContext,
    options: FlowOptions | None = None,
    tolerances: Tolerances | None = None,
    raise_on_halt: bool = True,
) -> FlowTrace:
    """
    Integrate to `options.t_end` and record monitors at t = 0 and after every
    accepted step. A blow-up halt is raised, or recorded on the trace when
    `raise_on_halt` is false.
    """
    opts = FlowOptions() if options is None else options
    tols = Tolerances() if tolerances is None else tolerances
    started = time.perf_counter()
    integrator = FlowIntegrator(context, deturck=opts.deturck)
    monitors = _Monitors(integrator, opts, tols)
    state = integrator.initial_state()
    trace = FlowTrace(scenario=context.scenario.name, tautness=monitors.tautness)
    trace.rows.append(monitors.row(state, 0.0, 0))
    while state.time < opts.t_end - 1e-12:
        h = min(opts.h, opts.t_end - state.time)
        try:
            state, used, halvings = flow_step(integrator, state, h, opts.max_halvings)
        except BlowUpError as exc:
            logger.error("%s", exc)
            if raise_on_halt:
                raise
            trace.halted = exc
            break
        trace.rows.append(monitors.row(state, used, halvings))
    trace.normalized_applicable = any(not math.isnan(r.normalized_lambda_Q) for r in trace.rows)
    logger.info(
        "flow %s: %d rows to t=%.6g, monotone=%s (%.1f ms)",
        context.scenario.name,
        len(trace.rows),
        trace.last_good_time,
        trace.monotone,
        1000 * (time.perf_counter() - started),
    )
    return trace


def integrate(
    context: GeometryContext, t_end: float, h: float, deturck: bool = False, max_halvings: int = 10
) -> list[FlowState]:
    """Accepted states from t = 0 to t_end without monitors."""
    integrator = FlowIntegrator(context, deturck=deturck)
    state = integrator.initial_state()
    states = [state]
    while state.time < t_end - 1e-12:
        state, _, _ = flow_step(integrator, state, min(h, t_end - state.time), max_halvings)
        states.append(state)
    return states


def closed_form_error(context: GeometryContext, t_end: float, h: float) -> float:
    """sup |g_Q(t) - exact(t)| over accepted steps, for scenarios with a closed form."""
    exact = context.scenario.flow_solution
    if exact is None:
        raise usage_error(f"Scenario {context.scenario.name} has no closed-form flow")
    states = integrate(context, t_end, h)
    if not states[0].homogeneous:
        raise usage_error("Closed-form comparison needs the homogeneous path")
    return max(float(np.max(np.abs(s.values - exact(s.time)))) for s in states)


def convergence_orders(
    context: GeometryContext, t_end: float = 1.0, steps: tuple[float, ...] = (0.1, 0.05, 0.025)
) -> tuple[list[float], list[float]]:
    """Final-time errors against the closed form and observed orders between successive steps."""
    exact = context.scenario.flow_solution
    if exact is None:
        raise usage_error(f"Scenario {context.scenario.name} has no closed-form flow")
    errors = []
    for h in steps:
        final = integrate(context, t_end, h)[-1]
        errors.append(float(np.max(np.abs(final.values - exact(final.time)))))
    orders = [
        math.log(e1 / e2) / math.log(h1 / h2)
        for e1, e2, h1, h2 in zip(errors, errors[1:], steps, steps[1:], strict=False)
        if e1 > 0 and e2 > 0
    ]
    return errors, orders


@dataclass(frozen=True)
class SelfSimilarReport:
    mode: str
    lam: float
    residual: float
    t_end: float
    passed: bool
    detail: str = ""


def self_similar_check(
    context: GeometryContext,
    lam: float,
    x: ScalarField | None = None,
    t_end: float = 0.4,
    h: float = 0.05,
    tolerance: float = 1e-5,
) -> SelfSimilarReport:
    """
    Without X: the integrated flow against (1 - 2 lambda t) g_Q(0). With X:
    the algebraic soliton equation Ric^Q + 1/2 L_X g_Q = lambda g_Q instead.
    """
    if x is not None:
        report = soliton_residual(SolitonCandidate(context, x=x, lam=lam), tolerance)
        sup = report.residuals[0].sup
        return SelfSimilarReport(
            "algebraic", lam, sup, 0.0, sup < tolerance, "diffeomorphism family not constructed"
        )
    integrator = FlowIntegrator(context)
    state = integrator.initial_state()
    g0 = state.values
    worst = 0.0
    try:
        while state.time < t_end - 1e-12:
            state, _, _ = flow_step(integrator, state, min(h, t_end - state.time))
            expected = (1.0 - 2.0 * lam * state.time) * g0
            worst = max(worst, float(np.max(np.abs(state.values - expected))))
    except BlowUpError as exc:
        return SelfSimilarReport("dynamic", lam, math.inf, exc.last_good_time, False, str(exc))
    return SelfSimilarReport("dynamic", lam, worst, state.time, worst < tolerance)

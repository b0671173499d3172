"""
Built-in scenarios.

Each scenario is a chart, an adapted frame with its cycles, a bundle-like
metric and the data the suites need: basic coordinates, probe fields for
the identity checks, a soliton candidate and golden values tagged with
their provenance (PUBLISHED, TRIVIAL or DERIVED).

- flat_torus: T^3 foliated by the x-circles; optional conformal
  perturbation exp(eps (cos 2 pi y + sin 2 pi t)) of g_Q.
- product_sphere: S^1 x S^2(r) foliated by the S^1 factor.
- carriere: the mapping torus of a hyperbolic A in SL(2, Z) with the flow
  along the expanding eigendirection (non-taut).
- product_nil: S^1 x Nil^3 with the Milnor frame, foliated by S^1.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from foliate.config import ScenarioParams
from foliate.exceptions import model_error, usage_error
from foliate.geometry.chart import Array, Chart, QuadratureRule, ScalarField, constant_field
from foliate.geometry.frame import Cycle, FramePresentation, MetricField, VectorField
from foliate.geometry.transverse import BASIC_TOLERANCE, bundle_like_residual

logger = logging.getLogger("foliate.scenarios")

Provenance = Literal["PUBLISHED", "TRIVIAL", "DERIVED"]
SolitonKind = Literal["generic", "gradient", "twisted-gradient"]


@dataclass(frozen=True)
class GoldenValue:
    name: str
    value: float
    provenance: Provenance
    tolerance: float = 1e-8


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    metric: MetricField
    # coordinates on which basic functions are discretized
    basic_axes: tuple[str, ...]
    # coordinates random test forms depend on (smooth on the manifold)
    form_axes: tuple[str, ...]
    probe_function: ScalarField
    probe_rate: ScalarField
    probe_form: ScalarField
    golden: tuple[GoldenValue, ...] = ()
    soliton_kind: SolitonKind = "generic"
    soliton_potential: ScalarField | None = None
    expected_class: str | None = None
    flow_solution: Callable[[float], Array] | None = None
    singular_time: float | None = None
    description: str = ""

    @property
    def frame(self) -> FramePresentation:
        return self.metric.frame

    @property
    def chart(self) -> Chart:
        return self.metric.chart

    @property
    def p(self) -> int:
        return self.frame.p

    @property
    def q(self) -> int:
        return self.frame.q

    @property
    def basic_indices(self) -> tuple[int, ...]:
        return tuple(self.chart.axis(a) for a in self.basic_axes)

    @property
    def form_indices(self) -> tuple[int, ...]:
        return tuple(self.chart.axis(a) for a in self.form_axes)

    def golden_value(self, name: str) -> GoldenValue | None:
        return next((g for g in self.golden if g.name == name), None)

    def with_metric(self, metric: MetricField) -> Scenario:
        """Same scenario under another transverse metric; golden data no longer applies."""
        return replace(self, metric=metric, golden=(), flow_solution=None, expected_class=None)


def _zeros(points: Array) -> Array:
    return np.zeros(points.shape[1:])


def _unit(chart: Chart, axis: int) -> VectorField:
    e = np.zeros(chart.dim)
    e[axis] = 1.0
    return VectorField(chart, constant_field(chart, e))


def _vector(
    chart: Chart, fn: Callable[[Array], Array], grad: Callable[[Array], Array]
) -> VectorField:
    return VectorField(chart, ScalarField(chart=chart, fn=fn, exact_grad=grad, shape=(chart.dim,)))


def _axis_function(
    chart: Chart, axis: int, fn: Callable[[Array], Array], dfn: Callable[[Array], Array]
) -> ScalarField:
    """A function of one coordinate with its exact gradient."""

    def grad(points: Array) -> Array:
        g = np.zeros(points.shape)
        g[axis] = dfn(points[axis])
        return g

    return ScalarField(chart=chart, fn=lambda p: fn(p[axis]), exact_grad=grad)


def _transverse_form(chart: Chart, q: int, slot: int, coefficient: ScalarField) -> ScalarField:
    """coefficient * (transverse coframe element `slot`)."""

    def fn(points: Array) -> Array:
        out = np.zeros((q,) + points.shape[1:])
        out[slot] = coefficient(points)
        return out

    def grad(points: Array) -> Array:
        out = np.zeros((q, chart.dim) + points.shape[1:])
        out[slot] = coefficient.gradient(points)
        return out

    return ScalarField(chart=chart, fn=fn, exact_grad=grad, shape=(q,))


def _scaled_identity(chart: Chart, q: int, c: float) -> ScalarField | None:
    if c == 1.0:
        return None
    return constant_field(chart, c * np.eye(q))


def _cos2pi(chart: Chart, axis: int) -> ScalarField:
    return _axis_function(
        chart, axis, lambda s: np.cos(2 * np.pi * s), lambda s: -2 * np.pi * np.sin(2 * np.pi * s)
    )


def _sin2pi(chart: Chart, axis: int) -> ScalarField:
    return _axis_function(
        chart, axis, lambda s: np.sin(2 * np.pi * s), lambda s: 2 * np.pi * np.cos(2 * np.pi * s)
    )


def flat_torus(perturbation: float = 0.0, scale: float = 1.0) -> Scenario:
    chart = Chart(("x", "y", "t"), ((0.0, 1.0),) * 3, ("periodic",) * 3)
    frame = FramePresentation(
        chart,
        tuple(_unit(chart, i) for i in range(3)),
        p=1,
        q=2,
        cycles=(Cycle("y-loop", (0.0, 0.0, 0.0), "y"), Cycle("t-loop", (0.0, 0.0, 0.0), "t")),
    )
    eps = float(perturbation)
    if eps == 0.0:
        transverse = _scaled_identity(chart, 2, scale)
    else:

        def conformal(points: Array) -> Array:
            return scale * np.exp(
                eps * (np.cos(2 * np.pi * points[1]) + np.sin(2 * np.pi * points[2]))
            )

        def g_fn(points: Array) -> Array:
            return np.einsum("ab,...->ab...", np.eye(2), conformal(points))

        def g_grad(points: Array) -> Array:
            w = conformal(points)
            d = np.zeros((3,) + points.shape[1:])
            d[1] = -2 * np.pi * eps * np.sin(2 * np.pi * points[1]) * w
            d[2] = 2 * np.pi * eps * np.cos(2 * np.pi * points[2]) * w
            return np.einsum("ab,m...->abm...", np.eye(2), d)

        transverse = ScalarField(chart=chart, fn=g_fn, exact_grad=g_grad, shape=(2, 2))
    metric = MetricField(frame, transverse)
    t_axis = chart.axis("t")
    probe = _cos2pi(chart, t_axis)
    golden: tuple[GoldenValue, ...]
    if eps == 0.0:
        golden = (
            GoldenValue("ricci_sup", 0.0, "TRIVIAL"),
            GoldenValue("scalar_curvature", 0.0, "TRIVIAL"),
            GoldenValue("lambda_Q", 0.0, "TRIVIAL", 1e-6),
            GoldenValue("normalized_lambda_Q", 0.0, "TRIVIAL", 1e-6),
            GoldenValue("F_Q_zero", 0.0, "TRIVIAL"),
            GoldenValue("soliton_lambda", 0.0, "TRIVIAL"),
            GoldenValue("loop_integral:t-loop", 0.0, "TRIVIAL"),
        )
    else:
        golden = (GoldenValue("scalar_integral", 0.0, "DERIVED", 1e-6),)
    return Scenario(
        name="flat_torus",
        metric=metric,
        basic_axes=("y", "t"),
        form_axes=("y", "t"),
        probe_function=probe,
        probe_rate=_sin2pi(chart, t_axis),
        probe_form=_transverse_form(chart, 2, 1, probe),
        golden=golden,
        soliton_kind="gradient",
        soliton_potential=constant_field(chart, 0.0),
        expected_class="steady" if eps == 0.0 else "not-a-soliton",
        flow_solution=(lambda t: scale * np.eye(2)) if eps == 0.0 else None,
        description="flat 3-torus foliated by circles"
        + (f", conformal perturbation {eps}" if eps else ""),
    )


def product_sphere(radius: float = 1.0, scale: float = 1.0) -> Scenario:
    r = float(radius)
    chart = Chart(
        ("s", "theta", "phi"),
        ((0.0, 1.0), (0.0, math.pi), (0.0, 2 * math.pi)),
        ("periodic", "open", "periodic"),
        polar=("theta",),
    )

    def e_theta(points: Array) -> Array:
        z = _zeros(points)
        return np.stack([z, z + 1.0 / r, z])

    def e_phi(points: Array) -> Array:
        z = _zeros(points)
        return np.stack([z, z, 1.0 / (r * np.sin(points[1]))])

    def e_phi_grad(points: Array) -> Array:
        g = np.zeros((3, 3) + points.shape[1:])
        g[2, 1] = -np.cos(points[1]) / (r * np.sin(points[1]) ** 2)
        return g

    frame = FramePresentation(
        chart,
        (
            _unit(chart, 0),
            _vector(chart, e_theta, lambda p: np.zeros((3, 3) + p.shape[1:])),
            _vector(chart, e_phi, e_phi_grad),
        ),
        p=1,
        q=2,
        cycles=(Cycle("s-loop", (0.0, math.pi / 2, 0.0), "s"),),
    )
    metric = MetricField(frame, _scaled_identity(chart, 2, scale))
    k = 1.0 / (scale * r * r)
    theta = chart.axis("theta")
    probe = _axis_function(chart, theta, np.cos, lambda s: -np.sin(s))
    rate = _axis_function(chart, theta, lambda s: np.cos(2 * s), lambda s: -2 * np.sin(2 * s))
    # cos(theta) d(cos theta); d theta is 1/r times the coframe element dual to e_theta
    form_coef = _axis_function(
        chart, theta, lambda s: -np.cos(s) * np.sin(s) / r, lambda s: -np.cos(2 * s) / r
    )
    volume = 4 * math.pi * r * r * scale
    return Scenario(
        name="product_sphere",
        metric=metric,
        basic_axes=("theta", "phi"),
        form_axes=("theta",),
        probe_function=probe,
        probe_rate=rate,
        probe_form=_transverse_form(chart, 2, 0, form_coef),
        golden=(
            GoldenValue("scalar_curvature", 2 * k, "DERIVED"),
            GoldenValue("sectional_curvature", k, "DERIVED"),
            GoldenValue("ricci_eigenvalue", k, "DERIVED"),
            GoldenValue("lambda_Q", 2 * k, "DERIVED", 1e-6),
            GoldenValue("F_Q_zero", 2 * k * volume, "DERIVED", 1e-7),
            GoldenValue("soliton_lambda", k, "DERIVED"),
            GoldenValue("loop_integral:s-loop", 0.0, "TRIVIAL"),
        ),
        soliton_kind="gradient",
        soliton_potential=constant_field(chart, 0.0),
        expected_class="shrinking",
        flow_solution=lambda t: (scale - 2.0 * t / (r * r)) * np.eye(2),
        singular_time=scale * r * r / 2.0,
        description=f"S^1 x S^2({r}) foliated by the circle factor",
    )


def carriere(a_matrix: list[list[int]] | None = None, scale: float = 1.0) -> Scenario:
    params = ScenarioParams(a_matrix=a_matrix or [[2, 1], [1, 1]])
    rho, big_l = params.rho, params.log_rho
    chart = Chart(
        ("x", "y", "t"),
        ((0.0, 1.0),) * 3,
        ("twisted-periodic",) * 3,
        twist_note=f"(x, t) ~ (A^k x, t + k) with A = {params.a_matrix}; x, y are eigencoordinates",
    )

    def e1(points: Array) -> Array:
        z = _zeros(points)
        return np.stack([rho ** (-points[2]), z, z])

    def e1_grad(points: Array) -> Array:
        g = np.zeros((3, 3) + points.shape[1:])
        g[0, 2] = -big_l * rho ** (-points[2])
        return g

    def e2(points: Array) -> Array:
        z = _zeros(points)
        return np.stack([z, rho ** points[2], z])

    def e2_grad(points: Array) -> Array:
        g = np.zeros((3, 3) + points.shape[1:])
        g[1, 2] = big_l * rho ** points[2]
        return g

    frame = FramePresentation(
        chart,
        (_vector(chart, e1, e1_grad), _vector(chart, e2, e2_grad), _unit(chart, 2)),
        p=1,
        q=2,
        cycles=(Cycle("t-loop", (0.0, 0.0, 0.0), "t"),),
    )
    metric = MetricField(frame, _scaled_identity(chart, 2, scale))
    l2 = big_l * big_l
    t_axis = chart.axis("t")
    probe = _cos2pi(chart, t_axis)
    return Scenario(
        name="carriere",
        metric=metric,
        basic_axes=("t",),
        form_axes=("t",),
        probe_function=probe,
        probe_rate=_sin2pi(chart, t_axis),
        # cos(2 pi t) dt
        probe_form=_transverse_form(chart, 2, 1, probe),
        golden=(
            GoldenValue("ln_rho", big_l, "DERIVED"),
            GoldenValue("sectional_curvature", -l2 / scale, "PUBLISHED"),
            GoldenValue("ricci_eigenvalue", -l2 / scale, "PUBLISHED"),
            GoldenValue("scalar_curvature", -2 * l2 / scale, "PUBLISHED"),
            GoldenValue("tau_component", -big_l / scale, "PUBLISHED"),
            GoldenValue("kappa_component", -big_l, "PUBLISHED"),
            GoldenValue("loop_integral:t-loop", -big_l, "DERIVED"),
            GoldenValue("delta_T_kappa", -l2 / scale, "DERIVED"),
            GoldenValue("delta_B_kappa", 0.0, "DERIVED"),
            GoldenValue("lambda_Q", -l2 / scale, "DERIVED", 1e-6),
            GoldenValue("normalized_lambda_Q", -l2, "DERIVED", 1e-6),
            GoldenValue("F_Q_zero", -l2, "DERIVED"),
            GoldenValue("soliton_lambda", -l2 / scale, "PUBLISHED"),
        ),
        soliton_kind="generic",
        expected_class="expanding",
        flow_solution=lambda t: (scale + 2.0 * l2 * t) * np.eye(2),
        description=f"Carriere torus T^3_A, A={params.a_matrix}, rho={rho:.10g}",
    )


def product_nil(scale: float = 1.0) -> Scenario:
    chart = Chart(
        ("s", "x", "y", "z"),
        ((0.0, 1.0),) * 4,
        ("periodic", "twisted-periodic", "periodic", "periodic"),
        twist_note="(x, y, z) ~ (x + 1, y, z + y): Heisenberg lattice quotient",
    )

    def e_y(points: Array) -> Array:
        z = _zeros(points)
        return np.stack([z, z, z + 1.0, points[1]])

    def e_y_grad(points: Array) -> Array:
        g = np.zeros((4, 4) + points.shape[1:])
        g[3, 1] = 1.0
        return g

    frame = FramePresentation(
        chart,
        (_unit(chart, 0), _unit(chart, 1), _vector(chart, e_y, e_y_grad), _unit(chart, 3)),
        p=1,
        q=3,
        cycles=(Cycle("s-loop", (0.0, 0.0, 0.0, 0.0), "s"),),
    )
    metric = MetricField(frame, _scaled_identity(chart, 3, scale))
    x_axis, y_axis = chart.axis("x"), chart.axis("y")
    probe = _cos2pi(chart, x_axis)

    def solution(t: float) -> Array:
        a = (1.0 + 3.0 * t / scale) ** (1.0 / 3.0)
        return scale * np.diag([a, a, 1.0 / a])

    return Scenario(
        name="product_nil",
        metric=metric,
        basic_axes=("x", "y"),
        form_axes=("x", "y"),
        probe_function=probe,
        probe_rate=_sin2pi(chart, y_axis),
        probe_form=_transverse_form(chart, 3, 0, probe),
        golden=(
            GoldenValue("scalar_curvature", -0.5 / scale, "DERIVED"),
            GoldenValue("ricci_xx", -0.5, "DERIVED"),
            GoldenValue("ricci_zz", 0.5, "DERIVED"),
            GoldenValue("lambda_Q", -0.5 / scale, "DERIVED", 1e-6),
            GoldenValue("loop_integral:s-loop", 0.0, "TRIVIAL"),
        ),
        soliton_kind="generic",
        expected_class="not-a-soliton",
        flow_solution=solution,
        description="S^1 x Nil^3 with the Milnor frame, foliated by the circle factor",
    )


def validate_scenario(scenario: Scenario, resolution: int = 6) -> None:
    """Load-time checks: frame independence, involutivity, bundle-like, SPD."""
    nodes = QuadratureRule.uniform(scenario.chart, resolution).nodes
    frame = scenario.frame
    frame.check_independence(nodes)
    invol = frame.involutivity_residual(nodes)
    if invol > BASIC_TOLERANCE:
        raise model_error(f"Leaf distribution is not involutive (residual {invol:.3e})")
    bundle = bundle_like_residual(scenario.metric, nodes)
    if bundle > BASIC_TOLERANCE:
        raise model_error(f"Metric is not bundle-like (residual {bundle:.3e})")
    scenario.metric.check(nodes)


SCENARIOS = ("flat_torus", "product_sphere", "carriere", "product_nil")


def build_scenario(name: str, params: ScenarioParams | None = None) -> Scenario:
    params = params or ScenarioParams()
    if name == "flat_torus":
        scenario = flat_torus(params.perturbation, params.scale)
    elif name == "product_sphere":
        scenario = product_sphere(params.radius, params.scale)
    elif name == "carriere":
        scenario = carriere(params.a_matrix, params.scale)
    elif name == "product_nil":
        scenario = product_nil(params.scale)
    else:
        raise usage_error(f"Unknown scenario {name!r}; choose one of {', '.join(SCENARIOS)}")
    validate_scenario(scenario)
    logger.info(
        "scenario %s loaded: p=%d q=%d (%s)",
        scenario.name,
        scenario.p,
        scenario.q,
        scenario.description,
    )
    return scenario

"""
Differential operators on basic functions, 1-forms and 2-tensors.

All operators return `BasicForm`s wrapping derived fields, so they compose
(d_B of delta_B of ...) and are evaluated only at the points a caller asks
for. Components are taken in the transverse (co)frame of the geometry.

Pairings
- 1-forms: G^{ij} a_i b_j.
- symmetric and general 2-tensors: full contraction G^{ik} G^{jl} a_ij b_kl.
- 2-forms: one half of the full contraction.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from foliate.exceptions import model_error, usage_error
from foliate.geometry.chart import (
    Array,
    Chart,
    QuadratureRule,
    ScalarField,
    constant_field,
    derived_field,
    linear_combination,
)
from foliate.geometry.transverse import (
    BASIC_TOLERANCE,
    TransverseGeometry,
    delta_two_tensor,
    exterior_derivative_one_form,
)

logger = logging.getLogger("foliate.operators")

FormKind = Literal["form", "symmetric", "tensor"]


@dataclass(frozen=True, eq=False)
class BasicForm:
    degree: int
    field: ScalarField
    kind: FormKind = "form"

    def __post_init__(self) -> None:
        if self.degree not in (0, 1, 2):
            raise usage_error(f"Unsupported form degree {self.degree}")
        if len(self.field.shape) != self.degree:
            raise usage_error(
                f"A degree-{self.degree} form needs {self.degree} component axes, "
                f"got shape {self.field.shape}"
            )
        if self.degree != 2 and self.kind != "form":
            raise usage_error("Only degree-2 tensors can be symmetric or general")

    @property
    def chart(self) -> Chart:
        return self.field.chart

    def __call__(self, points: Array) -> Array:
        return self.field(points)

    def _combine(self, other: BasicForm, a: float, b: float) -> BasicForm:
        if not isinstance(other, BasicForm):
            return NotImplemented
        if other.degree != self.degree:
            raise usage_error(f"Cannot combine degree {self.degree} and {other.degree} forms")
        kind = self.kind if self.kind == other.kind else "tensor"
        return BasicForm(self.degree, linear_combination([a, b], [self.field, other.field]), kind)

    def __add__(self, other: BasicForm) -> BasicForm:
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: BasicForm) -> BasicForm:
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c: float) -> BasicForm:
        return BasicForm(self.degree, linear_combination([float(c)], [self.field]), self.kind)

    __rmul__ = __mul__

    def __neg__(self) -> BasicForm:
        return self * -1.0


def function_form(field: ScalarField) -> BasicForm:
    return BasicForm(0, field)


def one_form(field: ScalarField) -> BasicForm:
    return BasicForm(1, field)


def zero_form(chart: Chart, degree: int, q: int, kind: FormKind = "form") -> BasicForm:
    return BasicForm(degree, constant_field(chart, np.zeros((q,) * degree)), kind)


def exp_neg(f: ScalarField) -> ScalarField:
    """e^{-f} with the gradient taken from f."""
    return ScalarField(
        chart=f.chart,
        fn=lambda p: np.exp(-f(p)),
        exact_grad=lambda p: -np.exp(-f(p)) * f.gradient(p),
        fd_step=f.fd_step,
        constant=f.constant,
        stencil=f.stencil,
    )


class BasicCalculus:
    """Basic exterior calculus over one transverse geometry."""

    def __init__(self, geometry: TransverseGeometry, tolerance: float = BASIC_TOLERANCE) -> None:
        self.geometry = geometry
        self.tolerance = tolerance

    @property
    def chart(self) -> Chart:
        return self.geometry.chart

    @property
    def p(self) -> int:
        return self.geometry.p

    @property
    def q(self) -> int:
        return self.geometry.q

    def derived(self, fn, degree: int, kind: FormKind = "form") -> BasicForm:
        return BasicForm(degree, derived_field(self.chart, fn, (self.q,) * degree), kind)

    def transverse_derivative(self, field: ScalarField, points: Array) -> Array:
        """e_{p+k}(field) with the derivative index right after the component axes."""
        d = field.frame_derivative(points, self.geometry.frame.matrix(points))
        return np.take(d, list(self.geometry.frame.transverse), axis=len(field.shape))

    def check_basic(self, form: BasicForm, points: Array) -> float:
        leaf = self.geometry.leaf_derivative(form.field, points)
        if leaf > self.tolerance:
            raise model_error(f"Form is not basic (leaf derivative {leaf:.3e})")
        return leaf

    # -- first order -----------------------------------------------------

    def d_B(self, form: BasicForm) -> BasicForm:
        if form.degree == 0:
            return self.derived(lambda p: self.transverse_derivative(form.field, p), 1)
        if form.degree == 1:
            return self.derived(
                lambda p: exterior_derivative_one_form(self.geometry, form.field, p), 2
            )
        raise usage_error("d_B of a degree-2 form is not supported")

    def nabla(self, eta: BasicForm, points: Array) -> Array:
        """(nabla_{e_i} eta)(e_j) for transverse i, j; leafwise it vanishes on basic forms."""
        if eta.degree != 1:
            raise usage_error("nabla expects a 1-form")
        gam = self.geometry.gamma(points)[self.p :]
        de = self.transverse_derivative(eta.field, points)
        return np.swapaxes(de, 0, 1) - np.einsum("ijk...,k...->ij...", gam, eta(points))

    def covariant_derivative(self, form: BasicForm) -> BasicForm:
        if form.degree == 0:
            return self.d_B(form)
        if form.degree == 1:
            return self.derived(lambda p: self.nabla(form, p), 2, "tensor")
        raise usage_error("Covariant derivative of a 2-tensor is not supported")

    def delta_T(self, form: BasicForm) -> BasicForm:
        if form.degree == 1:

            def fn(points: Array) -> Array:
                ginv = self.geometry.Ginv(points)
                return -np.einsum("ij...,ij...->...", ginv, self.nabla(form, points))

            return self.derived(fn, 0)
        if form.degree == 2:
            return self.derived(lambda p: delta_two_tensor(self.geometry, form.field, p), 1)
        raise usage_error("delta_T of a function is not defined")

    def delta_B(self, form: BasicForm) -> BasicForm:
        """delta_T + i_{tau_B}."""
        inner = self.delta_T(form)
        geo = self.geometry
        if form.degree == 1:

            def fn(points: Array) -> Array:
                return inner(points) + np.einsum("k...,k...->...", geo.tau(points), form(points))

            return self.derived(fn, 0)

        def fn2(points: Array) -> Array:
            return inner(points) + np.einsum("k...,kb...->b...", geo.tau(points), form(points))

        return self.derived(fn2, 1)

    # -- second order ----------------------------------------------------

    def basic_laplacian(self, form: BasicForm) -> BasicForm:
        if form.degree == 0:
            return self.delta_B(self.d_B(form))
        if form.degree == 1:
            return self.hodge_laplacian(form)
        raise usage_error("Basic Laplacian of a 2-form is not supported")

    def hodge_laplacian(self, eta: BasicForm) -> BasicForm:
        """d_B delta_B + delta_B d_B on 1-forms."""
        if eta.degree != 1:
            raise usage_error("hodge_laplacian expects a 1-form")
        return self.d_B(self.delta_B(eta)) + self.delta_B(self.d_B(eta))

    def rough_laplacian(self, eta: BasicForm) -> BasicForm:
        if eta.degree != 1:
            raise usage_error("rough_laplacian expects a 1-form")
        nab = self.covariant_derivative(eta).field
        geo = self.geometry

        def fn(points: Array) -> Array:
            n = nab(points)
            dn = self.transverse_derivative(nab, points)
            gam = geo.gamma(points)[self.p :]
            second = (
                np.einsum("jli...->ijl...", dn)
                - np.einsum("ijk...,kl...->ijl...", gam, n)
                - np.einsum("ilk...,jk...->ijl...", gam, n)
            )
            return -np.einsum("ij...,ijl...->l...", geo.Ginv(points), second) + np.einsum(
                "k...,kl...->l...", geo.tau(points), n
            )

        return self.derived(fn, 1)

    def A_tau(self, eta: BasicForm) -> BasicForm:
        """L_{tau_B} eta - nabla_{tau_B} eta."""
        if eta.degree != 1:
            raise usage_error("A_tau expects a 1-form")
        geo = self.geometry
        p = self.p

        def fn(points: Array) -> Array:
            values = eta(points)
            tau = geo.tau(points)
            de = self.transverse_derivative(eta.field, points)
            dtau = self.transverse_derivative(geo.tau_field, points)
            c = geo.frame.structure(points)[p:, p:, p:]
            lie = (
                np.einsum("k...,jk...->j...", tau, de)
                - np.einsum("k...,kjm...,m...->j...", tau, c, values)
                + np.einsum("kj...,k...->j...", dtau, values)
            )
            return lie - np.einsum("k...,kj...->j...", tau, self.nabla(eta, points))

        return self.derived(fn, 1)

    def A_tau_bundle(self, eta: BasicForm) -> BasicForm:
        """eta(nabla_. tau_B), the bundle-map form of A_tau."""
        geo = self.geometry

        def fn(points: Array) -> Array:
            dtau = self.transverse_derivative(geo.tau_field, points)
            gam = geo.gamma(points)[self.p :]
            nabla_tau = np.swapaxes(dtau, 0, 1) + np.einsum(
                "jkm...,k...->jm...", gam, geo.tau(points)
            )
            return np.einsum("jm...,m...->j...", nabla_tau, eta(points))

        return self.derived(fn, 1)

    def ricci_action(self, eta: BasicForm) -> BasicForm:
        """(Ric . eta)(X) = Ric(X, eta#)."""
        geo = self.geometry

        def fn(points: Array) -> Array:
            return np.einsum(
                "jk...,km...,m...->j...", geo.ricci(points), geo.Ginv(points), eta(points)
            )

        return self.derived(fn, 1)

    def hessian(self, f: BasicForm) -> BasicForm:
        d = self.covariant_derivative(self.d_B(f))
        return BasicForm(2, d.field, "symmetric")

    # -- algebra ---------------------------------------------------------

    def sharp(self, eta: BasicForm, points: Array) -> Array:
        return np.einsum("km...,m...->k...", self.geometry.Ginv(points), eta(points))

    def inner(self, a: BasicForm, b: BasicForm) -> BasicForm:
        if a.degree != b.degree:
            raise usage_error("Pairing needs forms of equal degree")
        geo = self.geometry
        if a.degree == 0:
            return self.derived(lambda p: a(p) * b(p), 0)
        if a.degree == 1:
            return self.derived(
                lambda p: np.einsum("i...,ij...,j...->...", a(p), geo.Ginv(p), b(p)), 0
            )
        weight = 0.5 if a.kind == "form" and b.kind == "form" else 1.0

        def fn(points: Array) -> Array:
            ginv = geo.Ginv(points)
            return weight * np.einsum(
                "ik...,jl...,ij...,kl...->...", ginv, ginv, a(points), b(points)
            )

        return self.derived(fn, 0)

    def norm_squared(self, form: BasicForm) -> BasicForm:
        return self.inner(form, form)

    def trace(self, h: BasicForm) -> BasicForm:
        if h.degree != 2:
            raise usage_error("trace expects a 2-tensor")
        geo = self.geometry
        return self.derived(lambda p: np.einsum("ij...,ij...->...", geo.Ginv(p), h(p)), 0)

    def apply(self, h: BasicForm, x: Array, y: Array, points: Array) -> Array:
        """h(X, Y) for transverse vector components x, y."""
        return np.einsum("i...,ij...,j...->...", x, h(points), y)

    def gradient_norm_squared(self, eta: BasicForm) -> BasicForm:
        """|nabla eta|^2 over transverse directions."""
        geo = self.geometry

        def fn(points: Array) -> Array:
            ginv = geo.Ginv(points)
            n = self.nabla(eta, points)
            return np.einsum("ik...,jl...,ij...,kl...->...", ginv, ginv, n, n)

        return self.derived(fn, 0)

    def metric_form(self) -> BasicForm:
        return self.derived(self.geometry.G, 2, "symmetric")

    def ricci_form(self) -> BasicForm:
        return BasicForm(2, self.geometry.ricci_field, "symmetric")

    def scalar_form(self) -> BasicForm:
        return BasicForm(0, self.geometry.scalar_field)

    def kappa_form(self) -> BasicForm:
        return BasicForm(1, self.geometry.kappa_field)

    def tau_components(self, points: Array) -> Array:
        return self.geometry.tau(points)

    # -- pointwise verifiers -------------------------------------------

    def weitzenbock_residual(self, eta: BasicForm, points: Array) -> float:
        """sup |Delta_B eta - nabla*nabla eta - Ric.eta - A_tau eta|."""
        residual = (
            self.hodge_laplacian(eta)
            - self.rough_laplacian(eta)
            - self.ricci_action(eta)
            - self.A_tau(eta)
        )
        return float(np.max(np.abs(residual(points))))

    def bochner_residual(self, eta: BasicForm, points: Array) -> float:
        geo = self.geometry
        sharp = self.sharp(eta, points)
        lap_norm = self.basic_laplacian(self.norm_squared(eta))(points)
        grad_sq = self.gradient_norm_squared(eta)(points)
        ric = np.einsum("i...,ij...,j...->...", sharp, geo.ricci(points), sharp)
        a_tau = np.einsum("j...,j...->...", self.A_tau(eta)(points), sharp)
        hodge = np.einsum("j...,j...->...", self.hodge_laplacian(eta)(points), sharp)
        residual = -0.5 * lap_norm - grad_sq - ric - a_tau + hodge
        return float(np.max(np.abs(residual)))

    def rough_bochner_residual(self, eta: BasicForm, points: Array) -> float:
        """sup |(nabla*nabla eta)(eta#) - 1/2 Delta_B |eta|^2 - |nabla eta|^2|."""
        sharp = self.sharp(eta, points)
        rough = np.einsum("j...,j...->...", self.rough_laplacian(eta)(points), sharp)
        lap_norm = self.basic_laplacian(self.norm_squared(eta))(points)
        grad_sq = self.gradient_norm_squared(eta)(points)
        return float(np.max(np.abs(rough - 0.5 * lap_norm - grad_sq)))

    def a_tau_identity_residual(self, eta: BasicForm, points: Array) -> float:
        return float(np.max(np.abs((self.A_tau(eta) - self.A_tau_bundle(eta))(points))))

    def exponential_laplacian_residual(self, f: BasicForm, points: Array) -> float:
        """sup |Delta_B e^{-f} + (Delta_B f + |df|^2) e^{-f}|."""
        ef = function_form(exp_neg(f.field))
        lhs = self.basic_laplacian(ef)(points)
        rhs = (self.basic_laplacian(f)(points) + self.norm_squared(self.d_B(f))(points)) * ef(
            points
        )
        return float(np.max(np.abs(lhs + rhs)))


# -- random basic test fields --------------------------------------------


@dataclass(frozen=True)
class _AxisSeries:
    """A short trigonometric series in one coordinate (cosine polynomial on open axes)."""

    axis: int
    lo: float
    length: float
    periodic: bool
    coeffs: Array

    def value(self, s: Array) -> Array:
        u = (s - self.lo) / self.length
        if self.periodic:
            out = np.full_like(u, self.coeffs[0])
            for k in range(1, (len(self.coeffs) - 1) // 2 + 1):
                a, b = self.coeffs[2 * k - 1], self.coeffs[2 * k]
                out = out + a * np.cos(2 * np.pi * k * u) + b * np.sin(2 * np.pi * k * u)
            return out
        return np.polynomial.polynomial.polyval(np.cos(np.pi * u), self.coeffs)

    def derivative(self, s: Array) -> Array:
        u = (s - self.lo) / self.length
        if self.periodic:
            out = np.zeros_like(u)
            for k in range(1, (len(self.coeffs) - 1) // 2 + 1):
                a, b = self.coeffs[2 * k - 1], self.coeffs[2 * k]
                w = 2 * np.pi * k / self.length
                out = out + w * (-a * np.sin(2 * np.pi * k * u) + b * np.cos(2 * np.pi * k * u))
            return out
        dpoly = np.polynomial.polynomial.polyder(self.coeffs)
        return (
            np.polynomial.polynomial.polyval(np.cos(np.pi * u), dpoly)
            * -np.sin(np.pi * u)
            * np.pi
            / self.length
        )


def _axis_series(chart: Chart, axis: int, rng: np.random.Generator, modes: int) -> _AxisSeries:
    lo, hi = chart.domain[axis]
    periodic = chart.periodicity[axis] != "open"
    size = 2 * modes + 1 if periodic else modes + 1
    scale = 0.5 / np.maximum(1.0, np.ceil(np.arange(size) / (2 if periodic else 1)))
    return _AxisSeries(axis, lo, hi - lo, periodic, rng.normal(size=size) * scale)


def random_basic_function(
    chart: Chart, axes: Sequence[int], rng: np.random.Generator, modes: int = 2
) -> ScalarField:
    """sum_a u_a(x_a) + prod_a v_a(x_a) with short random series u_a, v_a."""
    if not axes:
        raise usage_error("Random basic functions need at least one basic axis")
    sums = [_axis_series(chart, a, rng, modes) for a in axes]
    prods = [_axis_series(chart, a, rng, modes) for a in axes]

    def fn(points: Array) -> Array:
        out = sum(u.value(points[u.axis]) for u in sums)
        return out + np.prod([v.value(points[v.axis]) for v in prods], axis=0)

    def grad(points: Array) -> Array:
        g = np.zeros(points.shape)
        vals = [v.value(points[v.axis]) for v in prods]
        for i, (u, v) in enumerate(zip(sums, prods, strict=True)):
            others = np.prod([w for j, w in enumerate(vals) if j != i] or [1.0], axis=0)
            g[u.axis] += u.derivative(points[u.axis])
            g[v.axis] += v.derivative(points[v.axis]) * others
        return g

    return ScalarField(chart=chart, fn=fn, exact_grad=grad)


def random_basic_one_form(
    calculus: BasicCalculus, axes: Sequence[int], rng: np.random.Generator
) -> BasicForm:
    """f1 d_B f2 + d_B f3, smooth wherever the f_i are."""
    f1, f2, f3 = (random_basic_function(calculus.chart, axes, rng) for _ in range(3))

    def fn(points: Array) -> Array:
        d2 = calculus.transverse_derivative(f2, points)
        d3 = calculus.transverse_derivative(f3, points)
        return f1(points) * d2 + d3

    return calculus.derived(fn, 1)


def random_symmetric_tensor(
    calculus: BasicCalculus, axes: Sequence[int], rng: np.random.Generator
) -> BasicForm:
    """f1 g_Q + d_B f2 (x) d_B f2."""
    f1, f2 = (random_basic_function(calculus.chart, axes, rng) for _ in range(2))
    geo = calculus.geometry

    def fn(points: Array) -> Array:
        d2 = calculus.transverse_derivative(f2, points)
        return f1(points) * geo.G(points) + np.einsum("i...,j...->ij...", d2, d2)

    return calculus.derived(fn, 2, "symmetric")


def random_two_form(
    calculus: BasicCalculus, axes: Sequence[int], rng: np.random.Generator
) -> BasicForm:
    """f1 d_B f2 ^ d_B f3."""
    f1, f2, f3 = (random_basic_function(calculus.chart, axes, rng) for _ in range(3))

    def fn(points: Array) -> Array:
        d2 = calculus.transverse_derivative(f2, points)
        d3 = calculus.transverse_derivative(f3, points)
        wedge = np.einsum("i...,j...->ij...", d2, d3)
        return f1(points) * (wedge - np.swapaxes(wedge, 0, 1))

    return calculus.derived(fn, 2)


# -- integration identities ----------------------------------------------


@dataclass(frozen=True)
class IdentityGap:
    name: str
    lhs: float
    rhs: float
    pointwise: bool = False

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def integration_identity_suite(
    calculus: BasicCalculus,
    rule: QuadratureRule,
    eta: BasicForm,
    f: BasicForm,
    fdot: BasicForm,
    h: BasicForm,
    omega: BasicForm,
) -> list[IdentityGap]:
    """
    Integrate both sides of the basic integration identities on `rule`.

    The weighted identities use dmu = e^{-f} dV, V = grad f + tau_B and
    beta = d_B f + kappa_B.
    """
    geo = calculus.geometry
    nodes = rule.nodes
    density = geo.metric.density(nodes)

    def integral(values: Array) -> float:
        return float(rule.integrate_values(values * density))

    weight = np.exp(-f(nodes))
    df = calculus.d_B(f)
    beta = df + calculus.kappa_form()
    v = calculus.sharp(df, nodes) + geo.tau(nodes)
    lap_f = calculus.basic_laplacian(f)(nodes)
    grad_f_sq = calculus.norm_squared(df)(nodes)
    scalar = geo.scalar_field(nodes)
    eta_v = eta(nodes)

    gaps = [
        IdentityGap(
            "divergence",
            integral(calculus.delta_T(eta)(nodes)),
            -integral(np.einsum("k...,k...->...", eta_v, geo.tau(nodes))),
        ),
        IdentityGap(
            "adjoint_functions",
            integral(calculus.inner(df, eta)(nodes)),
            integral(f(nodes) * calculus.delta_B(eta)(nodes)),
        ),
        IdentityGap(
            "adjoint_two_forms",
            integral(calculus.inner(calculus.d_B(eta), omega)(nodes)),
            integral(calculus.inner(eta, calculus.delta_B(omega))(nodes)),
        ),
        IdentityGap(
            "weighted_divergence",
            integral(calculus.delta_T(eta)(nodes) * weight),
            -integral(np.einsum("k...,k...->...", eta_v, v) * weight),
        ),
        IdentityGap(
            "double_divergence",
            integral(calculus.delta_T(calculus.delta_T(h))(nodes) * weight),
            integral(
                (
                    -calculus.inner(h, calculus.covariant_derivative(beta))(nodes)
                    + np.einsum("i...,ij...,j...->...", v, h(nodes), v)
                )
                * weight
            ),
        ),
        IdentityGap(
            "trace_laplacian",
            integral(calculus.basic_laplacian(calculus.trace(h))(nodes) * weight),
            -integral(calculus.trace(h)(nodes) * (lap_f + grad_f_sq) * weight),
        ),
        IdentityGap(
            "gradient_pairing",
            integral(calculus.inner(df, calculus.d_B(fdot))(nodes) * weight),
            integral(fdot(nodes) * (lap_f + grad_f_sq) * weight),
        ),
        IdentityGap(
            "energy_rewrite",
            integral((scalar + np.einsum("i...,ij...,j...->...", v, geo.G(nodes), v)) * weight),
            integral((scalar - calculus.delta_T(beta)(nodes)) * weight),
        ),
        IdentityGap(
            "exponential_laplacian",
            calculus.exponential_laplacian_residual(f, nodes),
            0.0,
            pointwise=True,
        ),
    ]
    for g in gaps:
        logger.debug("identity %s: gap %.3e", g.name, g.gap)
    return gaps

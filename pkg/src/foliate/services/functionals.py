"""
F^Q, lambda^Q, W^Q and mu^Q.

Direct evaluation integrates the defining integrands by quadrature. The
infima work with u = e^{-f/2} in a Galerkin basis over the scenario's basic
coordinates:

    F(u) = int (S + |kappa|^2 - 2 delta_B kappa) u^2 + 4 |grad u|^2 dV
    W(u) = Z int sigma (...) - u^2 log u^2 - q u^2 dV,   Z = (4 pi sigma)^{-q/2}

under int u^2 dV = 1 (lambda) or Z int u^2 dV = 1 (mu). lambda^Q is the
smallest eigenvalue of the assembled pencil (K, M); mu^Q is minimized by a
preconditioned projected gradient with Armijo backtracking.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from foliate.exceptions import domain_error, model_error, numeric_error, usage_error
from foliate.geometry.chart import Array, Chart, QuadratureRule, ScalarField, linear_combination
from foliate.geometry.operators import BasicForm, function_form
from foliate.services.context import GeometryContext

logger = logging.getLogger("foliate.functionals")

EIGEN_MAX_ITERATIONS = 500
ARMIJO = 1e-4
MIN_STEP = 1e-12
MU_SEEDS = (1, 2, 3)
RICHARDSON_STEPS = (1e-3, 1e-4)


@dataclass(frozen=True)
class FunctionalReport:
    name: str
    value: float
    converged: bool = True
    iterations: int = 0
    constraint_residual: float = 0.0
    sigma: float | None = None
    minimizer_samples: tuple[float, ...] = ()
    diagnostics: dict[str, float] = field(default_factory=dict)


# -- Galerkin basis -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GalerkinBasis:
    """
    Tensor basis over the basic axes.

    Periodic and twisted-periodic axes take 1, cos 2 pi k s, sin 2 pi k s;
    open axes take Legendre polynomials (in cos(pi s) on polar axes, so
    that basis functions are smooth at the poles). Index 0 is the constant.
    """

    chart: Chart
    axes: tuple[int, ...]
    modes: int

    def _axis(self, axis: int, s: Array) -> tuple[Array, Array]:
        lo, hi = self.chart.domain[axis]
        length = hi - lo
        u = (s - lo) / length
        if self.chart.periodicity[axis] != "open":
            vals, ders = [np.ones_like(u)], [np.zeros_like(u)]
            for k in range(1, self.modes + 1):
                w = 2 * np.pi * k
                vals += [np.cos(w * u), np.sin(w * u)]
                ders += [-w / length * np.sin(w * u), w / length * np.cos(w * u)]
            return np.stack(vals), np.stack(ders)
        size = 2 * self.modes + 1
        eye = np.eye(size)
        if self.chart.coord_names[axis] in self.chart.polar:
            x = np.cos(np.pi * u)
            dx = -np.pi / length * np.sin(np.pi * u)
        else:
            x = 2.0 * u - 1.0
            dx = np.full_like(u, 2.0 / length)
        vals = np.polynomial.legendre.legval(x, eye)
        ders = np.polynomial.legendre.legval(x, np.polynomial.legendre.legder(eye)) * dx
        return vals, ders

    @property
    def size(self) -> int:
        return (2 * self.modes + 1) ** len(self.axes)

    def evaluate(self, points: Array) -> tuple[Array, Array]:
        """Phi (m, *S) and its gradient along the basic axes (m, len(axes), *S)."""
        per_axis = [self._axis(a, points[a]) for a in self.axes]
        phi = per_axis[0][0]
        dphi = [per_axis[0][1]]
        for vals, ders in per_axis[1:]:
            dphi = [
                np.einsum("i...,j...->ij...", d, vals).reshape((-1,) + vals.shape[1:])
                for d in dphi
            ]
            dphi.append(np.einsum("i...,j...->ij...", phi, ders).reshape((-1,) + vals.shape[1:]))
            phi = np.einsum("i...,j...->ij...", phi, vals).reshape((-1,) + vals.shape[1:])
        return phi, np.stack(dphi, axis=1)

    def function(self, coeffs: Array) -> ScalarField:
        c = np.asarray(coeffs, dtype=float)

        def fn(points: Array) -> Array:
            return np.einsum("m,m...->...", c, self.evaluate(points)[0])

        def grad(points: Array) -> Array:
            g = np.zeros(points.shape)
            d = np.einsum("m,ma...->a...", c, self.evaluate(points)[1])
            for k, a in enumerate(self.axes):
                g[a] = d[k]
            return g

        return ScalarField(chart=self.chart, fn=fn, exact_grad=grad)


def log_potential(u: ScalarField) -> ScalarField:
    """f = -2 log u."""
    return ScalarField(
        chart=u.chart,
        fn=lambda p: -2.0 * np.log(u(p)),
        exact_grad=lambda p: -2.0 * u.gradient(p) / u(p),
    )


@dataclass(eq=False)
class GalerkinSystem:
    """Basis values and weights on the basic grid, plus assembled matrices."""

    basis: GalerkinBasis
    phi: Array
    dphi: Array
    weights: Array
    gradient_weights: Array
    potential: Array
    q: int

    @cached_property
    def mass(self) -> Array:
        return (self.phi * self.weights) @ self.phi.T

    @cached_property
    def potential_matrix(self) -> Array:
        return (self.phi * (self.weights * self.potential)) @ self.phi.T

    @cached_property
    def gradient_matrix(self) -> Array:
        nb = self.dphi.shape[1]
        out = np.zeros((self.basis.size, self.basis.size))
        for a in range(nb):
            for b in range(nb):
                out += (self.dphi[:, a] * self.gradient_weights[a, b]) @ self.dphi[:, b].T
        return out

    @cached_property
    def stiffness(self) -> Array:
        return self.potential_matrix + 4.0 * self.gradient_matrix

    def values(self, coeffs: Array) -> Array:
        return coeffs @ self.phi

    def constant_coefficients(self) -> Array:
        c = np.zeros(self.basis.size)
        c[0] = 1.0
        return c


def potential_values(context: GeometryContext, points: Array) -> Array:
    """S + |kappa|^2 - 2 delta_B kappa."""
    geo = context.geometry
    calc = context.calculus
    kappa = geo.kappa(points)
    kappa_sq = np.einsum("i...,ij...,j...->...", kappa, geo.Ginv(points), kappa)
    delta_b = calc.delta_B(calc.kappa_form())(points)
    return geo.scalar(points) + kappa_sq - 2.0 * delta_b


def basic_grid(context: GeometryContext, rule: QuadratureRule, fraction: float) -> Array:
    chart = context.scenario.chart
    basic = sorted(context.scenario.basic_indices)
    grids = [rule.axis_rule(a)[0] for a in basic]
    mesh = np.meshgrid(*grids, indexing="ij")
    points = np.empty((chart.dim,) + mesh[0].shape)
    for i in range(chart.dim):
        lo, hi = chart.domain[i]
        points[i] = lo + fraction * (hi - lo)
    for a, m in zip(basic, mesh, strict=True):
        points[a] = m
    return points


def assemble(context: GeometryContext, rule: QuadratureRule | None = None) -> GalerkinSystem:
    """Weights summed over non-basic axes; the potential read on the basic grid."""
    started = time.perf_counter()
    scenario = context.scenario
    r = context.rule if rule is None else rule
    chart = scenario.chart
    basic = sorted(scenario.basic_indices)
    nonbasic = tuple(i for i in range(chart.dim) if i not in basic)
    nodes = r.nodes
    w = r.weights * context.metric.density(nodes)
    weights = w.sum(axis=nonbasic).ravel()
    e = context.metric.frame.matrix(nodes)[scenario.p :][:, basic]
    a = np.einsum("am...,ab...,bn...->mn...", e, context.geometry.Ginv(nodes), e)
    gradient_weights = (a * w).sum(axis=tuple(2 + i for i in nonbasic))
    gradient_weights = gradient_weights.reshape(len(basic), len(basic), -1)

    grid = basic_grid(context, r, 0.5)
    potential = potential_values(context, grid)
    if nonbasic:
        other = potential_values(context, basic_grid(context, r, 0.25))
        drift = float(np.max(np.abs(other - potential)))
        if drift > 1e-8 * (1.0 + float(np.max(np.abs(potential)))):
            raise model_error(
                f"Potential varies along non-basic axes (drift {drift:.3e}); "
                "basic functions do not reduce to the declared basic coordinates"
            )
    basis = GalerkinBasis(chart, tuple(basic), context.resolutions.basis_modes)
    phi, dphi = basis.evaluate(grid)
    system = GalerkinSystem(
        basis=basis,
        phi=phi.reshape(basis.size, -1),
        dphi=dphi.reshape(basis.size, len(basic), -1),
        weights=weights,
        gradient_weights=gradient_weights,
        potential=potential.ravel(),
        q=scenario.q,
    )
    logger.debug(
        "galerkin system: %d modes on %d nodes in %.1f ms",
        basis.size,
        weights.size,
        1000 * (time.perf_counter() - started),
    )
    return system


def _samples(values: Array, count: int = 16) -> tuple[float, ...]:
    idx = np.linspace(0, values.size - 1, min(count, values.size)).astype(int)
    return tuple(float(v) for v in values.ravel()[idx])


# -- direct evaluation ----------------------------------------------------


def _drift_terms(context: GeometryContext, f: ScalarField, nodes: Array) -> tuple[Array, Array]:
    """|grad f + tau|^2 and |grad f|^2 at `nodes`."""
    geo = context.geometry
    df = context.calculus.transverse_derivative(f, nodes)
    ginv = geo.Ginv(nodes)
    grad_f = np.einsum("ij...,j...->i...", ginv, df)
    v = grad_f + geo.tau(nodes)
    g = geo.G(nodes)
    return (
        np.einsum("i...,ij...,j...->...", v, g, v),
        np.einsum("i...,i...->...", grad_f, df),
    )


def F_Q(context: GeometryContext, f: ScalarField, rule: QuadratureRule | None = None) -> float:
    """int (S + |grad f + tau_B|^2) e^{-f} dV."""
    r = context.rule if rule is None else rule
    nodes = r.nodes
    drift, _ = _drift_terms(context, f, nodes)
    return context.integrate((context.geometry.scalar(nodes) + drift) * np.exp(-f(nodes)), r)


def classical_F(
    context: GeometryContext, f: ScalarField, rule: QuadratureRule | None = None
) -> float:
    r = context.rule if rule is None else rule
    nodes = r.nodes
    _, grad_sq = _drift_terms(context, f, nodes)
    return context.integrate((context.geometry.scalar(nodes) + grad_sq) * np.exp(-f(nodes)), r)


def _check_sigma(sigma: float) -> None:
    if not (sigma > 0 and math.isfinite(sigma)):
        raise domain_error(f"sigma must be positive, got {sigma}")


def W_Q(
    context: GeometryContext, f: ScalarField, sigma: float, rule: QuadratureRule | None = None
) -> float:
    """int [sigma (S + |grad f + tau_B|^2) + f - q] (4 pi sigma)^{-q/2} e^{-f} dV."""
    _check_sigma(sigma)
    r = context.rule if rule is None else rule
    nodes = r.nodes
    q = context.q
    drift, _ = _drift_terms(context, f, nodes)
    fv = f(nodes)
    integrand = sigma * (context.geometry.scalar(nodes) + drift) + fv - q
    return context.integrate(integrand * (4 * np.pi * sigma) ** (-q / 2) * np.exp(-fv), r)


def classical_W(
    context: GeometryContext, f: ScalarField, sigma: float, rule: QuadratureRule | None = None
) -> float:
    _check_sigma(sigma)
    r = context.rule if rule is None else rule
    nodes = r.nodes
    q = context.q
    _, grad_sq = _drift_terms(context, f, nodes)
    fv = f(nodes)
    integrand = sigma * (context.geometry.scalar(nodes) + grad_sq) + fv - q
    return context.integrate(integrand * (4 * np.pi * sigma) ** (-q / 2) * np.exp(-fv), r)


def normalizing_constant(context: GeometryContext, sigma: float | None = None) -> float:
    """The constant f with int e^{-f} dV = 1, or (4 pi sigma)^{-q/2} int e^{-f} dV = 1."""
    volume = context.volume()
    if sigma is None:
        return math.log(volume)
    _check_sigma(sigma)
    return math.log(volume * (4 * math.pi * sigma) ** (-context.q / 2))


# -- lambda^Q -------------------------------------------------------------


def lambda_Q(
    context: GeometryContext,
    system: GalerkinSystem | None = None,
    tolerance: float = 1e-10,
    max_iterations: int = EIGEN_MAX_ITERATIONS,
) -> FunctionalReport:
    """Smallest eigenvalue of (K, M) by shifted inverse iteration."""
    started = time.perf_counter()
    sys_ = assemble(context) if system is None else system
    k, m = sys_.stiffness, sys_.mass
    # K - s M >= Phi diag(w (V - s)) Phi^T > 0, so the shift is a strict lower bound.
    shift = float(np.min(sys_.potential)) - 1.0
    try:
        factor = scipy.linalg.cho_factor(k - shift * m)
    except np.linalg.LinAlgError:
        raise numeric_error("Shifted eigen pencil is not positive definite") from None
    x = sys_.constant_coefficients()
    x = x / math.sqrt(x @ m @ x)
    lam = float(x @ k @ x)
    residual = float(np.linalg.norm(k @ x - lam * m @ x))
    iterations = 0
    while residual >= tolerance and iterations < max_iterations:
        y = scipy.linalg.cho_solve(factor, m @ x)
        x = y / math.sqrt(y @ m @ y)
        lam = float(x @ k @ x)
        residual = float(np.linalg.norm(k @ x - lam * m @ x))
        iterations += 1
    converged = residual < tolerance
    try:
        reference = float(scipy.linalg.eigh(k, m, eigvals_only=True, subset_by_index=[0, 0])[0])
    except np.linalg.LinAlgError as exc:
        raise numeric_error(f"Dense eigen check failed: {exc}") from None
    if abs(reference - lam) > 1e-8 * (1.0 + abs(lam)):
        logger.warning("inverse iteration %.12g disagrees with dense solver %.12g", lam, reference)
    u = sys_.values(x)
    if np.sum(u * sys_.weights) < 0:
        x, u = -x, -u
    diagnostics = {"shift": shift, "dense_check": reference, "rayleigh_residual": residual}
    samples: tuple[float, ...] = ()
    if np.all(u > 0):
        samples = _samples(-2.0 * np.log(u))
    else:
        logger.warning("lambda_Q minimizer changes sign on the basic grid; no potential f")
    logger.info(
        "lambda_Q=%.12g after %d iterations (%.1f ms)",
        lam,
        iterations,
        1000 * (time.perf_counter() - started),
    )
    return FunctionalReport(
        name="lambda_Q",
        value=lam,
        converged=converged,
        iterations=iterations,
        constraint_residual=abs(float(x @ m @ x) - 1.0),
        minimizer_samples=samples,
        diagnostics=diagnostics,
    )


def lambda_minimizer(context: GeometryContext, system: GalerkinSystem | None = None) -> ScalarField:
    """f = -2 log u for the lambda^Q ground state."""
    sys_ = assemble(context) if system is None else system
    try:
        _, vecs = scipy.linalg.eigh(sys_.stiffness, sys_.mass, subset_by_index=[0, 0])
    except np.linalg.LinAlgError as exc:
        raise numeric_error(f"Ground state solve failed: {exc}") from None
    x = vecs[:, 0]
    if np.sum(sys_.values(x) * sys_.weights) < 0:
        x = -x
    x = x / math.sqrt(x @ sys_.mass @ x)
    if np.any(sys_.values(x) <= 0):
        raise numeric_error("Ground state is not positive on the basic grid")
    return log_potential(sys_.basis.function(x))


def normalized_lambda_Q(
    context: GeometryContext, report: FunctionalReport | None = None
) -> FunctionalReport:
    """V(g)^{2/q} lambda^Q."""
    base = lambda_Q(context) if report is None else report
    if not base.converged:
        return FunctionalReport(name="normalized_lambda_Q", value=math.nan, converged=False)
    volume = context.volume()
    return FunctionalReport(
        name="normalized_lambda_Q",
        value=volume ** (2.0 / context.q) * base.value,
        iterations=base.iterations,
        constraint_residual=base.constraint_residual,
        diagnostics={"volume": volume},
    )


def euler_lagrange_variance(
    context: GeometryContext, f: ScalarField, rule: QuadratureRule | None = None
) -> float:
    """dV-variance of S - |grad f|^2 + |kappa|^2 - 2 Delta_B f - 2 delta_B kappa."""
    r = context.suite_rule if rule is None else rule
    nodes = r.nodes
    calc = context.calculus
    ff = function_form(f)
    _, grad_sq = _drift_terms(context, f, nodes)
    e = potential_values(context, nodes) - grad_sq - 2.0 * calc.basic_laplacian(ff)(nodes)
    volume = context.volume(r)
    mean = context.integrate(e, r) / volume
    return context.integrate((e - mean) ** 2, r) / volume


# -- mu^Q -----------------------------------------------------------------


@dataclass
class _Descent:
    system: GalerkinSystem
    sigma: float

    def __post_init__(self) -> None:
        s = self.system
        self.z = (4 * math.pi * self.sigma) ** (-s.q / 2)
        precond = self.z * (8.0 * self.sigma * s.gradient_matrix + 2.0 * s.mass)
        try:
            self.factor = scipy.linalg.cho_factor(precond)
        except np.linalg.LinAlgError:
            raise numeric_error("W_Q preconditioner is not positive definite") from None
        self.precond = precond

    def normalize(self, c: Array) -> Array:
        return c / math.sqrt(self.z * (c @ self.system.mass @ c))

    def energy(self, c: Array) -> float:
        s = self.system
        u = s.values(c)
        if np.any(u <= 0):
            return math.inf
        u2 = u * u
        entropy = float(np.sum(s.weights * u2 * np.log(u2)))
        return self.z * (
            self.sigma * float(c @ s.stiffness @ c) - entropy - s.q * float(c @ s.mass @ c)
        )

    def gradient(self, c: Array) -> Array:
        s = self.system
        u = s.values(c)
        nonlinear = s.phi @ (s.weights * (2.0 * u * np.log(u * u) + 2.0 * u))
        return self.z * (
            2.0 * self.sigma * (s.stiffness @ c) - nonlinear - 2.0 * s.q * (s.mass @ c)
        )

    def direction(self, c: Array) -> Array:
        g = self.gradient(c)
        n = 2.0 * self.z * (self.system.mass @ c)
        pg = scipy.linalg.cho_solve(self.factor, g)
        pn = scipy.linalg.cho_solve(self.factor, n)
        return -(pg - (n @ pg) / (n @ pn) * pn)

    def run(
        self, c0: Array, tolerance: float, max_iterations: int
    ) -> tuple[Array, float, int, bool]:
        c = self.normalize(c0)
        value = self.energy(c)
        for it in range(max_iterations):
            d = self.direction(c)
            decrease = float(d @ self.precond @ d)
            if math.sqrt(max(decrease, 0.0)) < tolerance:
                return c, value, it, True
            step = 1.0
            while step >= MIN_STEP:
                trial = self.normalize(c + step * d)
                trial_value = self.energy(trial)
                if trial_value <= value - ARMIJO * step * decrease:
                    break
                step *= 0.5
            else:
                return c, value, it, False
            c, value = trial, trial_value
        return c, value, max_iterations, False


def _random_start(system: GalerkinSystem, rng: np.random.Generator) -> Array:
    base = system.constant_coefficients()
    noise = 0.1 * rng.normal(size=system.basis.size)
    noise[0] = 0.0
    for _ in range(30):
        c = base + noise
        if np.all(system.values(c) > 0):
            return c
        noise *= 0.5
    return base


def mu_Q(
    context: GeometryContext,
    sigma: float,
    system: GalerkinSystem | None = None,
    tolerance: float = 1e-8,
    max_iterations: int = 5000,
    seeds: Sequence[int] = MU_SEEDS,
) -> FunctionalReport:
    """Multi-start minimization of W^Q over basic u; the constant start is always tried."""
    _check_sigma(sigma)
    started = time.perf_counter()
    sys_ = assemble(context) if system is None else system
    descent = _Descent(sys_, sigma)
    starts = [("constant", sys_.constant_coefficients())]
    starts += [(f"seed{s}", _random_start(sys_, np.random.default_rng(s))) for s in seeds]
    results = []
    for label, c0 in starts:
        c, value, iterations, converged = descent.run(c0, tolerance, max_iterations)
        results.append((label, c, value, iterations, converged))
        logger.debug(
            "mu_Q sigma=%g start %s: %.12g after %d iterations (converged=%s)",
            sigma,
            label,
            value,
            iterations,
            converged,
        )
    pool = [r for r in results if r[4]] or results
    label, c, value, iterations, _ = min(pool, key=lambda r: r[2])
    converged = any(r[4] for r in results)
    u = sys_.values(c)
    logger.info(
        "mu_Q(sigma=%g)=%.12g from %s (%.1f ms)",
        sigma,
        value,
        label,
        1000 * (time.perf_counter() - started),
    )
    return FunctionalReport(
        name="mu_Q",
        value=value,
        converged=converged,
        iterations=sum(r[3] for r in results),
        constraint_residual=abs(descent.z * float(c @ sys_.mass @ c) - 1.0),
        sigma=sigma,
        minimizer_samples=_samples(-2.0 * np.log(u)),
        diagnostics={f"start_{r[0]}": r[2] for r in results},
    )


# -- first variations ------------------------------------------------------


@dataclass(frozen=True)
class VariationGap:
    name: str
    finite_difference: float
    formula: float

    @property
    def gap(self) -> float:
        return abs(self.finite_difference - self.formula)


def richardson(fn, steps: Sequence[float] = RICHARDSON_STEPS):
    """Central differences at two steps, extrapolated to remove the O(h^2) term."""
    h1, h2 = steps
    d1 = (fn(h1) - fn(-h1)) / (2 * h1)
    d2 = (fn(h2) - fn(-h2)) / (2 * h2)
    return (h1 * h1 * d2 - h2 * h2 * d1) / (h1 * h1 - h2 * h2)


def first_variation_check(
    context: GeometryContext,
    h: BasicForm,
    fdot: ScalarField,
    sigma_dot: float = 0.0,
    f: ScalarField | None = None,
    sigma: float = 1.0,
    rule: QuadratureRule | None = None,
) -> list[VariationGap]:
    """
    Compare finite-difference derivatives along (g_Q + e h, f + e fdot,
    sigma + e sigma_dot) with the first-variation formulas for S^Q, F^Q,
    W^Q and |d f + kappa_B|^2.
    """
    if h.degree != 2 or h.kind != "symmetric":
        raise usage_error("The metric perturbation must be a symmetric 2-tensor")
    _check_sigma(sigma)
    r = context.suite_rule if rule is None else rule
    nodes = r.nodes
    chart = context.scenario.chart
    f0 = f if f is not None else ScalarField(chart=chart, fn=lambda p: 0.0, constant=True)
    g0 = context.transverse_field()

    def varied(eps: float) -> tuple[GeometryContext, ScalarField]:
        ctx = context.with_transverse(linear_combination([1.0, eps], [g0, h.field]))
        return ctx, linear_combination([1.0, eps], [f0, fdot])

    def scalar_at(eps: float) -> Array:
        return varied(eps)[0].geometry.scalar(nodes)

    def f_at(eps: float) -> float:
        ctx, fe = varied(eps)
        return F_Q(ctx, fe, r)

    def w_at(eps: float) -> float:
        ctx, fe = varied(eps)
        return W_Q(ctx, fe, sigma + eps * sigma_dot, r)

    def energy_at(eps: float) -> Array:
        ctx, fe = varied(eps)
        geo = ctx.geometry
        beta = ctx.calculus.transverse_derivative(fe, nodes) + geo.kappa(nodes)
        return np.einsum("i...,ij...,j...->...", beta, geo.Ginv(nodes), beta)

    geo = context.geometry
    calc = context.calculus
    q = context.q
    ff = function_form(f0)
    fd = function_form(fdot)
    df = calc.d_B(ff)
    beta = df + calc.kappa_form()
    ric = calc.ricci_form()
    nabla_beta = calc.covariant_derivative(beta)
    tr_h = calc.trace(h)

    s_dot = (
        -calc.inner(h, ric)(nodes)
        + calc.delta_T(calc.delta_T(h))(nodes)
        + calc.delta_T(calc.d_B(tr_h))(nodes)
    )
    ginv = geo.Ginv(nodes)
    v = np.einsum("ij...,j...->i...", ginv, beta(nodes))
    h_vv = np.einsum("i...,ij...,j...->...", v, h(nodes), v)
    pair = calc.inner(h, ric)(nodes) + calc.inner(h, nabla_beta)(nodes)
    scalar = geo.scalar(nodes)
    _, grad_sq = _drift_terms(context, f0, nodes)
    e = potential_values(context, nodes) - grad_sq - 2.0 * calc.basic_laplacian(ff)(nodes)
    weight = np.exp(-f0(nodes))
    half_trace = 0.5 * tr_h(nodes)
    f_formula = context.integrate((-pair + e * (half_trace - fdot(nodes))) * weight, r)

    z = (4 * math.pi * sigma) ** (-q / 2)
    trace_nabla_beta = np.einsum("ij...,ij...->...", ginv, nabla_beta(nodes))
    metric_part = (
        -sigma * pair
        + half_trace
        + sigma_dot * (scalar + trace_nabla_beta)
        - sigma_dot * q / (2 * sigma)
    )
    psi = half_trace - fdot(nodes) - 0.5 * q * sigma_dot / sigma
    w_formula = context.integrate(
        (metric_part + (sigma * e + f0(nodes) - q - 1.0) * psi) * z * weight, r
    )
    energy_formula = 2.0 * calc.inner(calc.d_B(fd), beta)(nodes) - h_vv

    s_fd = richardson(scalar_at)
    energy_fd = richardson(energy_at)
    gaps = [
        VariationGap(
            "scalar_curvature",
            float(np.max(np.abs(s_fd - s_dot))),
            0.0,
        ),
        VariationGap("F_Q", float(richardson(f_at)), f_formula),
        VariationGap("W_Q", float(richardson(w_at)), w_formula),
        VariationGap("drift_energy", float(np.max(np.abs(energy_fd - energy_formula))), 0.0),
    ]
    for g in gaps:
        logger.debug("first variation %s: gap %.3e", g.name, g.gap)
    return gaps

"""
Transverse geometry of a Riemannian foliation in an adapted frame.

Transverse indices
- Arrays returned here use transverse-relative indices: component a refers
  to frame field e_{p+a}. Connection arrays keep the full first index
  (any frame direction can be differentiated along).
- The transverse connection is nabla_{e_i} e_j = pi[e_i, e_j] for leaf i
  and pi(D_{e_i} e_j) for transverse i.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from foliate.exceptions import model_error, usage_error
from foliate.geometry.chart import (
    Array,
    QuadratureRule,
    ScalarField,
    derived_field,
)
from foliate.geometry.frame import (
    ConnectionCoefficients,
    FramePresentation,
    MetricField,
    VectorField,
    batched_inverse,
    curvature_tensor,
    levi_civita,
)

logger = logging.getLogger("foliate.transverse")

BASIC_TOLERANCE = 1e-8
CLOSED_TOLERANCE = 1e-6
LOOP_SAMPLES = 256

Tautness = Literal["taut", "non-taut", "inconclusive"]


def default_nodes(frame: FramePresentation, n: int = 8) -> Array:
    return QuadratureRule.uniform(frame.chart, n).nodes


class TransverseGeometry:
    """
    Transverse connection, curvature and mean curvature of one metric.

    Point evaluations are pure; the derived fields (`ricci_field`, ...) are
    built once per instance and differentiate with the 5-point stencil.
    """

    def __init__(self, metric: MetricField, flip_connection_sign: bool = False) -> None:
        self.metric = metric
        # Fault injection for the verify mutation run: negates the Q x Q block.
        self.flip_connection_sign = flip_connection_sign
        self.frame = metric.frame
        self.chart = metric.chart
        self.ambient = levi_civita(metric)
        self.connection = ConnectionCoefficients(metric, "transverse", self._transverse)

    @property
    def p(self) -> int:
        return self.frame.p

    @property
    def q(self) -> int:
        return self.frame.q

    def _transverse(self, points: Array) -> Array:
        full = self.ambient(points)
        c = self.frame.structure(points)
        p = self.p
        out = np.zeros_like(full)
        out[:p, p:, p:] = c[:p, p:, p:]
        out[p:, p:, p:] = -full[p:, p:, p:] if self.flip_connection_sign else full[p:, p:, p:]
        return out

    def gamma(self, points: Array) -> Array:
        """Transverse block G[i, a, b] (i over all frame indices)."""
        p = self.p
        return self.connection(points)[:, p:, p:]

    def G(self, points: Array) -> Array:
        return self.metric.transverse_matrix(points)

    def Ginv(self, points: Array) -> Array:
        return batched_inverse(self.G(points))

    def tau(self, points: Array) -> Array:
        """Mean curvature vector: sum over leaf a of the transverse part of D_{e_a} e_a."""
        full = self.ambient(points)
        p = self.p
        return sum(full[a, a, p:] for a in range(p))

    def kappa(self, points: Array) -> Array:
        return np.einsum("ab...,b...->a...", self.G(points), self.tau(points))

    def riemann(self, points: Array) -> Array:
        p = self.p
        return curvature_tensor(self.connection, points)[p:, p:, p:, p:]

    def curvature(self, points: Array) -> TransverseCurvature:
        pts = np.asarray(points, dtype=float)
        r = self.riemann(pts)
        g = self.G(pts)
        ginv = batched_inverse(g)
        ricci = np.einsum("ad...,abdn...,nc...->bc...", ginv, r, g)
        scalar = np.einsum("bc...,bc...->...", ginv, ricci)
        return TransverseCurvature(points=pts, riemann=r, ricci=ricci, scalar=scalar, metric=g)

    def ricci(self, points: Array) -> Array:
        return self.curvature(points).ricci

    def scalar(self, points: Array) -> Array:
        return self.curvature(points).scalar

    @cached_property
    def tau_field(self) -> ScalarField:
        return derived_field(self.chart, self.tau, (self.q,))

    @cached_property
    def kappa_field(self) -> ScalarField:
        return derived_field(self.chart, self.kappa, (self.q,))

    @cached_property
    def ricci_field(self) -> ScalarField:
        return derived_field(self.chart, self.ricci, (self.q, self.q))

    @cached_property
    def scalar_field(self) -> ScalarField:
        return derived_field(self.chart, self.scalar)

    @cached_property
    def riemann_field(self) -> ScalarField:
        return derived_field(self.chart, self.riemann, (self.q,) * 4)

    def leaf_derivative(self, f: ScalarField, points: Array) -> float:
        """max |e_alpha(component)| over leaf frame fields: zero for basic objects."""
        d = f.frame_derivative(points, self.frame.matrix(points))
        axis = len(f.shape)
        leaf = np.take(d, list(self.frame.leaf), axis=axis)
        return float(np.max(np.abs(leaf), initial=0.0))


@dataclass(frozen=True)
class TransverseCurvature:
    """Pointwise R^Q, Ric^Q and S^Q; indices are transverse-relative."""

    points: Array
    riemann: Array
    ricci: Array
    scalar: Array
    metric: Array

    def curvature_form(self, a: int, b: int, c: int, d: int) -> Array:
        """g_Q(R(e_a, e_b) e_c, e_d)."""
        return np.einsum("m...,m...->...", self.riemann[a, b, c], self.metric[:, d])

    def sectional(self, a: int, b: int) -> Array:
        g = self.metric
        area = g[a, a] * g[b, b] - g[a, b] ** 2
        return self.curvature_form(a, b, a, b) / area

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.ricci - np.swapaxes(self.ricci, 0, 1))))

    def trace_residual(self) -> float:
        ginv = batched_inverse(self.metric)
        return float(np.max(np.abs(self.scalar - np.einsum("bc...,bc...->...", ginv, self.ricci))))


@dataclass(frozen=True)
class MeanCurvatureData:
    points: Array
    tau: Array
    kappa: Array
    basic: bool
    leaf_derivative: float
    closedness: float
    loop_integrals: tuple[tuple[str, float], ...] = field(default_factory=tuple)


def project_Q(v: VectorField, frame: FramePresentation, point: Array) -> Array:
    """Transverse frame components of v (leaf components dropped)."""
    if v.chart is not frame.chart and v.chart != frame.chart:
        raise usage_error("Vector field and frame live on different charts")
    pts = np.asarray(point, dtype=float)
    comps = frame.to_frame(v(pts), pts)
    return comps[frame.p :]


def transverse_components(v: VectorField, frame: FramePresentation) -> ScalarField:
    return derived_field(frame.chart, lambda pts: project_Q(v, frame, pts), (frame.q,))


def bundle_like_residual(metric: MetricField, points: Array) -> float:
    """max over leaf U and transverse Y, Z of |(L_U g_Q)(Y, Z)|."""
    frame = metric.frame
    p = frame.p
    g = metric.transverse_matrix(points)
    dg = metric.transverse_gradient(points)
    e = frame.matrix(points)
    c = frame.structure(points)[:p, p:, p:]
    ug = np.einsum("um...,jkm...->ujk...", e[:p], dg)
    lie = ug - np.einsum("ujm...,mk...->ujk...", c, g) - np.einsum("jm...,ukm...->ujk...", g, c)
    return float(np.max(np.abs(lie)))


def transverse_connection(
    metric: MetricField,
    frame: FramePresentation | None = None,
    points: Array | None = None,
    tolerance: float = BASIC_TOLERANCE,
) -> ConnectionCoefficients:
    if frame is not None and frame is not metric.frame:
        raise usage_error("Metric is presented in a different frame")
    pts = default_nodes(metric.frame) if points is None else points
    residual = bundle_like_residual(metric, pts)
    if residual > tolerance:
        raise model_error(
            f"Metric is not bundle-like: residual {residual:.3e} exceeds {tolerance:.1e}"
        )
    return TransverseGeometry(metric).connection


def transverse_curvature(
    metric: MetricField, frame: FramePresentation | None = None, points: Array | None = None
) -> TransverseCurvature:
    if frame is not None and frame is not metric.frame:
        raise usage_error("Metric is presented in a different frame")
    pts = default_nodes(metric.frame) if points is None else points
    return TransverseGeometry(metric).curvature(pts)


def exterior_derivative_one_form(
    geometry: TransverseGeometry, form: ScalarField, points: Array
) -> Array:
    """w[a, b] = e_a(eta_b) - e_b(eta_a) - eta([e_a, e_b])."""
    p = geometry.p
    e = geometry.frame.matrix(points)
    c = geometry.frame.structure(points)[p:, p:, p:]
    de = form.frame_derivative(points, e)[:, p:]
    first = np.swapaxes(de, 0, 1)
    return first - de - np.einsum("abm...,m...->ab...", c, form(points))


def delta_two_tensor(geometry: TransverseGeometry, form: ScalarField, points: Array) -> Array:
    """(delta_T w)_b = -sum G^{ij} (nabla_{e_i} w)(e_j, e_b) for a basic 2-tensor w."""
    p = geometry.p
    e = geometry.frame.matrix(points)
    gam = geometry.gamma(points)[p:]
    ginv = geometry.Ginv(points)
    w = form(points)
    dw = form.frame_derivative(points, e)[:, :, p:]
    nabla = (
        np.einsum("jbi...->ijb...", dw)
        - np.einsum("ijk...,kb...->ijb...", gam, w)
        - np.einsum("ibk...,jk...->ijb...", gam, w)
    )
    return -np.einsum("ij...,ijb...->b...", ginv, nabla)


def mean_curvature(
    metric: MetricField,
    frame: FramePresentation | None = None,
    points: Array | None = None,
    require_basic: bool = True,
    tolerance: float = BASIC_TOLERANCE,
    geometry: TransverseGeometry | None = None,
) -> MeanCurvatureData:
    if frame is not None and frame is not metric.frame:
        raise usage_error("Metric is presented in a different frame")
    geo = TransverseGeometry(metric) if geometry is None else geometry
    pts = default_nodes(metric.frame) if points is None else np.asarray(points, dtype=float)
    tau = geo.tau(pts)
    kappa = geo.kappa(pts)
    leaf = geo.leaf_derivative(geo.kappa_field, pts)
    basic = leaf < tolerance
    if require_basic and not basic:
        raise model_error(
            f"Mean curvature form is not basic (leaf derivative {leaf:.3e}); "
            "projection onto basic forms is not supported"
        )
    closed = float(np.max(np.abs(exterior_derivative_one_form(geo, geo.kappa_field, pts))))
    loops = []
    chart = metric.chart
    for cycle in metric.frame.cycles:
        cpts = cycle.points(chart, LOOP_SAMPLES)
        axis = chart.axis(cycle.axis)
        einv = metric.frame.inverse(cpts)
        integrand = np.einsum("k...,k...->...", geo.kappa(cpts), einv[axis, geo.p :])
        loops.append((cycle.name, float(np.mean(integrand) * chart.lengths[axis])))
    logger.debug("mean curvature: leaf derivative %.3e, closedness %.3e", leaf, closed)
    return MeanCurvatureData(
        points=pts,
        tau=tau,
        kappa=kappa,
        basic=bool(basic),
        leaf_derivative=leaf,
        closedness=closed,
        loop_integrals=tuple(loops),
    )


def tautness_diagnostic(
    mc: MeanCurvatureData,
    tolerance: float = BASIC_TOLERANCE,
    closed_tolerance: float = CLOSED_TOLERANCE,
) -> Tautness:
    """Decide tautness from the periods of kappa_B over the declared cycles."""
    if mc.closedness > closed_tolerance:
        raise model_error(
            f"Mean curvature form is not closed (residual {mc.closedness:.3e})"
        )
    if not mc.loop_integrals:
        return "inconclusive"
    periods = [abs(v) for _, v in mc.loop_integrals]
    if all(v < tolerance for v in periods):
        return "taut"
    if any(v > 10.0 * tolerance for v in periods):
        return "non-taut"
    return "inconclusive"


def deturck_field(
    ref_conn: ConnectionCoefficients, cur_conn: ConnectionCoefficients
) -> ScalarField:
    """X = sum G^{ij}(ref - cur)_{ij} with G the current transverse metric."""
    if ref_conn.variant != "transverse" or cur_conn.variant != "transverse":
        raise usage_error("DeTurck field needs two transverse connections")
    if ref_conn.frame is not cur_conn.frame:
        raise usage_error("DeTurck field needs connections over the same frame")
    metric = cur_conn.metric
    p = metric.frame.p

    def fn(points: Array) -> Array:
        ginv = batched_inverse(metric.transverse_matrix(points))
        diff = ref_conn(points)[p:, p:, p:] - cur_conn(points)[p:, p:, p:]
        return np.einsum("ij...,ijk...->k...", ginv, diff)

    return derived_field(metric.chart, fn, (metric.frame.q,))


def deturck_vector_field(
    ref_conn: ConnectionCoefficients,
    cur_conn: ConnectionCoefficients,
    frame: FramePresentation | None = None,
    points: Array | None = None,
    tolerance: float = BASIC_TOLERANCE,
) -> Array:
    field_ = deturck_field(ref_conn, cur_conn)
    fr = cur_conn.frame if frame is None else frame
    if fr is not cur_conn.frame:
        raise usage_error("Frame does not match the connections")
    pts = default_nodes(fr) if points is None else np.asarray(points, dtype=float)
    d = field_.frame_derivative(pts, fr.matrix(pts))
    leaf = float(np.max(np.abs(d[:, : fr.p]), initial=0.0))
    if leaf > tolerance:
        raise model_error(f"DeTurck vector field is not basic (leaf derivative {leaf:.3e})")
    return field_(pts)


def contracted_bianchi_residual(geometry: TransverseGeometry, points: Array) -> float:
    """max |dS + 2 delta_T Ric| over transverse components."""
    p = geometry.p
    ds = geometry.scalar_field.frame_derivative(points, geometry.frame.matrix(points))[p:]
    div = delta_two_tensor(geometry, geometry.ricci_field, points)
    return float(np.max(np.abs(ds + 2.0 * div)))


def second_bianchi_residual(geometry: TransverseGeometry, points: Array) -> float:
    """Cyclic sum of (nabla_{e_a} R)(e_b, e_c) over transverse index triples."""
    p = geometry.p
    e = geometry.frame.matrix(points)
    gam = geometry.gamma(points)[p:]
    r = geometry.riemann_field(points)
    dr = geometry.riemann_field.frame_derivative(points, e)[:, :, :, :, p:]
    nabla = (
        np.einsum("bcdna...->abcdn...", dr)
        - np.einsum("abm...,mcdn...->abcdn...", gam, r)
        - np.einsum("acm...,bmdn...->abcdn...", gam, r)
        - np.einsum("adm...,bcmn...->abcdn...", gam, r)
        + np.einsum("amn...,bcdm...->abcdn...", gam, r)
    )
    cyc = (
        nabla
        + np.einsum("bcadn...->abcdn...", nabla)
        + np.einsum("cabdn...->abcdn...", nabla)
    )
    return float(np.max(np.abs(cyc)))

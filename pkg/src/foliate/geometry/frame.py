"""
Vector fields, adapted frames, bundle-like metrics and the ambient connection.

Index conventions
- Frame fields e_0..e_{n-1}, n = p + q; indices < p are leafwise.
- `FramePresentation.matrix` is E with E[i, mu] = e_i^mu (coefficient of e_i
  on the coordinate vector d/dx^mu).
- Connection arrays are G[i, j, k] = e_k-component of D_{e_i} e_j.
- Curvature arrays are R[a, b, c, m] = e_m-component of R(e_a, e_b) e_c with
  R(X, Y)Z = D_Y D_X Z - D_X D_Y Z + D_[X,Y] Z. This is the negative of the
  common convention; Ric(X, Y) = sum g(R(e_i, X)e_i, Y) is then positive on
  round spheres, and g(R(X, Y)X, Y) is the usual sectional curvature.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np

from foliate.exceptions import model_error, numeric_error, usage_error
from foliate.geometry.chart import (
    STENCIL_STEP,
    Array,
    Chart,
    ScalarField,
    derived_field,
    stack_fields,
    stencil_gradient,
)

Variant = Literal["ambient", "transverse"]

INDEPENDENCE_FLOOR = 1e-10
_CACHE_SIZE = 16


def as_matrices(a: Array, lead: int = 2) -> Array:
    """Move the first `lead` axes last, so numpy.linalg sees stacks of matrices."""
    return np.moveaxis(a, tuple(range(lead)), tuple(range(-lead, 0)))


def from_matrices(a: Array, lead: int = 2) -> Array:
    return np.moveaxis(a, tuple(range(-lead, 0)), tuple(range(lead)))


def batched_inverse(a: Array) -> Array:
    """Inverse of a (k, k, *S) stack of matrices, returned as (k, k, *S)."""
    try:
        return from_matrices(np.linalg.inv(as_matrices(a)))
    except np.linalg.LinAlgError:
        raise numeric_error("Singular matrix in a batched inverse") from None


def batched_det(a: Array) -> Array:
    return np.linalg.det(as_matrices(a))


def _describe_node(points: Array, flat_index: int) -> str:
    pts = np.asarray(points)
    coords = pts.reshape(pts.shape[0], -1)[:, flat_index]
    return "(" + ", ".join(f"{c:.6g}" for c in coords) + ")"


@dataclass(frozen=True, eq=False)
class VectorField:
    """A vector field given by its coordinate coefficients (a field of shape (dim,))."""

    chart: Chart
    coefficients: ScalarField

    def __post_init__(self) -> None:
        if self.coefficients.shape != (self.chart.dim,):
            raise usage_error(
                f"A vector field on a {self.chart.dim}-d chart needs {self.chart.dim} coefficients"
            )

    @classmethod
    def from_components(cls, chart: Chart, components: list[ScalarField]) -> VectorField:
        return cls(chart, stack_fields(components))

    def __call__(self, points: Array) -> Array:
        return self.coefficients(points)

    def apply(self, field: ScalarField, points: Array) -> Array:
        """X(h) at the given points."""
        return field.derivative(points, self(points))


def lie_bracket(x: VectorField, y: VectorField) -> VectorField:
    if x.chart is not y.chart and x.chart != y.chart:
        raise usage_error("Lie bracket of vector fields on different charts")

    def fn(points: Array) -> Array:
        xv = x(points)
        yv = y(points)
        dx = x.coefficients.gradient(points)
        dy = y.coefficients.gradient(points)
        return np.einsum("km...,m...->k...", dy, xv) - np.einsum("km...,m...->k...", dx, yv)

    return VectorField(x.chart, derived_field(x.chart, fn, (x.chart.dim,)))


@dataclass(frozen=True)
class Cycle:
    """A closed coordinate loop: `axis` traversed once from `base_point`."""

    name: str
    base_point: tuple[float, ...]
    axis: str

    def points(self, chart: Chart, count: int) -> Array:
        a = chart.axis(self.axis)
        lo, hi = chart.domain[a]
        pts = np.repeat(np.asarray(self.base_point, dtype=float)[:, None], count, axis=1)
        pts[a] = lo + (hi - lo) * np.arange(count) / count
        return pts


@dataclass(frozen=True, eq=False)
class FramePresentation:
    chart: Chart
    frame: tuple[VectorField, ...]
    p: int
    q: int
    orthonormal: bool = True
    cycles: tuple[Cycle, ...] = ()

    def __post_init__(self) -> None:
        if self.p < 1 or self.q < 1:
            raise model_error(
                f"Degenerate foliation (p={self.p}, q={self.q}); both dimensions must be positive"
            )
        if len(self.frame) != self.p + self.q or self.p + self.q != self.chart.dim:
            raise usage_error(
                f"Frame has {len(self.frame)} fields for p+q={self.p + self.q} "
                f"on a {self.chart.dim}-d chart"
            )
        for e in self.frame:
            if e.chart is not self.chart and e.chart != self.chart:
                raise usage_error("Frame fields must live on the frame's chart")

    @property
    def n(self) -> int:
        return self.p + self.q

    @property
    def leaf(self) -> range:
        return range(self.p)

    @property
    def transverse(self) -> range:
        return range(self.p, self.n)

    def matrix(self, points: Array) -> Array:
        return np.stack([e(points) for e in self.frame])

    def matrix_gradient(self, points: Array) -> Array:
        """dE[i, mu, nu] = d_nu e_i^mu."""
        return np.stack([e.coefficients.gradient(points) for e in self.frame])

    def inverse(self, points: Array) -> Array:
        """Einv[mu, k]: frame components of the coordinate vector d/dx^mu."""
        return batched_inverse(self.matrix(points))

    def to_frame(self, vectors: Array, points: Array) -> Array:
        """Frame components of coordinate vectors; `vectors` has shape (..., dim, *S)."""
        return _to_frame(vectors, self.inverse(points))

    def structure(self, points: Array) -> Array:
        """c[i, j, k]: e_k-component of [e_i, e_j]."""
        e = self.matrix(points)
        de = self.matrix_gradient(points)
        t = np.einsum("iv...,jmv...->ijm...", e, de)
        coord = t - np.swapaxes(t, 0, 1)
        return _to_frame(coord, batched_inverse(e))

    def check_independence(self, points: Array) -> None:
        det = batched_det(self.matrix(points))
        bad = np.abs(det) <= INDEPENDENCE_FLOOR
        if np.any(bad):
            node = _describe_node(points, int(np.flatnonzero(bad.ravel())[0]))
            raise numeric_error(f"Frame is singular at node {node}")

    def involutivity_residual(self, points: Array) -> float:
        c = self.structure(points)
        return float(np.max(np.abs(c[: self.p, : self.p, self.p :]), initial=0.0))


def _to_frame(coord: Array, einv: Array) -> Array:
    """Contract the coordinate axis of `coord` (shape (*A, dim, *S)) with Einv (dim, n, *S)."""
    n_pts = einv.ndim - 2
    lead = coord.ndim - n_pts - 1
    moved = np.moveaxis(coord, lead, 0)
    out = None
    for mu in range(einv.shape[0]):
        term = np.expand_dims(moved[mu], lead) * einv[mu]
        out = term if out is None else out + term
    return out


@dataclass(frozen=True, eq=False)
class MetricField:
    """
    Bundle-like metric g = g_F + g_Q in an adapted frame.

    The leaf block is the identity; `transverse` is the q x q block
    G[a, b] = g(e_{p+a}, e_{p+b}) as a field of shape (q, q). None means the
    identity (orthonormal frame).
    """

    frame: FramePresentation
    transverse: ScalarField | None = None

    def __post_init__(self) -> None:
        q = self.frame.q
        if self.transverse is not None and self.transverse.shape != (q, q):
            raise usage_error(f"Transverse metric must have shape ({q}, {q})")

    @property
    def chart(self) -> Chart:
        return self.frame.chart

    def transverse_matrix(self, points: Array) -> Array:
        pts = np.asarray(points, dtype=float)
        q = self.frame.q
        if self.transverse is None:
            eye = np.eye(q).reshape((q, q) + (1,) * (pts.ndim - 1))
            return np.broadcast_to(eye, (q, q) + pts.shape[1:]).copy()
        return self.transverse(pts)

    def transverse_gradient(self, points: Array) -> Array:
        pts = np.asarray(points, dtype=float)
        q = self.frame.q
        if self.transverse is None:
            return np.zeros((q, q, self.chart.dim) + pts.shape[1:])
        return self.transverse.gradient(pts)

    def matrix(self, points: Array) -> Array:
        pts = np.asarray(points, dtype=float)
        n, p = self.frame.n, self.frame.p
        g = np.zeros((n, n) + pts.shape[1:])
        for i in range(p):
            g[i, i] = 1.0
        g[p:, p:] = self.transverse_matrix(pts)
        return g

    frame_matrix = matrix

    def matrix_gradient(self, points: Array) -> Array:
        pts = np.asarray(points, dtype=float)
        n, p = self.frame.n, self.frame.p
        dg = np.zeros((n, n, self.chart.dim) + pts.shape[1:])
        dg[p:, p:] = self.transverse_gradient(pts)
        return dg

    def check(self, points: Array) -> None:
        """Raise a numeric error naming the first node where g_Q is not SPD."""
        g = self.transverse_matrix(points)
        asym = np.max(np.abs(g - np.swapaxes(g, 0, 1)), initial=0.0)
        if asym > 1e-10:
            raise numeric_error(f"Transverse metric is not symmetric (residual {asym:.3e})")
        try:
            np.linalg.cholesky(as_matrices(g))
        except np.linalg.LinAlgError:
            lowest = np.linalg.eigvalsh(as_matrices(g))[..., 0]
            node = _describe_node(points, int(np.argmin(lowest.ravel())))
            raise numeric_error(f"Metric is not positive definite at node {node}") from None

    def density(self, points: Array) -> Array:
        """Riemannian volume density in coordinates, sqrt(det G) / |det E|."""
        g = self.transverse_matrix(points)
        return np.sqrt(batched_det(g)) / np.abs(batched_det(self.frame.matrix(points)))

    def with_transverse(self, transverse: ScalarField | None) -> MetricField:
        return MetricField(self.frame, transverse)


def koszul(metric: MetricField, points: Array) -> Array:
    """Levi-Civita coefficients in the frame from the Koszul formula."""
    frame = metric.frame
    e = frame.matrix(points)
    g = metric.matrix(points)
    dg = metric.matrix_gradient(points)
    c = frame.structure(points)
    eg = np.einsum("im...,jkm...->ijk...", e, dg)
    cl = np.einsum("ijm...,mk...->ijk...", c, g)
    low = 0.5 * (
        eg
        + np.einsum("jik...->ijk...", eg)
        - np.einsum("kij...->ijk...", eg)
        + cl
        - np.einsum("jki...->ijk...", cl)
        + np.einsum("kij...->ijk...", cl)
    )
    ginv = batched_inverse(g)
    return np.einsum("ijk...,kl...->ijl...", low, ginv)


class ConnectionCoefficients:
    """
    Connection coefficients G[i, j, k] as a vectorized point function.

    Evaluations are memoized per point array (small LRU); the cache is
    guarded by a lock so concurrent readers see initialize-once values.
    """

    def __init__(
        self,
        metric: MetricField,
        variant: Variant,
        compute: Callable[[Array], Array],
    ) -> None:
        self.metric = metric
        self.variant = variant
        self._compute = compute
        self._cache: OrderedDict[tuple, Array] = OrderedDict()
        self._lock = threading.Lock()

    @property
    def frame(self) -> FramePresentation:
        return self.metric.frame

    def __call__(self, points: Array) -> Array:
        pts = np.ascontiguousarray(points, dtype=float)
        key = (pts.shape, pts.tobytes())
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        value = self._compute(pts)
        value.setflags(write=False)
        with self._lock:
            self._cache[key] = value
            if len(self._cache) > _CACHE_SIZE:
                self._cache.popitem(last=False)
        return value

    def component(self, i: int, j: int, k: int, point: Array) -> float:
        return float(self(np.asarray(point, dtype=float))[i, j, k])

    def gradient(self, points: Array) -> Array:
        """Coordinate gradient, shape (n, n, n, dim, *S)."""
        pts = np.asarray(points, dtype=float)
        return stencil_gradient(self, pts, self.metric.chart.stencil_steps(pts, STENCIL_STEP), 5)

    def frame_gradient(self, points: Array) -> Array:
        """dG[i, j, k, b] = e_b(G[i, j, k])."""
        grad = self.gradient(points)
        e = self.frame.matrix(points)
        return np.einsum("ijkm...,bm...->ijkb...", grad, e)


def levi_civita(metric: MetricField) -> ConnectionCoefficients:
    def compute(points: Array) -> Array:
        metric.check(points)
        return koszul(metric, points)

    return ConnectionCoefficients(metric, "ambient", compute)


def curvature_tensor(conn: ConnectionCoefficients, points: Array) -> Array:
    """R[a, b, c, m] for all frame indices (see module docstring for the sign)."""
    gam = conn(points)
    dgam = conn.frame_gradient(points)
    c = conn.frame.structure(points)
    return (
        np.einsum("acnb...->abcn...", dgam)
        - np.einsum("bcna...->abcn...", dgam)
        + np.einsum("acm...,bmn...->abcn...", gam, gam)
        - np.einsum("bcm...,amn...->abcn...", gam, gam)
        + np.einsum("abm...,mcn...->abcn...", c, gam)
    )


def ambient_curvature(
    conn: ConnectionCoefficients, x: int, y: int, z: int, point: Array
) -> Array:
    """Frame components of R(e_x, e_y) e_z at `point`."""
    return curvature_tensor(conn, np.asarray(point, dtype=float))[x, y, z]


def lowered_curvature(conn: ConnectionCoefficients, points: Array) -> Array:
    """g(R(e_a, e_b) e_c, e_d)."""
    r = curvature_tensor(conn, points)
    g = conn.metric.matrix(points)
    return np.einsum("abcm...,md...->abcd...", r, g)


def first_bianchi_residual(conn: ConnectionCoefficients, points: Array) -> float:
    r = curvature_tensor(conn, points)
    cyc = r + np.einsum("bcan...->abcn...", r) + np.einsum("cabn...->abcn...", r)
    return float(np.max(np.abs(cyc)))


def torsion_residual(conn: ConnectionCoefficients, points: Array) -> float:
    gam = conn(points)
    c = conn.frame.structure(points)
    return float(np.max(np.abs(gam - np.swapaxes(gam, 0, 1) - c)))


def compatibility_residual(conn: ConnectionCoefficients, points: Array) -> float:
    """max |e_i g(e_j, e_k) - g(D_i e_j, e_k) - g(e_j, D_i e_k)|."""
    metric = conn.metric
    gam = conn(points)
    g = metric.matrix(points)
    e = conn.frame.matrix(points)
    eg = np.einsum("im...,jkm...->ijk...", e, metric.matrix_gradient(points))
    low = np.einsum("ijm...,mk...->ijk...", gam, g)
    return float(np.max(np.abs(eg - low - np.swapaxes(low, 1, 2))))

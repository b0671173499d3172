"""
Charts, scalar fields, differentiation and quadrature.

What lives here
- `Chart`: a coordinate box with per-axis periodicity flags.
- `ScalarField`: a vectorized point function with optional exact gradient.
  A field may carry a component shape (for example `(q,)` for the
  components of a 1-form); all components are evaluated by one call.
- `QuadratureRule`: tensor-product rule on the box (trapezoid on periodic
  and twisted-periodic axes, midpoint on open axes). Open axes declared
  `polar` keep the midpoint nodes but take Fejer weights, which are exact
  for integrands of the form sin(s) P(cos s) after rescaling to [0, pi].
- `fourier_interpolant`: trigonometric interpolation of grid data on
  periodic axes, with exact gradients.

Point convention
- Points are arrays of shape `(dim, *S)`: axis 0 indexes coordinates and
  the trailing axes are an arbitrary batch of points. Field values have
  shape `(*field.shape, *S)`; gradients `(*field.shape, dim, *S)`.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from foliate.exceptions import configuration_error, domain_error, usage_error

Array = NDArray[np.float64]
Periodicity = Literal["open", "periodic", "twisted-periodic"]

# Step of the 5-point stencil used for derived fields and second derivatives.
STENCIL_STEP = 1e-3
DEFAULT_FD_STEP = 1e-5
POLAR_STEP_FLOOR = 1e-3

_PERIODICITIES = ("open", "periodic", "twisted-periodic")


@dataclass(frozen=True)
class Chart:
    coord_names: tuple[str, ...]
    domain: tuple[tuple[float, float], ...]
    periodicity: tuple[Periodicity, ...]
    twist_note: str = ""
    polar: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.coord_names:
            raise usage_error("A chart needs at least one coordinate")
        if not len(self.coord_names) == len(self.domain) == len(self.periodicity):
            raise usage_error(
                "coord_names, domain and periodicity must have one entry per axis"
            )
        for name, (lo, hi), kind in zip(
            self.coord_names, self.domain, self.periodicity, strict=True
        ):
            if not hi > lo:
                raise usage_error(f"Axis {name} has an empty interval [{lo}, {hi}]")
            if kind not in _PERIODICITIES:
                raise usage_error(f"Axis {name} has unknown periodicity {kind!r}")
        for name in self.polar:
            if self.periodicity[self.axis(name)] != "open":
                raise usage_error(f"Polar axis {name} must be open")

    @property
    def dim(self) -> int:
        return len(self.coord_names)

    @property
    def lower(self) -> Array:
        return np.array([lo for lo, _ in self.domain])

    @property
    def lengths(self) -> Array:
        return np.array([hi - lo for lo, hi in self.domain])

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axis(self, name: str) -> int:
        try:
            return self.coord_names.index(name)
        except ValueError:
            raise usage_error(f"Chart has no coordinate named {name!r}") from None

    def wrap(self, point: Array) -> Array:
        """Reduce closed axes (periodic or twisted) into the box; reject points off open axes."""
        pts = np.array(point, dtype=float)
        if pts.shape[0] != self.dim:
            raise usage_error(f"Expected {self.dim} coordinates, got {pts.shape[0]}")
        for i, kind in enumerate(self.periodicity):
            lo, hi = self.domain[i]
            if kind != "open":
                pts[i] = lo + np.mod(pts[i] - lo, hi - lo)
            elif np.any((pts[i] < lo) | (pts[i] > hi)):
                raise domain_error(f"Coordinate {self.coord_names[i]} outside [{lo}, {hi}]")
        return pts

    def stencil_steps(self, points: Array, step: float) -> Array:
        """Per-axis difference steps at `points`, shape (dim, *S).

        On polar axes the step shrinks like sin of the polar angle: frames on
        such charts are singular at the poles and a fixed step loses
        accuracy in the pole caps.
        """
        pts = np.asarray(points, dtype=float)
        steps = np.full(pts.shape, float(step))
        for name in self.polar:
            i = self.axis(name)
            lo, hi = self.domain[i]
            s = np.sin(np.pi * (pts[i] - lo) / (hi - lo))
            steps[i] = step * np.clip(s, POLAR_STEP_FLOOR, 1.0)
        return steps

    def random_points(self, rng: np.random.Generator, count: int, margin: float = 0.05) -> Array:
        """Uniform random points, kept `margin` (relative) away from open-axis ends."""
        lo = self.lower.copy()
        span = self.lengths.copy()
        for i, kind in enumerate(self.periodicity):
            if kind == "open":
                lo[i] += margin * span[i]
                span[i] *= 1.0 - 2.0 * margin
        return lo[:, None] + span[:, None] * rng.random((self.dim, count))


def _point_axes(points: Array) -> int:
    return points.ndim - 1


def stencil_gradient(
    fn: Callable[[Array], Array],
    points: Array,
    step: float | Array = STENCIL_STEP,
    order: Literal[3, 5] = 5,
) -> Array:
    """Central-difference coordinate gradient of a vectorized point function.

    The derivative axis is inserted just before the point axes, so values of
    shape `(*C, *S)` give a gradient of shape `(*C, dim, *S)`. `step` is a
    scalar or a per-axis, per-point array shaped like `points`.
    """
    pts = np.asarray(points, dtype=float)
    n_axes = _point_axes(pts)
    steps = np.broadcast_to(np.asarray(step, dtype=float), pts.shape)
    grads = []
    for mu in range(pts.shape[0]):
        h = steps[mu]
        shift = np.zeros(pts.shape)
        shift[mu] = h
        if order == 3:
            g = (np.asarray(fn(pts + shift)) - np.asarray(fn(pts - shift))) / (2.0 * h)
        else:
            g = (
                -np.asarray(fn(pts + 2.0 * shift))
                + 8.0 * np.asarray(fn(pts + shift))
                - 8.0 * np.asarray(fn(pts - shift))
                + np.asarray(fn(pts - 2.0 * shift))
            ) / (12.0 * h)
        grads.append(g)
    return np.stack(grads, axis=grads[0].ndim - n_axes)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    A real function on a chart, or a stack of them sharing one evaluation.

    Notes
    - `fn` is called on raw points (no wrapping); `evaluate` is the checked
      entry point for user-facing single-point evaluation.
    - Without `exact_grad` the gradient is a central difference: 3-point
      with `fd_step` by default, 5-point when `stencil=5` (derived fields).
    """

    chart: Chart
    fn: Callable[[Array], Array]
    exact_grad: Callable[[Array], Array] | None = None
    fd_step: float = DEFAULT_FD_STEP
    shape: tuple[int, ...] = ()
    constant: bool = False
    stencil: Literal[3, 5] = 3

    def __call__(self, points: Array) -> Array:
        pts = np.asarray(points, dtype=float)
        values = np.asarray(self.fn(pts), dtype=float)
        target = self.shape + pts.shape[1:]
        if values.shape != target:
            if values.shape == self.shape:
                values = values.reshape(self.shape + (1,) * _point_axes(pts))
            values = np.broadcast_to(values, target).copy()
        return values

    def gradient(self, points: Array) -> Array:
        pts = np.asarray(points, dtype=float)
        target = self.shape + (self.chart.dim,) + pts.shape[1:]
        if self.constant:
            return np.zeros(target)
        if self.exact_grad is not None:
            grad = np.asarray(self.exact_grad(pts), dtype=float)
            if grad.shape != target:
                if grad.shape == self.shape + (self.chart.dim,):
                    grad = grad.reshape(grad.shape + (1,) * _point_axes(pts))
                grad = np.broadcast_to(grad, target).copy()
            return grad
        steps = self.chart.stencil_steps(pts, self.fd_step)
        return stencil_gradient(self, pts, steps, self.stencil)

    def derivative(self, points: Array, direction: Array) -> Array:
        """Directional derivative along coordinate vector(s) `direction`."""
        pts = np.asarray(points, dtype=float)
        grad = self.gradient(pts)
        d = np.asarray(direction, dtype=float)
        if d.ndim == 1:
            d = d.reshape(d.shape + (1,) * _point_axes(pts))
        return np.sum(grad * d, axis=len(self.shape))

    def frame_derivative(self, points: Array, frame_matrix: Array) -> Array:
        """e_i(h) for every frame field; `frame_matrix` has shape (n, dim, *S)."""
        grad = np.moveaxis(self.gradient(points), len(self.shape), 0)
        out = None
        for mu in range(grad.shape[0]):
            term = np.expand_dims(grad[mu], len(self.shape)) * frame_matrix[:, mu]
            out = term if out is None else out + term
        return out

    def component(self, index: tuple[int, ...] | int) -> ScalarField:
        idx = index if isinstance(index, tuple) else (index,)
        if len(idx) > len(self.shape):
            raise usage_error(f"Index {idx} exceeds field shape {self.shape}")
        parent = self
        exact = None
        if self.exact_grad is not None:

            def exact(p: Array) -> Array:
                return parent.gradient(p)[idx]

        return ScalarField(
            chart=self.chart,
            fn=lambda p: parent(p)[idx],
            exact_grad=exact,
            fd_step=self.fd_step,
            shape=self.shape[len(idx):],
            constant=self.constant,
            stencil=self.stencil,
        )


def derived_field(
    chart: Chart, fn: Callable[[Array], Array], shape: tuple[int, ...] = ()
) -> ScalarField:
    """A field computed from other fields; differentiated by the 5-point stencil."""
    return ScalarField(chart=chart, fn=fn, shape=shape, fd_step=STENCIL_STEP, stencil=5)


def constant_field(chart: Chart, value: float | Array) -> ScalarField:
    val = np.asarray(value, dtype=float)
    return ScalarField(
        chart=chart,
        fn=lambda p: val,
        shape=val.shape,
        constant=True,
    )


def stack_fields(fields: Sequence[ScalarField]) -> ScalarField:
    """Stack scalar fields on a common chart into one field of shape (len(fields),)."""
    if not fields:
        raise usage_error("Cannot stack an empty list of fields")
    chart = fields[0].chart
    if any(f.chart is not chart and f.chart != chart for f in fields):
        raise usage_error("Stacked fields must share a chart")
    if any(f.shape != () for f in fields):
        raise usage_error("Only scalar fields can be stacked")
    exact = None
    if all(f.exact_grad is not None or f.constant for f in fields):

        def exact(p: Array) -> Array:
            return np.stack([f.gradient(p) for f in fields])

    return ScalarField(
        chart=chart,
        fn=lambda p: np.stack([f(p) for f in fields]),
        exact_grad=exact,
        fd_step=min(f.fd_step for f in fields),
        shape=(len(fields),),
        constant=all(f.constant for f in fields),
        stencil=max(f.stencil for f in fields),
    )


def linear_combination(coeffs: Sequence[float], fields: Sequence[ScalarField]) -> ScalarField:
    if len(coeffs) != len(fields) or not fields:
        raise usage_error("linear_combination needs one coefficient per field")
    chart = fields[0].chart
    shape = fields[0].shape
    if any(f.shape != shape for f in fields):
        raise usage_error("Combined fields must share a shape")
    exact = None
    if all(f.exact_grad is not None or f.constant for f in fields):

        def exact(p: Array) -> Array:
            return sum(c * f.gradient(p) for c, f in zip(coeffs, fields, strict=True))

    return ScalarField(
        chart=chart,
        fn=lambda p: sum(c * f(p) for c, f in zip(coeffs, fields, strict=True)),
        exact_grad=exact,
        fd_step=min(f.fd_step for f in fields),
        shape=shape,
        constant=all(f.constant for f in fields),
        stencil=max(f.stencil for f in fields),
    )


def evaluate(field: ScalarField, point: Array) -> float | Array:
    """Value of `field` at a chart point, after wrapping periodic axes."""
    pts = field.chart.wrap(point)
    values = field(pts)
    if values.ndim == 0:
        return float(values)
    return values


def directional_derivative(field: ScalarField, point: Array, direction: Array) -> float | Array:
    pts = field.chart.wrap(point)
    d = np.asarray(direction, dtype=float)
    if not np.all(np.isfinite(d)):
        raise domain_error("Direction must be finite")
    value = field.derivative(pts, d)
    if value.ndim == 0:
        return float(value)
    return value


def _fejer_weights(n: int) -> Array:
    """Weights w_k/sin(theta_k) of Fejer's first rule on the midpoint nodes of [0, pi]."""
    theta = (np.arange(n) + 0.5) * np.pi / n
    j = np.arange(1, n // 2 + 1)
    series = np.cos(2.0 * np.multiply.outer(theta, j)) / (4.0 * j**2 - 1.0)
    w = (2.0 / n) * (1.0 - 2.0 * series.sum(axis=1))
    return w / np.sin(theta)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    chart: Chart
    resolution: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.resolution) != self.chart.dim:
            raise usage_error(
                f"Resolution has {len(self.resolution)} entries for a {self.chart.dim}-d chart"
            )
        for name, n in zip(self.chart.coord_names, self.resolution, strict=True):
            if n < 2:
                raise configuration_error(f"Resolution on axis {name} is {n}; at least 2 needed")

    @classmethod
    def uniform(cls, chart: Chart, n: int) -> QuadratureRule:
        return cls(chart, (n,) * chart.dim)

    def axis_rule(self, axis: int) -> tuple[Array, Array]:
        lo, hi = self.chart.domain[axis]
        n = self.resolution[axis]
        h = (hi - lo) / n
        if self.chart.periodicity[axis] == "open":
            nodes = lo + (np.arange(n) + 0.5) * h
            if self.chart.coord_names[axis] in self.chart.polar:
                return nodes, _fejer_weights(n) * (hi - lo) / np.pi
        else:
            nodes = lo + np.arange(n) * h
        return nodes, np.full(n, h)

    @cached_property
    def nodes(self) -> Array:
        axes = [self.axis_rule(i)[0] for i in range(self.chart.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def weights(self) -> Array:
        w = self.axis_rule(0)[1]
        for i in range(1, self.chart.dim):
            w = np.multiply.outer(w, self.axis_rule(i)[1])
        return w

    def integrate_values(self, values: Array) -> float | Array:
        vals = np.asarray(values, dtype=float)
        axes = tuple(range(vals.ndim - self.chart.dim, vals.ndim))
        total = np.sum(vals * self.weights, axis=axes)
        if np.ndim(total) == 0:
            return float(total)
        return total


def integrate(field: ScalarField, rule: QuadratureRule) -> float | Array:
    if field.chart is not rule.chart and field.chart != rule.chart:
        raise usage_error("Field and quadrature rule live on different charts")
    return rule.integrate_values(field(rule.nodes))


def fourier_interpolant(chart: Chart, axes: Sequence[int], values: Array) -> ScalarField:
    """
    Trigonometric interpolant of samples on the trapezoid nodes of `axes`.

    `values` has one array axis per entry of `axes` (in that order) and the
    result depends only on those coordinates. Gradients are exact.
    """
    axes = tuple(axes)
    vals = np.asarray(values, dtype=float)
    if vals.ndim != len(axes):
        raise usage_error("Interpolation data must have one axis per interpolated coordinate")
    for a in axes:
        if chart.periodicity[a] == "open":
            raise usage_error(f"Axis {chart.coord_names[a]} is not periodic")
    coeffs = np.fft.fftn(vals) / vals.size
    freqs = [np.fft.fftfreq(n, d=1.0 / n) for n in vals.shape]
    lows = [chart.domain[a][0] for a in axes]
    lengths = [chart.domain[a][1] - chart.domain[a][0] for a in axes]

    def phases(points: Array) -> list[Array]:
        out = []
        for k, a, lo, length in zip(freqs, axes, lows, lengths, strict=True):
            s = (points[a] - lo) / length
            out.append(np.exp(2j * np.pi * np.multiply.outer(k, s)))
        return out

    def contract(c: Array, ph: list[Array]) -> Array:
        result = c.reshape(c.shape + (1,) * (ph[0].ndim - 1))
        for e in reversed(ph):
            result = np.sum(result * e, axis=result.ndim - e.ndim)
        return result

    def fn(points: Array) -> Array:
        return np.real(contract(coeffs, phases(points)))

    def grad(points: Array) -> Array:
        ph = phases(points)
        comps = []
        for mu in range(chart.dim):
            if mu not in axes:
                comps.append(np.zeros(points.shape[1:]))
                continue
            j = axes.index(mu)
            scale = (2j * np.pi / lengths[j]) * freqs[j]
            shape = [1] * len(axes)
            shape[j] = -1
            comps.append(np.real(contract(coeffs * scale.reshape(shape), ph)))
        return np.stack(comps)

    return ScalarField(chart=chart, fn=fn, exact_grad=grad)

"""
One scenario's geometry with the grids the services evaluate on.

Grids
- `rule`: `resolution` nodes on basic axes, `leaf_resolution` elsewhere.
  Integrands of basic quantities do not vary along the remaining axes.
- `suite_rule`: the same with `suite_resolution` on basic axes; used by the
  identity suites and the first-variation checks.
- `verify_nodes`: a uniform `verify_resolution` grid for sup-norm
  residuals. Polar axes are sampled on their middle half only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from foliate.config import RunConfig
from foliate.geometry.chart import Array, QuadratureRule, ScalarField, constant_field
from foliate.geometry.frame import MetricField
from foliate.geometry.operators import BasicCalculus
from foliate.geometry.transverse import TransverseGeometry
from foliate.scenarios import Scenario


@dataclass(frozen=True)
class Resolutions:
    resolution: int = 128
    leaf_resolution: int = 4
    verify_resolution: int = 12
    suite_resolution: int = 32
    basis_modes: int = 6

    @classmethod
    def from_config(cls, config: RunConfig) -> Resolutions:
        return cls(
            resolution=config.resolution,
            leaf_resolution=config.leaf_resolution,
            verify_resolution=config.verify_resolution,
            suite_resolution=config.suite_resolution,
            basis_modes=config.basis_modes,
        )


@dataclass(eq=False)
class GeometryContext:
    scenario: Scenario
    resolutions: Resolutions = field(default_factory=Resolutions)
    flip_connection_sign: bool = False

    @property
    def metric(self) -> MetricField:
        return self.scenario.metric

    @property
    def q(self) -> int:
        return self.scenario.q

    @cached_property
    def geometry(self) -> TransverseGeometry:
        return TransverseGeometry(self.metric, self.flip_connection_sign)

    @cached_property
    def calculus(self) -> BasicCalculus:
        return BasicCalculus(self.geometry)

    def rule_for(self, basic_n: int) -> QuadratureRule:
        chart = self.scenario.chart
        basic = set(self.scenario.basic_indices)
        res = tuple(
            basic_n if i in basic else self.resolutions.leaf_resolution for i in range(chart.dim)
        )
        return QuadratureRule(chart, res)

    @cached_property
    def rule(self) -> QuadratureRule:
        return self.rule_for(self.resolutions.resolution)

    @cached_property
    def suite_rule(self) -> QuadratureRule:
        return self.rule_for(self.resolutions.suite_resolution)

    @cached_property
    def verify_nodes(self) -> Array:
        chart = self.scenario.chart
        n = self.resolutions.verify_resolution
        uniform = QuadratureRule.uniform(chart, n)
        axes = []
        for i, name in enumerate(chart.coord_names):
            if name not in chart.polar:
                axes.append(uniform.axis_rule(i)[0])
                continue
            # Frames degenerate at the poles; sample the middle half only.
            lo, hi = chart.domain[i]
            quarter = 0.25 * (hi - lo)
            axes.append(lo + quarter + (np.arange(n) + 0.5) * (2.0 * quarter) / n)
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def integrate(self, values: Array, rule: QuadratureRule | None = None) -> float:
        """Integral against dV of values given at the nodes of `rule`."""
        r = self.rule if rule is None else rule
        return float(r.integrate_values(values * self.metric.density(r.nodes)))

    def volume(self, rule: QuadratureRule | None = None) -> float:
        r = self.rule if rule is None else rule
        return self.integrate(np.ones(r.nodes.shape[1:]), r)

    def transverse_field(self) -> ScalarField:
        """g_Q as a field even when the scenario stores the identity implicitly."""
        if self.metric.transverse is not None:
            return self.metric.transverse
        return constant_field(self.scenario.chart, np.eye(self.q))

    def with_transverse(self, transverse: ScalarField) -> GeometryContext:
        metric = self.metric.with_transverse(transverse)
        return GeometryContext(
            self.scenario.with_metric(metric), self.resolutions, self.flip_connection_sign
        )

"""Efficiency chains with uncertainty propagation and count inversion.

Independent multiplicative stages combine as a product whose relative
uncertainty is the quadrature sum of the stages' relative uncertainties.
Measured counts invert through the known part of a chain to the remaining
stage, picking up the Poisson sqrt(N) counting error along the way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class EfficiencyStage:
    """Named transmission factor with a relative (fractional) uncertainty."""

    name: str
    value: float
    rel_uncertainty: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"stage {self.name!r}: value {self.value} outside [0, 1]")
        if not (self.rel_uncertainty >= 0.0 and math.isfinite(self.rel_uncertainty)):
            raise ValueError(f"stage {self.name!r}: bad uncertainty {self.rel_uncertainty}")

    @property
    def abs_uncertainty(self) -> float:
        return self.value * self.rel_uncertainty


@dataclass(frozen=True)
class Budget:
    """Ordered stage chain; value and uncertainty of the product."""

    stages: tuple[EfficiencyStage, ...]

    @property
    def value(self) -> float:
        v = 1.0
        for s in self.stages:
            v *= s.value
        return v

    @property
    def rel_uncertainty(self) -> float:
        return math.sqrt(sum(s.rel_uncertainty**2 for s in self.stages))

    @property
    def abs_uncertainty(self) -> float:
        return self.value * self.rel_uncertainty

    def as_stage(self, name: str) -> EfficiencyStage:
        return EfficiencyStage(name, self.value, self.rel_uncertainty)

    def rows(self) -> list[dict]:
        return [
            {"name": s.name, "value": s.value, "rel_uncertainty": s.rel_uncertainty}
            for s in self.stages
        ]


def chain(stages) -> Budget:
    """Combine stages into a budget; an empty chain is the exact identity."""
    return Budget(stages=tuple(stages))


def infer_stage(
    measured_counts: int,
    trials: int,
    known_stages,
    name: str = "inferred",
) -> EfficiencyStage:
    """Back the remaining stage out of measured counts through known losses.

    value = (counts / trials) / product(known); the relative uncertainty
    combines Poisson counting (1/sqrt(N)) with the known stages' quadrature
    sum.  Zero counts cannot be inverted to a value; the Poisson one-count
    upper bound is raised as an error message for the caller to report.
    """
    known = chain(known_stages)
    if known.value <= 0.0:
        raise ValueError("known-stage product must be positive")
    if trials < 1:
        raise ValueError("need at least one trial")
    if measured_counts < 0:
        raise ValueError("counts must be >= 0")
    if measured_counts == 0:
        bound = (1.0 / trials) / known.value
        raise ZeroCountsError(bound)
    value = (measured_counts / trials) / known.value
    rel = math.sqrt(1.0 / measured_counts + known.rel_uncertainty**2)
    return EfficiencyStage(name, value, rel)


class ZeroCountsError(ValueError):
    """Zero measured counts: only an upper bound on the stage is available."""

    def __init__(self, upper_bound: float):
        super().__init__(f"zero counts; one-count upper bound {upper_bound:.3g}")
        self.upper_bound = upper_bound


def entanglement_rate_gain(p_new: float, p_old: float) -> float:
    """Two-photon coincidence rate gain (p_new / p_old)^2 from a per-photon gain."""
    if p_old <= 0.0:
        raise ValueError("reference efficiency must be positive")
    return (p_new / p_old) ** 2

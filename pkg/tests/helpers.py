"""Shared fixtures and an independent integrator for influence values.

The reference implementation here deliberately avoids the package's step
machinery: survival curves, rectangle integrals and martingale sums are
recomputed with plain Python loops from explicit jump lists, so agreement
with the package is a two-route check.
"""

from __future__ import annotations

import math

import numpy as np

from hetsurv.nuisance.cate import CateModel
from hetsurv.nuisance.step import StepCumHazard
from hetsurv.eif import NuisanceBundle


class StepHazardStub:
    """Hazard model with one fixed step curve per arm, ignoring covariates."""

    def __init__(self, arm0: StepCumHazard, arm1: StepCumHazard):
        self.by_arm = {0: arm0, 1: arm1}

    def cum_hazard(self, treatment, covariates) -> StepCumHazard:
        return self.by_arm[int(treatment)]

    def survival_at(self, t, treatment, covariates):
        a = np.asarray(treatment).reshape(-1)
        values = {k: h.survival(t) for k, h in self.by_arm.items()}
        return np.where(a == 1, values[1], values[0]).astype(float)

    def integrated_survival_upto(self, t, treatment, covariates):
        a = np.asarray(treatment).reshape(-1)
        values = {k: h.integrated_survival(0.0, t) for k, h in self.by_arm.items()}
        return np.where(a == 1, values[1], values[0]).astype(float)


class ConstantPropensity:
    """pi-hat(1 | x) identically equal to one value."""

    def __init__(self, p1: float, epsilon: float = 0.05):
        self.p1 = float(p1)
        self.epsilon = float(epsilon)

    def propensity(self, covariates):
        n = np.atleast_2d(covariates).shape[0]
        return np.clip(np.full(n, self.p1), self.epsilon, 1.0 - self.epsilon)


def stub_bundle(
    event0,
    event1,
    cens0=None,
    cens1=None,
    p1: float = 0.5,
    horizon: float = 2.0,
    estimand: str = "survival",
    epsilon: float = 1e-10,
) -> NuisanceBundle:
    """Bundle over fixed per-arm step hazards for fixture subjects."""
    empty = StepCumHazard(np.array([]), np.array([]))
    event = StepHazardStub(event0, event1)
    cens = StepHazardStub(
        cens0 if cens0 is not None else empty, cens1 if cens1 is not None else empty
    )
    return NuisanceBundle(
        event_hazard=event,
        censoring_hazard=cens,
        propensity_model=ConstantPropensity(p1, epsilon),
        cate=CateModel(hazard_model=event, horizon=horizon, estimand=estimand),
    )


def reference_survival(u: float, jumps: list[tuple[float, float]], left: bool) -> float:
    """exp(-sum of jump sizes at times < u (left) or <= u), plain loops."""
    total = 0.0
    for time, size in jumps:
        if (time < u) if left else (time <= u):
            total += size
    return math.exp(-total)


def reference_integrated_survival(
    lo: float, hi: float, jumps: list[tuple[float, float]]
) -> float:
    """int_lo^hi exp(-Lambda(v)) dv by explicit rectangle enumeration."""
    cuts = sorted({lo, hi, *[t for t, _ in jumps if lo < t < hi]})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        total += (b - a) * reference_survival(a, jumps, left=False)
    return total


def reference_phi_arms(
    time: float,
    event: int,
    treatment: int,
    event_jumps: dict[int, list[tuple[float, float]]],
    cens_jumps: dict[int, list[tuple[float, float]]],
    p1: float,
    horizon: float,
    estimand: str,
    epsilon: float = 1e-10,
) -> tuple[float, float]:
    """(phi1, phi0) recomputed from first principles."""

    def plug_in(arm: int) -> float:
        if estimand == "survival":
            return reference_survival(horizon, event_jumps[arm], left=False)
        return reference_integrated_survival(0.0, horizon, event_jumps[arm])

    def weight(u: float) -> float:
        own = event_jumps[treatment]
        if estimand == "survival":
            numerator = reference_survival(horizon, own, left=False)
        else:
            numerator = reference_integrated_survival(u, horizon, own)
        denom = max(reference_survival(u, own, left=True), epsilon) * max(
            reference_survival(u, cens_jumps[treatment], left=True), epsilon
        )
        return numerator / denom

    pi_own = min(max(p1 if treatment == 1 else 1.0 - p1, epsilon), 1.0 - epsilon)
    counting = weight(time) if (event == 1 and time <= horizon) else 0.0
    compensator = 0.0
    for u, size in event_jumps[treatment]:
        if u <= min(horizon, time):
            compensator += weight(u) * size
    martingale = (counting - compensator) / pi_own
    phi1 = plug_in(1) - (martingale if treatment == 1 else 0.0)
    phi0 = plug_in(0) - (martingale if treatment == 0 else 0.0)
    return phi1, phi0

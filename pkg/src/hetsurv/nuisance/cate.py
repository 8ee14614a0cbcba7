"""Conditional treatment effects from a fitted event hazard (S-learner).

The effect scale is set by the estimand: difference in survival at the
horizon, or difference in restricted mean survival time up to the horizon.
Projections of the effect onto covariate subsets and conditional covariate
means are fitted with the generic regressors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, FitError
from .regression import fit_regressor

__all__ = [
    "CateModel",
    "CateProjection",
    "build_cate",
    "fit_cate_projection",
    "fit_covariate_mean",
]

ESTIMANDS = ("survival", "rmst")


@dataclass(frozen=True)
class CateModel:
    """tau-hat(x) under the chosen estimand, via one event-hazard model."""

    hazard_model: object
    horizon: float
    estimand: str

    def arm_value(self, a: int, covariates) -> np.ndarray:
        """Plug-in arm summary: S(t|a,x), or its integral for rmst."""
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        arm = np.full(x.shape[0], float(a))
        if self.estimand == "survival":
            return self.hazard_model.survival_at(self.horizon, arm, x)
        return self.hazard_model.integrated_survival_upto(self.horizon, arm, x)

    def tau(self, covariates) -> np.ndarray:
        return self.arm_value(1, covariates) - self.arm_value(0, covariates)


def build_cate(hazard_model, horizon: float, estimand: str = "survival") -> CateModel:
    """Wrap an event-hazard model as an effect function.

    Parameters
    ----------
    hazard_model : fitted hazard model
        Must expose ``survival_at`` and ``integrated_survival_upto``.
    horizon : float
        Evaluation time t > 0.
    estimand : str
        'survival' or 'rmst'.
    """
    if estimand not in ESTIMANDS:
        raise DataError(f"unknown estimand {estimand!r}; expected one of {ESTIMANDS}")
    if not horizon > 0.0:
        raise DataError("horizon must be positive")
    for attr in ("survival_at", "integrated_survival_upto"):
        if not hasattr(hazard_model, attr):
            raise FitError(f"hazard model lacks required method {attr!r}")
    return CateModel(hazard_model=hazard_model, horizon=float(horizon), estimand=estimand)


@dataclass(frozen=True)
class CateProjection:
    """Regression of a per-subject value onto a subset of covariate columns."""

    regressor: object
    keep: tuple[int, ...]  # 0-based retained columns
    d: int

    def predict(self, covariates) -> np.ndarray:
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        if x.shape[1] != self.d:
            raise FitError(f"expected {self.d} covariates, got {x.shape[1]}")
        return self.regressor.predict(x[:, list(self.keep)])


def _complement_columns(d: int, drop: tuple[int, ...]) -> tuple[int, ...]:
    for j in drop:
        if not 1 <= j <= d:
            raise DataError(f"covariate index {j} outside 1..{d}")
    if len(set(drop)) != len(drop):
        raise DataError("covariate subset contains duplicates")
    return tuple(c for c in range(d) if (c + 1) not in drop)


def fit_cate_projection(
    covariates: np.ndarray,
    values: np.ndarray,
    drop: tuple[int, ...],
    method: str = "kernel-smoother",
    seed: int = 0,
    **params,
) -> CateProjection:
    """Regress per-subject values on the covariates NOT in ``drop`` (1-based)."""
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    keep = _complement_columns(x.shape[1], tuple(drop))
    regressor = fit_regressor(
        x[:, list(keep)], values, method, seed=seed, **params
    )
    return CateProjection(regressor=regressor, keep=keep, d=x.shape[1])


def fit_covariate_mean(
    covariates: np.ndarray,
    j: int,
    method: str = "kernel-smoother",
    seed: int = 0,
    **params,
) -> CateProjection:
    """Fit the conditional mean of X_j given the other covariates."""
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    keep = _complement_columns(x.shape[1], (j,))
    regressor = fit_regressor(
        x[:, list(keep)], x[:, j - 1], method, seed=seed, **params
    )
    return CateProjection(regressor=regressor, keep=keep, d=x.shape[1])

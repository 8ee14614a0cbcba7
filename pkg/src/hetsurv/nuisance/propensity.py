"""Propensity-score learners: logistic GLM and random-forest classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.ensemble import RandomForestClassifier

from ..data import SurvivalDataset
from ..errors import FitError
from .config import DesignSpec

__all__ = [
    "LogisticPropensityModel",
    "ForestPropensityModel",
    "fit_logistic",
    "fit_forest_classifier",
]

_GRAD_TOL = 1e-9
_MAX_ITER = 100
_MAX_HALVINGS = 40
_SEPARATION_BOUND = 50.0

DEFAULT_EPSILON = 0.05


def _require_both_arms(treatment: np.ndarray) -> None:
    if np.all(treatment == 1) or np.all(treatment == 0):
        raise FitError("single arm: every record has the same treatment value")


@dataclass(frozen=True)
class LogisticPropensityModel:
    """Fitted logit model for P(A=1 | X) with truncated predictions."""

    design_spec: DesignSpec
    intercept: float
    coef: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def untruncated(self, covariates) -> np.ndarray:
        z = self.design_spec.matrix(covariates, np.zeros(1))
        eta = z @ self.coef if self.coef.size else np.zeros(z.shape[0])
        return expit(self.intercept + eta)

    def propensity(self, covariates) -> np.ndarray:
        return np.clip(self.untruncated(covariates), self.epsilon, 1.0 - self.epsilon)


def fit_logistic(
    dataset: SurvivalDataset,
    design: DesignSpec | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> LogisticPropensityModel:
    """Maximum-likelihood logit fit of treatment on covariates plus intercept.

    Newton-Raphson with step-halving, gradient sup-norm tolerance 1e-9,
    at most 100 iterations.

    Raises
    ------
    FitError
        Single treatment arm, singular information, perfect separation
        (detected as coefficients diverging past 50 in absolute value),
        or no convergence.
    """
    _require_both_arms(dataset.treatment)
    if design is None:
        design = DesignSpec(covariates=tuple(range(1, dataset.d + 1)))
    if design.treatment or design.interactions:
        raise FitError("propensity design cannot include treatment terms")
    z = design.matrix(dataset.covariates, np.zeros(dataset.n))
    z = np.column_stack([np.ones(dataset.n), z])
    p = z.shape[1]
    if np.linalg.matrix_rank(z) < p:
        raise FitError("design matrix is rank-deficient")
    y = dataset.treatment.astype(float)
    beta = np.zeros(p)

    def loglik_parts(b):
        eta = z @ b
        ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
        mu = expit(eta)
        grad = z.T @ (y - mu)
        w = mu * (1.0 - mu)
        hess = -(z * w[:, None]).T @ z
        return ll, grad, hess

    loglik, grad, hess = loglik_parts(beta)
    converged = bool(np.max(np.abs(grad)) <= _GRAD_TOL)
    for _ in range(_MAX_ITER):
        if converged:
            break
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError as exc:
            raise FitError("singular information matrix") from exc
        scale_factor = 1.0
        for _ in range(_MAX_HALVINGS):
            candidate = beta + scale_factor * step
            cand_ll, cand_grad, cand_hess = loglik_parts(candidate)
            if np.isfinite(cand_ll) and cand_ll >= loglik - 1e-12:
                break
            scale_factor *= 0.5
        else:
            raise FitError("log-likelihood failed to increase")
        beta, loglik, grad, hess = candidate, cand_ll, cand_grad, cand_hess
        if np.max(np.abs(beta)) > _SEPARATION_BOUND:
            raise FitError("perfect separation: diverging coefficients")
        converged = bool(np.max(np.abs(grad)) <= _GRAD_TOL)
    if not converged:
        raise FitError("logistic fit did not converge in 100 iterations")
    return LogisticPropensityModel(
        design_spec=design, intercept=float(beta[0]), coef=beta[1:], epsilon=epsilon
    )


@dataclass(frozen=True)
class ForestPropensityModel:
    """Random-forest classifier wrapper with truncated probabilities."""

    forest: RandomForestClassifier
    epsilon: float = DEFAULT_EPSILON

    def untruncated(self, covariates) -> np.ndarray:
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        proba = self.forest.predict_proba(x)
        col = list(self.forest.classes_).index(1)
        return proba[:, col]

    def propensity(self, covariates) -> np.ndarray:
        return np.clip(self.untruncated(covariates), self.epsilon, 1.0 - self.epsilon)


def fit_forest_classifier(
    dataset: SurvivalDataset,
    n_trees: int = 300,
    min_node: int = 15,
    max_depth: int | None = None,
    seed: int = 0,
    epsilon: float = DEFAULT_EPSILON,
) -> ForestPropensityModel:
    """Fit a random-forest classifier of treatment on all covariates."""
    _require_both_arms(dataset.treatment)
    forest = RandomForestClassifier(
        n_estimators=n_trees,
        min_samples_leaf=min_node,
        max_depth=max_depth,
        random_state=int(seed) % 2**32,  # sklearn rejects seeds >= 2**32
    )
    forest.fit(dataset.covariates, dataset.treatment)
    return ForestPropensityModel(forest=forest, epsilon=epsilon)

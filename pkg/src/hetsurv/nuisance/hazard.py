"""Dispatch from learner specifications to fitted hazard/propensity models."""

from __future__ import annotations

from ..data import SurvivalDataset
from ..errors import FitError
from .config import DesignSpec, LearnerSpec
from .cox import CoxHazardModel, fit_cox
from .propensity import (
    DEFAULT_EPSILON,
    ForestPropensityModel,
    LogisticPropensityModel,
    fit_forest_classifier,
    fit_logistic,
)
from .rsf import RsfHazardModel, fit_rsf

__all__ = ["fit_hazard_model", "fit_propensity_model"]


def _design_from_params(params: dict, dataset: SurvivalDataset, with_treatment: bool
                        ) -> DesignSpec:
    if "covariates" in params or "treatment" in params or "interactions" in params:
        return DesignSpec(
            covariates=tuple(params.get("covariates", range(1, dataset.d + 1))),
            treatment=bool(params.get("treatment", with_treatment)),
            interactions=tuple(params.get("interactions", ())),
        )
    return DesignSpec(
        covariates=tuple(range(1, dataset.d + 1)), treatment=with_treatment
    )


def fit_hazard_model(
    dataset: SurvivalDataset, target: str, spec: LearnerSpec, seed: int = 0
) -> CoxHazardModel | RsfHazardModel:
    """Fit the event or censoring hazard according to a learner spec."""
    params = dict(spec.params)
    if spec.kind == "cox-breslow":
        design = _design_from_params(params, dataset, with_treatment=True)
        return fit_cox(dataset, target, design)
    if spec.kind == "random-survival-forest":
        return fit_rsf(
            dataset,
            target,
            n_trees=int(params.get("n_trees", 300)),
            mtry=params.get("mtry"),
            min_node=int(params.get("min_node", 15)),
            max_depth=params.get("max_depth"),
            bootstrap=bool(params.get("bootstrap", True)),
            seed=int(params.get("seed", seed)),
        )
    raise FitError(f"unknown hazard learner {spec.kind!r}")


def fit_propensity_model(
    dataset: SurvivalDataset,
    spec: LearnerSpec,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
) -> LogisticPropensityModel | ForestPropensityModel:
    """Fit the propensity score according to a learner spec."""
    params = dict(spec.params)
    if spec.kind == "logistic-glm":
        design = _design_from_params(params, dataset, with_treatment=False)
        if design.treatment or design.interactions:
            raise FitError("propensity design cannot include treatment terms")
        return fit_logistic(dataset, design, epsilon=epsilon)
    if spec.kind == "random-forest-classifier":
        return fit_forest_classifier(
            dataset,
            n_trees=int(params.get("n_trees", 300)),
            min_node=int(params.get("min_node", 15)),
            max_depth=params.get("max_depth"),
            seed=int(params.get("seed", seed)),
            epsilon=epsilon,
        )
    raise FitError(f"unknown propensity learner {spec.kind!r}")

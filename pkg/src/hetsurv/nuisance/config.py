"""Design-matrix specifications and learner-stack configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

__all__ = ["DesignSpec", "LearnerSpec", "LearnerStack", "parse_learner_stack"]


@dataclass(frozen=True)
class DesignSpec:
    """Columns of a model design matrix, in terms of 1-based covariate indices.

    The matrix is [X_j for j in covariates] + [A] (if ``treatment``) +
    [A * X_j for j in interactions].
    """

    covariates: tuple[int, ...]
    treatment: bool = False
    interactions: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariates", tuple(int(j) for j in self.covariates))
        object.__setattr__(
            self, "interactions", tuple(int(j) for j in self.interactions)
        )
        for j in (*self.covariates, *self.interactions):
            if j < 1:
                raise DataError("design indices are 1-based and must be >= 1")
        if self.interactions and not self.treatment:
            raise DataError("interaction terms require the treatment term")

    @property
    def n_params(self) -> int:
        return len(self.covariates) + int(self.treatment) + len(self.interactions)

    def labels(self) -> tuple[str, ...]:
        cols = [f"x{j}" for j in self.covariates]
        if self.treatment:
            cols.append("trt")
        cols.extend(f"trt:x{j}" for j in self.interactions)
        return tuple(cols)

    def matrix(self, covariates, treatment) -> np.ndarray:
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        d = x.shape[1]
        for j in (*self.covariates, *self.interactions):
            if j > d:
                raise DataError(f"design index {j} exceeds covariate dimension {d}")
        a = np.broadcast_to(
            np.asarray(treatment, dtype=float).reshape(-1), (x.shape[0],)
        )
        cols = [x[:, j - 1] for j in self.covariates]
        if self.treatment:
            cols.append(a)
        cols.extend(a * x[:, j - 1] for j in self.interactions)
        if not cols:
            return np.empty((x.shape[0], 0))
        return np.column_stack(cols)

    @classmethod
    def from_dict(cls, payload: dict) -> DesignSpec:
        try:
            return cls(
                covariates=tuple(payload.get("covariates", ())),
                treatment=bool(payload.get("treatment", False)),
                interactions=tuple(payload.get("interactions", ())),
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"invalid design specification: {exc}") from exc


_KNOWN_KINDS = {
    "event_model": ("cox-breslow", "random-survival-forest"),
    "censoring_model": ("cox-breslow", "random-survival-forest"),
    "propensity_model": ("logistic-glm", "random-forest-classifier"),
    "tau_l_regressor": ("kernel-smoother", "random-forest-regressor"),
    "xj_regressor": ("kernel-smoother", "random-forest-regressor"),
}


@dataclass(frozen=True)
class LearnerSpec:
    """One learner choice: a kind name plus keyword parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, payload: dict, role: str) -> LearnerSpec:
        if not isinstance(payload, dict) or "kind" not in payload:
            raise DataError(f"learner block '{role}' must be an object with 'kind'")
        kind = payload["kind"]
        allowed = _KNOWN_KINDS[role]
        if kind not in allowed:
            raise DataError(
                f"unknown kind {kind!r} for '{role}'; expected one of {allowed}"
            )
        params = payload.get("params", {})
        if not isinstance(params, dict):
            raise DataError(f"'params' of '{role}' must be an object")
        return cls(kind=kind, params=dict(params))


@dataclass(frozen=True)
class LearnerStack:
    """The five learner slots used by a cross-fitted estimation run."""

    event_model: LearnerSpec
    censoring_model: LearnerSpec
    propensity_model: LearnerSpec
    tau_l_regressor: LearnerSpec
    xj_regressor: LearnerSpec

    def to_dict(self) -> dict:
        return {
            role: {"kind": spec.kind, "params": dict(spec.params)}
            for role, spec in (
                ("event_model", self.event_model),
                ("censoring_model", self.censoring_model),
                ("propensity_model", self.propensity_model),
                ("tau_l_regressor", self.tau_l_regressor),
                ("xj_regressor", self.xj_regressor),
            )
        }


def default_learner_stack() -> LearnerStack:
    """Cox hazards with correct benchmark formulas plus kernel regressors."""
    return LearnerStack(
        event_model=LearnerSpec(
            "cox-breslow",
            {"covariates": [1, 2, 3, 4], "treatment": True, "interactions": [1, 2]},
        ),
        censoring_model=LearnerSpec(
            "cox-breslow", {"covariates": [1], "treatment": False}
        ),
        propensity_model=LearnerSpec("logistic-glm", {"covariates": [1, 2]}),
        tau_l_regressor=LearnerSpec("kernel-smoother", {}),
        xj_regressor=LearnerSpec("kernel-smoother", {}),
    )


def parse_learner_stack(payload: dict | None) -> LearnerStack:
    """Parse the CLI learner block, filling unspecified slots with defaults.

    The block has five optional entries (event_model, censoring_model,
    propensity_model, tau_l_regressor, xj_regressor), each {kind, params}.
    """
    base = default_learner_stack()
    if payload is None:
        return base
    if not isinstance(payload, dict):
        raise DataError("learner configuration must be a JSON object")
    unknown = set(payload) - set(_KNOWN_KINDS)
    if unknown:
        raise DataError(f"unknown learner block(s): {sorted(unknown)}")
    slots = {}
    for role in _KNOWN_KINDS:
        if role in payload:
            slots[role] = LearnerSpec.from_dict(payload[role], role)
        else:
            slots[role] = getattr(base, role)
    return LearnerStack(**slots)

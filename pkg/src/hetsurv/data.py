"""Datasets, CSV ingestion, fold planning, and the synthetic data generator.

The observed data are n i.i.d. records (follow-up time, event indicator,
treatment, covariates) under right censoring. The simulator draws from a
Weibull-Cox specification for both the event and censoring hazards with a
logistic treatment assignment, which is also the family the oracle knows in
closed form.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DataError
from .util import child_rng

__all__ = [
    "SurvivalDataset",
    "FoldPlan",
    "WeibullCoxModel",
    "LogitModel",
    "DgpConfig",
    "LatentTimes",
    "make_folds",
    "simulate",
    "inverse_transform_survival_time",
    "load_csv",
    "write_csv",
    "example_config",
]

def _squash_log_time(log_t: np.ndarray) -> np.ndarray:
    """Compress |log t| > 690 into double range, preserving order.

    Tiny shape exponents spread log-times far beyond what doubles can hold.
    A flat clip would collapse the tails into ties and destroy the rank
    information that hazard fitting relies on, so the tails are compressed
    by a strictly increasing map instead. Comparisons between any two times,
    and against any horizon inside (e^-690, e^690), match exact arithmetic.
    """
    x = np.asarray(log_t, dtype=float)
    excess = np.maximum(np.abs(x) - 690.0, 0.0)
    squashed = np.sign(x) * (690.0 + 1.2 * np.log1p(excess))
    return np.clip(np.where(np.abs(x) > 690.0, squashed, x), -707.0, 707.0)


@dataclass(frozen=True)
class SurvivalDataset:
    """Immutable container for right-censored survival data.

    Parameters
    ----------
    time : ndarray, shape (n,)
        Observed follow-up times, min(T, C). Non-negative and finite.
    event : ndarray, shape (n,)
        Event indicators, 1 if the event time was observed (T <= C).
    treatment : ndarray, shape (n,)
        Binary treatment assignments.
    covariates : ndarray, shape (n, d)
        Covariate matrix. Finite entries.
    covariate_names : tuple of str
        One name per covariate column, defaults to x1..xd.
    """

    time: np.ndarray
    event: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        time = np.ascontiguousarray(self.time, dtype=float)
        event = np.ascontiguousarray(self.event, dtype=np.int64)
        treatment = np.ascontiguousarray(self.treatment, dtype=np.int64)
        covariates = np.ascontiguousarray(self.covariates, dtype=float)
        if covariates.ndim != 2:
            raise DataError("covariates must be a 2-d array")
        n = covariates.shape[0]
        if time.shape != (n,) or event.shape != (n,) or treatment.shape != (n,):
            raise DataError("time, event, treatment, covariates must share length")
        if n == 0:
            raise DataError("dataset must contain at least one record")
        if not np.all(np.isfinite(time)) or np.any(time < 0.0):
            raise DataError("times must be finite and non-negative")
        if not np.all((event == 0) | (event == 1)):
            raise DataError("event indicators must be 0 or 1")
        if not np.all((treatment == 0) | (treatment == 1)):
            raise DataError("treatment indicators must be 0 or 1")
        if not np.all(np.isfinite(covariates)):
            raise DataError("covariates must be finite")
        names = tuple(self.covariate_names) or tuple(
            f"x{j}" for j in range(1, covariates.shape[1] + 1)
        )
        if len(names) != covariates.shape[1]:
            raise DataError("covariate_names length must match covariate count")
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "treatment", treatment)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def subset(self, indices) -> SurvivalDataset:
        """Row subset (used for fold splits); structural checks only."""
        idx = np.asarray(indices, dtype=np.int64)
        return SurvivalDataset(
            time=self.time[idx],
            event=self.event[idx],
            treatment=self.treatment[idx],
            covariates=self.covariates[idx],
            covariate_names=self.covariate_names,
        )

    def require_events_per_arm(self) -> None:
        """Raise unless both treatment arms contain an observed event.

        Hazard fitting is impossible otherwise, so estimation entry points
        call this before any learner sees the data.
        """
        for a in (0, 1):
            mask = self.treatment == a
            if not np.any(mask & (self.event == 1)):
                raise DataError(
                    f"no observed events in treatment arm {a}; cannot fit hazards"
                )


@dataclass(frozen=True)
class FoldPlan:
    """Partition of record indices into K validation folds.

    ``assignment[i]`` is the fold (1..K) whose validation set holds record i.
    ``inner``, when present, maps each fold k to a length-n array assigning
    every record outside fold k to an inner fold 1..K2 (records inside fold k
    carry 0). The inner partitions drive the nested cross-fitting pass.
    """

    n: int
    K: int
    assignment: np.ndarray
    inner: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        assignment = np.ascontiguousarray(self.assignment, dtype=np.int64)
        if assignment.shape != (self.n,):
            raise DataError("fold assignment must have one entry per record")
        counts = np.bincount(assignment, minlength=self.K + 1)
        if counts[0] != 0 or counts.size != self.K + 1 or np.any(counts[1:] == 0):
            raise DataError("fold labels must cover 1..K")
        if counts[1:].max() - counts[1:].min() > 1:
            raise DataError("fold sizes must differ by at most 1")
        object.__setattr__(self, "assignment", assignment)
        for k, inner_assignment in self.inner.items():
            inner_assignment = np.ascontiguousarray(inner_assignment, dtype=np.int64)
            held_out = assignment == k
            if np.any(inner_assignment[held_out] != 0):
                raise DataError("inner plan must mark the held-out fold with 0")
            comp = inner_assignment[~held_out]
            if comp.size and comp.min() < 1:
                raise DataError("inner plan must assign every complement record")
            ic = np.bincount(comp)[1:]
            if np.any(ic == 0) or (ic.size and ic.max() - ic.min() > 1):
                raise DataError("inner fold sizes must differ by at most 1")
            self.inner[k] = inner_assignment

    @property
    def inner_K(self) -> int | None:
        if not self.inner:
            return None
        first = next(iter(self.inner.values()))
        return int(first.max())

    def validation_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def training_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != k)

    def inner_validation_indices(self, k: int, j: int) -> np.ndarray:
        return np.flatnonzero(self.inner[k] == j)

    def inner_training_indices(self, k: int, j: int) -> np.ndarray:
        inner_assignment = self.inner[k]
        return np.flatnonzero((inner_assignment != 0) & (inner_assignment != j))


def make_folds(n: int, K: int, seed: int, inner_folds: int | None = None) -> FoldPlan:
    """Randomly partition {0..n-1} into K folds of near-equal size.

    Parameters
    ----------
    n : int
        Number of records.
    K : int
        Number of folds, 2 <= K <= n.
    seed : int
        Seed; the plan is deterministic given (n, K, seed, inner_folds).
    inner_folds : int, optional
        When given, additionally partition each fold's complement into this
        many inner folds for the nested pass.
    """
    if not 2 <= K <= n:
        raise DataError(f"fold count K={K} must satisfy 2 <= K <= n={n}")
    perm = child_rng(seed, 0).permutation(n)
    assignment = np.zeros(n, dtype=np.int64)
    sizes = np.full(K, n // K, dtype=np.int64)
    sizes[: n % K] += 1
    start = 0
    for k in range(K):
        assignment[perm[start : start + sizes[k]]] = k + 1
        start += sizes[k]
    inner: dict[int, np.ndarray] = {}
    if inner_folds is not None:
        min_comp = n - int(sizes.max())
        if not 2 <= inner_folds <= min_comp:
            raise DataError(
                f"inner fold count {inner_folds} must satisfy 2 <= K2 <= {min_comp}"
            )
        for k in range(1, K + 1):
            comp = np.flatnonzero(assignment != k)
            inner_perm = comp[child_rng(seed, k).permutation(comp.size)]
            inner_assignment = np.zeros(n, dtype=np.int64)
            inner_sizes = np.full(inner_folds, comp.size // inner_folds, dtype=np.int64)
            inner_sizes[: comp.size % inner_folds] += 1
            pos = 0
            for j in range(inner_folds):
                inner_assignment[inner_perm[pos : pos + inner_sizes[j]]] = j + 1
                pos += inner_sizes[j]
            inner[k] = inner_assignment
    return FoldPlan(n=n, K=K, assignment=assignment, inner=inner)


@dataclass(frozen=True)
class WeibullCoxModel:
    """Conditional cumulative hazard scale * t^shape * exp(linear predictor).

    The linear predictor is X beta + A (gamma0 + X gamma), so ``treatment``
    is the main treatment coefficient and ``interactions`` the
    treatment-by-covariate coefficients.
    """

    scale: float
    shape: float
    coef: np.ndarray
    treatment: float = 0.0
    interactions: np.ndarray | None = None

    def __post_init__(self) -> None:
        coef = np.ascontiguousarray(self.coef, dtype=float)
        if coef.ndim != 1:
            raise DataError("hazard coefficients must be a 1-d vector")
        inter = self.interactions
        inter = (
            np.zeros_like(coef)
            if inter is None
            else np.ascontiguousarray(inter, dtype=float)
        )
        if inter.shape != coef.shape:
            raise DataError("interaction coefficients must match covariate count")
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise DataError("hazard scale must be positive")
        if not (np.isfinite(self.shape) and self.shape > 0.0):
            raise DataError("hazard shape must be positive")
        if not (np.all(np.isfinite(coef)) and np.all(np.isfinite(inter))):
            raise DataError("hazard coefficients must be finite")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "shape", float(self.shape))
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "interactions", inter)

    @property
    def d(self) -> int:
        return self.coef.shape[0]

    def linear_predictor(self, covariates, treatment) -> np.ndarray:
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        a = np.asarray(treatment, dtype=float)
        return x @ self.coef + a * (self.treatment + x @ self.interactions)

    def cum_hazard(self, t, covariates, treatment) -> np.ndarray:
        lp = self.linear_predictor(covariates, treatment)
        return self.scale * np.asarray(t, dtype=float) ** self.shape * np.exp(lp)

    def survival(self, t, covariates, treatment) -> np.ndarray:
        return np.exp(-self.cum_hazard(t, covariates, treatment))

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "shape": self.shape,
            "coef": [float(c) for c in self.coef],
            "treatment": float(self.treatment),
            "interactions": [float(c) for c in self.interactions],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> WeibullCoxModel:
        try:
            return cls(
                scale=float(payload["scale"]),
                shape=float(payload["shape"]),
                coef=np.asarray(payload["coef"], dtype=float),
                treatment=float(payload.get("treatment", 0.0)),
                interactions=(
                    None
                    if payload.get("interactions") is None
                    else np.asarray(payload["interactions"], dtype=float)
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"invalid hazard specification: {exc}") from exc


@dataclass(frozen=True)
class LogitModel:
    """Treatment assignment model P(A=1 | X) = expit(intercept + X coef)."""

    intercept: float
    coef: np.ndarray

    def __post_init__(self) -> None:
        coef = np.ascontiguousarray(self.coef, dtype=float)
        if coef.ndim != 1 or not np.all(np.isfinite(coef)):
            raise DataError("propensity coefficients must be a finite 1-d vector")
        if not np.isfinite(self.intercept):
            raise DataError("propensity intercept must be finite")
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "coef", coef)

    def propensity(self, covariates) -> np.ndarray:
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        return expit(self.intercept + x @ self.coef)

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "coef": [float(c) for c in self.coef]}

    @classmethod
    def from_dict(cls, payload: dict) -> LogitModel:
        try:
            return cls(
                intercept=float(payload.get("intercept", 0.0)),
                coef=np.asarray(payload["coef"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"invalid propensity specification: {exc}") from exc


@dataclass(frozen=True)
class DgpConfig:
    """Full data-generating configuration: hazards, propensity, d, horizon."""

    d: int
    horizon: float
    outcome_hazard: WeibullCoxModel
    censoring_hazard: WeibullCoxModel | None
    propensity: LogitModel

    def __post_init__(self) -> None:
        if self.d < 1:
            raise DataError("covariate dimension must be at least 1")
        if not (np.isfinite(self.horizon) and self.horizon > 0.0):
            raise DataError("time horizon must be positive")
        for name, model in (
            ("outcome_hazard", self.outcome_hazard),
            ("censoring_hazard", self.censoring_hazard),
        ):
            if model is not None and model.d != self.d:
                raise DataError(f"{name} coefficient length must equal d={self.d}")
        if self.propensity.coef.shape[0] != self.d:
            raise DataError(f"propensity coefficient length must equal d={self.d}")

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "horizon": self.horizon,
            "outcome_hazard": self.outcome_hazard.to_dict(),
            "censoring_hazard": (
                None
                if self.censoring_hazard is None
                else self.censoring_hazard.to_dict()
            ),
            "propensity": self.propensity.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> DgpConfig:
        try:
            d = int(payload["d"])
            horizon = float(payload["horizon"])
            outcome = WeibullCoxModel.from_dict(payload["outcome_hazard"])
            censoring = payload.get("censoring_hazard")
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"invalid DGP configuration: {exc}") from exc
        return cls(
            d=d,
            horizon=horizon,
            outcome_hazard=outcome,
            censoring_hazard=(
                None if censoring is None else WeibullCoxModel.from_dict(censoring)
            ),
            propensity=LogitModel.from_dict(payload["propensity"]),
        )

    @classmethod
    def from_json(cls, path) -> DgpConfig:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read DGP configuration {path}: {exc}") from exc
        return cls.from_dict(payload)


def example_config() -> DgpConfig:
    """The benchmark simulation configuration used throughout the test suite."""
    return DgpConfig(
        d=4,
        horizon=10.0,
        outcome_hazard=WeibullCoxModel(
            scale=2.0,
            shape=0.0025,
            coef=np.array([-1.0, -1.0, -0.3, 0.1]),
            treatment=-2.0,
            interactions=np.array([0.5, 0.3, 0.0, 0.0]),
        ),
        censoring_hazard=WeibullCoxModel(
            scale=2.0,
            shape=0.00025,
            coef=np.array([-0.3, 0.0, 0.0, 0.0]),
        ),
        propensity=LogitModel(intercept=0.0, coef=np.array([0.3, 0.3, 0.0, 0.0])),
    )


def inverse_transform_survival_time(
    model: WeibullCoxModel, treatment, covariates, uniform_draw
) -> np.ndarray:
    """Solve scale * t^shape * exp(lp) = -log(U) for t.

    Computed in log-space; log-times beyond double range are compressed by
    an order-preserving squash rather than clipped flat (see
    ``_squash_log_time``).
    """
    u = np.asarray(uniform_draw, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise DataError("uniform draws must lie strictly inside (0, 1)")
    lp = model.linear_predictor(covariates, treatment)
    log_t = (np.log(-np.log(u)) - np.log(model.scale) - lp) / model.shape
    return np.exp(_squash_log_time(log_t))


@dataclass(frozen=True)
class LatentTimes:
    """Uncensored event and censoring times from the simulator."""

    event_time: np.ndarray
    censoring_time: np.ndarray


def simulate(
    config: DgpConfig, n: int, seed: int, return_latent: bool = False
) -> SurvivalDataset | tuple[SurvivalDataset, LatentTimes]:
    """Draw n records from the configured generating process.

    Draw order is fixed (covariates, treatment uniforms, event-time uniforms,
    censoring uniforms) so that datasets are reproducible given the seed.
    When ``censoring_hazard`` is null, censoring times are +infinity and all
    records are events.
    """
    if n < 1:
        raise DataError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, config.d))
    u_a = rng.uniform(size=n)
    a = (u_a < config.propensity.propensity(x)).astype(np.int64)
    # uniform() can return exactly 0; nudge into the open interval
    u_t = np.maximum(rng.uniform(size=n), 1e-300)
    t_event = inverse_transform_survival_time(config.outcome_hazard, a, x, u_t)
    if config.censoring_hazard is None:
        t_cens = np.full(n, np.inf)
    else:
        u_c = np.maximum(rng.uniform(size=n), 1e-300)
        t_cens = inverse_transform_survival_time(config.censoring_hazard, a, x, u_c)
    observed = np.minimum(t_event, t_cens)
    event = (t_event <= t_cens).astype(np.int64)
    dataset = SurvivalDataset(
        time=observed, event=event, treatment=a, covariates=x
    )
    if return_latent:
        return dataset, LatentTimes(event_time=t_event, censoring_time=t_cens)
    return dataset


def load_csv(
    path,
    time_col: str = "time",
    event_col: str = "event",
    treatment_col: str = "trt",
    covariate_cols: list[str] | None = None,
) -> SurvivalDataset:
    """Read a dataset from a headered CSV file.

    Covariate columns default to every column other than the time, event,
    and treatment columns, kept in file order. Parse and validation errors
    carry the offending 1-based data row and column name.
    """
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty; a header row is required") from None
        header = [h.strip() for h in header]
        for col in (time_col, event_col, treatment_col):
            if col not in header:
                raise DataError(f"missing column '{col}' in {path}")
        if covariate_cols is None:
            reserved = {time_col, event_col, treatment_col}
            covariate_cols = [h for h in header if h not in reserved]
        else:
            for col in covariate_cols:
                if col not in header:
                    raise DataError(f"missing column '{col}' in {path}")
        if not covariate_cols:
            raise DataError(f"no covariate columns found in {path}")
        col_index = {name: header.index(name) for name in header}
        wanted = [time_col, event_col, treatment_col, *covariate_cols]
        rows: list[list[float]] = []
        for row_number, raw in enumerate(reader, start=1):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) != len(header):
                raise DataError(
                    f"expected {len(header)} cells, found {len(raw)}", row=row_number
                )
            parsed = []
            for name in wanted:
                cell = raw[col_index[name]].strip()
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"non-numeric value {cell!r}", row=row_number, column=name
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path} contains no data rows")
    table = np.asarray(rows, dtype=float)
    time = table[:, 0]
    event = table[:, 1]
    treatment = table[:, 2]
    covariates = table[:, 3:]
    for row_number, value in enumerate(time, start=1):
        if not np.isfinite(value) or value < 0.0:
            raise DataError("time must be finite and non-negative",
                            row=row_number, column=time_col)
    for name, column, values in (
        (event_col, 1, event),
        (treatment_col, 2, treatment),
    ):
        for row_number, value in enumerate(values, start=1):
            if value not in (0.0, 1.0):
                raise DataError(f"value must be 0 or 1, found {value!r}",
                                row=row_number, column=name)
    return SurvivalDataset(
        time=time,
        event=event.astype(np.int64),
        treatment=treatment.astype(np.int64),
        covariates=covariates,
        covariate_names=tuple(covariate_cols),
    )


def write_csv(dataset: SurvivalDataset, path) -> None:
    """Write a dataset to CSV with round-trip-exact float formatting."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time", "event", "trt", *dataset.covariate_names])
        for i in range(dataset.n):
            writer.writerow(
                [
                    repr(float(dataset.time[i])),
                    int(dataset.event[i]),
                    int(dataset.treatment[i]),
                    *[repr(float(v)) for v in dataset.covariates[i]],
                ]
            )

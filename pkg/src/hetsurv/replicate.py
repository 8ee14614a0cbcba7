"""Simulation studies: repeated draws, estimation, and summary tables.

Each replication simulates a fresh dataset from one generating
configuration, runs the requested estimator, and records the point estimate
with its confidence interval. Aggregation mirrors the usual benchmarking
columns: bias, empirical coverage of the nominal 95% interval, the sampling
standard deviation, the mean reported standard error, and mean squared
error, all against a supplied truth value.

Method names follow the A-B(-CF) convention: the nuisance block
("correct" for the correctly specified Cox/logistic forms, "RF" for random
forests), the regression learner for the effect projections ("kernel" or
"RF"), and an optional -CF suffix for cross-fitting.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import DgpConfig, simulate
from .errors import DataError, DegenerateTargetError, FitError
from .estimators import TargetSpec, estimate, estimate_share_pair
from .nuisance.config import LearnerSpec, LearnerStack, default_learner_stack
from .util import child_rng

__all__ = [
    "PRESET_METHODS",
    "ReplicationRecord",
    "ReplicationSummary",
    "preset_stack",
    "run_replications",
    "write_summary_csv",
]

_FOREST_ROLES = {
    "event_model": "random-survival-forest",
    "censoring_model": "random-survival-forest",
    "propensity_model": "random-forest-classifier",
}

PRESET_METHODS = tuple(
    f"{a}-{b}{c}"
    for a in ("correct", "RF")
    for b in ("kernel", "RF")
    for c in ("", "-CF")
)


def preset_stack(method: str, params: dict | None = None) -> tuple[LearnerStack, bool]:
    """Resolve an A-B(-CF) method name to a learner stack and a CF flag.

    ``params`` optionally carries per-role parameter overrides, e.g.
    {"event_model": {"n_trees": 50}}.
    """
    if method not in PRESET_METHODS:
        raise DataError(
            f"unknown method {method!r}; expected one of {sorted(PRESET_METHODS)}"
        )
    params = params or {}
    name = method
    cross_fitted = name.endswith("-CF")
    if cross_fitted:
        name = name[: -len("-CF")]
    nuisance, regressor = name.split("-")
    base = default_learner_stack()
    slots = {}
    for role in ("event_model", "censoring_model", "propensity_model"):
        if nuisance == "RF":
            slots[role] = LearnerSpec(_FOREST_ROLES[role], dict(params.get(role, {})))
        else:
            spec = getattr(base, role)
            slots[role] = LearnerSpec(spec.kind, {**spec.params, **params.get(role, {})})
    reg_kind = "kernel-smoother" if regressor == "kernel" else "random-forest-regressor"
    for role in ("tau_l_regressor", "xj_regressor"):
        slots[role] = LearnerSpec(reg_kind, dict(params.get(role, {})))
    return LearnerStack(**slots), cross_fitted


@dataclass(frozen=True)
class ReplicationRecord:
    """One estimator run inside a study."""

    rep: int
    target: str
    point: float
    se: float
    ci: tuple[float, float]
    psi_point: float | None = None
    psi_ci: tuple[float, float] | None = None

    def covers(self, truth: float) -> bool:
        return self.ci[0] <= truth <= self.ci[1]


@dataclass(frozen=True)
class ReplicationSummary:
    """All records of one (method, n) cell plus its aggregate row."""

    method: str
    n: int
    target: str
    reps: int
    oracle_value: float | None
    records: tuple[ReplicationRecord, ...]
    zeta_records: tuple[ReplicationRecord, ...]
    failures: tuple[str, ...]

    def points(self) -> np.ndarray:
        return np.array([r.point for r in self.records])

    def table_row(self) -> dict:
        """One CSV row: n, method, bias, coverage, sd, mean_se, mse."""
        points = self.points()
        ses = np.array([r.se for r in self.records])
        row: dict = {"n": self.n, "method": self.method}
        if self.oracle_value is None or points.size == 0:
            row.update(bias=None, coverage=None, sd=None, mean_se=None, mse=None)
            return row
        truth = self.oracle_value
        row["bias"] = float(points.mean() - truth)
        row["coverage"] = float(
            np.mean([r.covers(truth) for r in self.records])
        )
        row["sd"] = float(points.std(ddof=1)) if points.size > 1 else 0.0
        row["mean_se"] = float(ses.mean())
        row["mse"] = float(np.mean((points - truth) ** 2))
        return row


def _one_replication(args: tuple) -> tuple[int, dict]:
    """Worker body; module-level so a process pool can pickle it."""
    config, spec, n, rep, study_seed, with_zeta = args
    data_seed = int(child_rng(study_seed, rep, 0).integers(0, 2**62))
    fit_seed = int(child_rng(study_seed, rep, 1).integers(0, 2**62))
    rep_spec = replace(spec, seed=fit_seed)
    out: dict = {"rep": rep}
    try:
        dataset = simulate(config, n, data_seed)
        if with_zeta:
            psi_report, zeta_report = estimate_share_pair(dataset, rep_spec)
            out["report"] = _record(rep, psi_report)
            out["zeta"] = _record(rep, zeta_report)
        else:
            out["report"] = _record(rep, estimate(dataset, rep_spec))
    except (DataError, DegenerateTargetError, FitError) as exc:
        out["error"] = f"rep {rep}: {exc}"
    return rep, out


def _record(rep: int, report) -> ReplicationRecord:
    return ReplicationRecord(
        rep=rep,
        target=report.target,
        point=report.point,
        se=report.se,
        ci=(float(report.ci[0]), float(report.ci[1])),
        psi_point=report.psi_point,
        psi_ci=report.psi_ci,
    )


def run_replications(
    config: DgpConfig,
    spec: TargetSpec,
    n: int,
    reps: int,
    oracle_value: float | None = None,
    method: str = "custom",
    seed: int = 0,
    workers: int = 1,
    with_zeta: bool | None = None,
    max_failure_share: float = 0.05,
) -> ReplicationSummary:
    """Run ``reps`` independent simulate-and-estimate rounds.

    Seeds derive from (seed, replication id), so results do not depend on
    worker scheduling; share targets also produce the logit-scale report
    from the same fits unless ``with_zeta`` is False. Failed replications
    are collected rather than raised, but more than ``max_failure_share``
    of them aborts the study.
    """
    if reps < 1:
        raise DataError("at least one replication is required")
    if with_zeta is None:
        with_zeta = spec.kind in ("psi_l", "zeta_l")
    jobs = [
        (config, spec, n, rep, seed, with_zeta) for rep in range(1, reps + 1)
    ]
    results: dict[int, dict] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, out in pool.map(_one_replication, jobs, chunksize=1):
                results[rep] = out
    else:
        for job in jobs:
            rep, out = _one_replication(job)
            results[rep] = out

    records = []
    zeta_records = []
    failures = []
    for rep in sorted(results):
        out = results[rep]
        if "error" in out:
            failures.append(out["error"])
            continue
        records.append(out["report"])
        if "zeta" in out:
            zeta_records.append(out["zeta"])
    if len(failures) > max_failure_share * reps:
        raise FitError(
            f"{len(failures)} of {reps} replications failed; first: {failures[0]}"
        )
    return ReplicationSummary(
        method=method,
        n=n,
        target=spec.kind,
        reps=reps,
        oracle_value=oracle_value,
        records=tuple(records),
        zeta_records=tuple(zeta_records),
        failures=tuple(failures),
    )


_CSV_COLUMNS = ("n", "method", "bias", "coverage", "sd", "mean_se", "mse")


def write_summary_csv(path: str, summaries: list[ReplicationSummary]) -> None:
    """One aggregate row per summary, in the standard benchmarking columns."""
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=_CSV_COLUMNS)
        writer.writeheader()
        for summary in summaries:
            row = summary.table_row()
            writer.writerow(
                {k: ("" if row[k] is None else row[k]) for k in _CSV_COLUMNS}
            )

"""Cross-fitted one-step estimation of the heterogeneity targets.

Every target follows the same recipe: fit nuisances on each fold's
complement, evaluate per-subject influence values on the held-out fold,
average, and estimate the sampling variance from the squared centered
influence values. The variance-share and projection-slope targets combine
two linear targets through the delta-method ratio influence function, and
the logit-scale share estimator applies a fold-local plug-in correction so
its back-transform always lands inside (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import SurvivalDataset, make_folds
from .eif import NuisanceBundle, eif_omega, eif_psi, phi_batch
from .errors import DataError, DegenerateTargetError, FitError
from .nuisance.cate import build_cate, fit_cate_projection, fit_covariate_mean
from .nuisance.config import LearnerStack, default_learner_stack
from .nuisance.hazard import fit_hazard_model, fit_propensity_model
from .util import canonical_json, child_rng

__all__ = [
    "TARGET_KINDS",
    "TargetSpec",
    "EstimateReport",
    "cross_fit_nuisances",
    "cross_fit_variance",
    "estimate",
    "estimate_theta_l",
    "estimate_theta_d",
    "estimate_psi_l",
    "estimate_zeta_l",
    "estimate_share_pair",
    "estimate_gamma_chi_omega",
]

TARGET_KINDS = (
    "theta_l",
    "theta_d",
    "psi_l",
    "zeta_l",
    "gamma_j",
    "chi_j",
    "omega_j",
)
_SUBSET_KINDS = ("theta_l", "psi_l", "zeta_l")
_PROJECTION_KINDS = ("gamma_j", "chi_j", "omega_j")
_NESTED_KINDS = ("theta_d", "psi_l", "zeta_l")

# chi below this fraction of the marginal variance counts as collinear
_CHI_FLOOR = 1e-12


@dataclass(frozen=True)
class TargetSpec:
    """What to estimate and how to cross-fit it.

    ``subset`` holds the 1-based covariate indices l for the variance
    targets, or the single index j for the projection targets. ``folds=1``
    disables cross-fitting (train and evaluate on the full sample), which
    exists for comparison studies and is not the inferential default.
    """

    kind: str
    horizon: float
    subset: tuple[int, ...] = ()
    estimand: str = "survival"
    folds: int = 10
    inner_folds: int = 5
    seed: int = 0
    learners: LearnerStack | None = None
    epsilon: float = 0.05
    fast_tau_d: bool = False

    def __post_init__(self) -> None:
        if self.kind not in TARGET_KINDS:
            raise DataError(f"unknown target kind {self.kind!r}")
        subset = tuple(int(j) for j in self.subset)
        object.__setattr__(self, "subset", subset)
        if any(j < 1 for j in subset):
            raise DataError("covariate indices are 1-based")
        if len(set(subset)) != len(subset):
            raise DataError("covariate subset contains duplicates")
        if self.kind in _SUBSET_KINDS and not subset:
            raise DataError(f"target {self.kind} requires a nonempty covariate subset")
        if self.kind in _PROJECTION_KINDS and len(subset) != 1:
            raise DataError(f"target {self.kind} requires exactly one covariate index")
        if self.kind == "theta_d" and subset:
            raise DataError("theta_d does not take a covariate subset")
        if not self.horizon > 0:
            raise DataError("horizon must be positive")
        if self.estimand not in ("survival", "rmst"):
            raise DataError(f"unknown estimand {self.estimand!r}")
        if self.folds < 1:
            raise DataError("fold count must be at least 1")
        if self.inner_folds < 2:
            raise DataError("inner fold count must be at least 2")
        if not 0.0 < self.epsilon < 0.5:
            raise DataError("epsilon must lie in (0, 0.5)")
        if self.learners is None:
            object.__setattr__(self, "learners", default_learner_stack())


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate with cross-fitted standard error and diagnostics.

    ``eif_values`` (centered, per subject in dataset order) and ``phi_table``
    (per-subject influence decomposition) are carried for diagnostics and
    never serialized.
    """

    target: str
    subset: tuple[int, ...]
    point: float
    se: float
    ci: tuple[float, float]
    statistic: float | None
    p_value: float | None
    folds: tuple[dict, ...]
    diagnostics: dict
    n: int
    psi_point: float | None = None
    psi_ci: tuple[float, float] | None = None
    eif_values: np.ndarray | None = field(default=None, repr=False, compare=False)
    phi_table: dict | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "subset": list(self.subset),
            "point": float(self.point),
            "se": float(self.se),
            "ci": [float(self.ci[0]), float(self.ci[1])],
            "statistic": None if self.statistic is None else float(self.statistic),
            "p_value": None if self.p_value is None else float(self.p_value),
            "folds": [dict(entry) for entry in self.folds],
            "diagnostics": self.diagnostics,
            "psi_point": None if self.psi_point is None else float(self.psi_point),
            "psi_ci": None
            if self.psi_ci is None
            else [float(self.psi_ci[0]), float(self.psi_ci[1])],
        }

    def to_json(self) -> bytes:
        return canonical_json(self.to_dict()).encode("utf-8")


def _expit(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _expit01(z: float) -> float:
    """Back-transform clamped into the open interval (0, 1)."""
    return min(max(_expit(z), 5e-324), 1.0 - 1e-16)


def _normal_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def _learner_seeds(seed: int, *key: int, count: int) -> list[int]:
    return [int(v) for v in child_rng(seed, *key).integers(0, 2**62, size=count)]


@dataclass
class _FoldFit:
    fold: int
    valid_idx: np.ndarray
    train_idx: np.ndarray
    bundle: NuisanceBundle
    tau_train: np.ndarray
    tau_l_train: np.ndarray | None = None
    tau_d: float | None = None


@dataclass
class _Run:
    """One cross-fitting pass: fold fits plus subject-order evaluations."""

    dataset: SurvivalDataset
    spec: TargetSpec
    fold_fits: list[_FoldFit]
    fold_of: np.ndarray
    phi: np.ndarray
    phi_cols: dict[str, np.ndarray]
    tau: np.ndarray
    tau_l: np.ndarray | None
    ej: np.ndarray | None
    truncated: int
    warnings: list[str]

    @property
    def n(self) -> int:
        return self.dataset.n

    def fold_slices(self) -> list[tuple[int, np.ndarray]]:
        return [(fit.fold, fit.valid_idx) for fit in self.fold_fits]

    def tau_d_per_subject(self) -> np.ndarray:
        out = np.empty(self.n)
        for fit in self.fold_fits:
            if fit.tau_d is None:
                raise FitError("internal: nested effect mean missing for a fold")
            out[fit.valid_idx] = fit.tau_d
        return out


def _fit_bundle(
    data: SurvivalDataset,
    spec: TargetSpec,
    seeds: list[int],
    subset: tuple[int, ...],
    with_projection: bool,
    with_mean: bool,
) -> tuple[NuisanceBundle, np.ndarray]:
    stack = spec.learners
    event = fit_hazard_model(data, "event", stack.event_model, seed=seeds[0])
    cens = fit_hazard_model(data, "censoring", stack.censoring_model, seed=seeds[1])
    prop = fit_propensity_model(
        data, stack.propensity_model, epsilon=spec.epsilon, seed=seeds[2]
    )
    cate = build_cate(event, spec.horizon, spec.estimand)
    tau_train = cate.tau(data.covariates)
    projection = None
    if with_projection:
        reg = stack.tau_l_regressor
        params = {"seed": seeds[3], **reg.params}
        projection = fit_cate_projection(
            data.covariates, tau_train, subset, reg.kind, **params
        )
    mean = None
    if with_mean:
        reg = stack.xj_regressor
        params = {"seed": seeds[4], **reg.params}
        mean = fit_covariate_mean(data.covariates, subset[0], reg.kind, **params)
    bundle = NuisanceBundle(
        event_hazard=event,
        censoring_hazard=cens,
        propensity_model=prop,
        cate=cate,
        cate_projection=projection,
        covariate_mean=mean,
        subset=subset,
    )
    return bundle, tau_train


def _crossfit(
    dataset: SurvivalDataset,
    spec: TargetSpec,
    need_projection: bool,
    need_mean: bool,
    need_tau_d: bool,
    need_train_projection: bool = False,
) -> _Run:
    dataset.require_events_per_arm()
    if spec.subset and max(spec.subset) > dataset.d:
        raise DataError(
            f"covariate subset {spec.subset} exceeds dimension d={dataset.d}"
        )
    n = dataset.n
    use_nested = need_tau_d and not spec.fast_tau_d and spec.folds > 1
    if spec.folds == 1:
        fold_members = [(1, np.arange(n), np.arange(n))]
        inner_plan = None
    else:
        plan = make_folds(
            n, spec.folds, spec.seed,
            inner_folds=spec.inner_folds if use_nested else None,
        )
        fold_members = [
            (k, plan.validation_indices(k), plan.training_indices(k))
            for k in range(1, spec.folds + 1)
        ]
        inner_plan = plan if use_nested else None

    fold_of = np.zeros(n, dtype=np.int64)
    phi_full = np.empty(n)
    phi_cols = {
        name: np.empty(n)
        for name in (
            "phi1", "phi0", "plug_in1", "plug_in0",
            "counting", "compensator", "inverse_weight",
        )
    }
    phi_cols["truncated"] = np.zeros(n, dtype=np.int64)
    tau_full = np.empty(n)
    tau_l_full = np.empty(n) if need_projection else None
    ej_full = np.empty(n) if need_mean else None
    truncated = 0
    warnings: list[str] = []
    fits: list[_FoldFit] = []

    for k, valid_idx, train_idx in fold_members:
        seeds = _learner_seeds(spec.seed, 1, k, count=5)
        train_data = dataset.subset(train_idx)
        try:
            bundle, tau_train = _fit_bundle(
                train_data, spec, seeds, spec.subset, need_projection, need_mean
            )
        except (FitError, DataError) as exc:
            raise FitError(f"fold {k}: {exc}") from exc
        valid_data = dataset.subset(valid_idx)
        batch = phi_batch(valid_data, bundle)
        fold_of[valid_idx] = k
        phi_full[valid_idx] = batch.phi
        for name in ("phi1", "phi0", "plug_in1", "plug_in0",
                     "counting", "compensator", "inverse_weight"):
            phi_cols[name][valid_idx] = getattr(batch, name)
        phi_cols["truncated"][valid_idx] = batch.truncated.astype(np.int64)
        truncated += batch.truncated_count
        tau_full[valid_idx] = bundle.cate.tau(valid_data.covariates)
        if need_projection:
            tau_l_full[valid_idx] = bundle.cate_projection.predict(
                valid_data.covariates
            )
        if need_mean:
            ej_full[valid_idx] = bundle.covariate_mean.predict(valid_data.covariates)
        fit = _FoldFit(
            fold=k,
            valid_idx=valid_idx,
            train_idx=train_idx,
            bundle=bundle,
            tau_train=tau_train,
        )
        if need_train_projection:
            fit.tau_l_train = bundle.cate_projection.predict(train_data.covariates)

        if need_tau_d:
            if use_nested:
                total = 0.0
                for j in range(1, spec.inner_folds + 1):
                    inner_train = dataset.subset(inner_plan.inner_training_indices(k, j))
                    inner_valid = dataset.subset(inner_plan.inner_validation_indices(k, j))
                    inner_seeds = _learner_seeds(spec.seed, 2, k, j, count=5)
                    try:
                        inner_bundle, _ = _fit_bundle(
                            inner_train, spec, inner_seeds, (), False, False
                        )
                    except (FitError, DataError) as exc:
                        raise FitError(f"fold {k} inner fold {j}: {exc}") from exc
                    inner_batch = phi_batch(inner_valid, inner_bundle)
                    total += float(inner_batch.phi.sum())
                    truncated += inner_batch.truncated_count
                fit.tau_d = total / train_idx.size
            elif spec.folds == 1:
                fit.tau_d = float(batch.phi.mean())
            else:
                train_batch = phi_batch(train_data, bundle)
                truncated += train_batch.truncated_count
                fit.tau_d = float(train_batch.phi.mean())
        fits.append(fit)

    return _Run(
        dataset=dataset,
        spec=spec,
        fold_fits=fits,
        fold_of=fold_of,
        phi=phi_full,
        phi_cols=phi_cols,
        tau=tau_full,
        tau_l=tau_l_full,
        ej=ej_full,
        truncated=truncated,
        warnings=warnings,
    )


def _run_flags(kind: str, for_zeta_train: bool = False) -> dict:
    return {
        "need_projection": kind in _SUBSET_KINDS or kind in _PROJECTION_KINDS,
        "need_mean": kind in _PROJECTION_KINDS,
        "need_tau_d": kind in _NESTED_KINDS,
        "need_train_projection": for_zeta_train,
    }


def cross_fit_nuisances(
    dataset: SurvivalDataset, spec: TargetSpec
) -> list[tuple[int, NuisanceBundle]]:
    """Fit the per-fold nuisance bundles without evaluating any target."""
    run = _crossfit(dataset, spec, **_run_flags(spec.kind, spec.kind == "zeta_l"))
    return [(fit.fold, fit.bundle) for fit in run.fold_fits]


def cross_fit_variance(groups) -> float:
    """Fold-size-weighted mean of per-fold mean squared influence values."""
    arrays = [np.asarray(g, dtype=float) for g in groups]
    total = sum(a.size for a in arrays)
    if total == 0:
        raise DataError("variance requires at least one influence value")
    return float(sum(np.square(a).sum() for a in arrays) / total)


def _phi_table(run: _Run) -> dict:
    table = {
        "index": np.arange(run.n),
        "fold": run.fold_of,
        "phi": run.phi,
    }
    table.update(run.phi_cols)
    table["tau"] = run.tau
    if run.tau_l is not None:
        table["tau_l"] = run.tau_l
    if run.ej is not None:
        table["xj_mean"] = run.ej
    return table


def _diagnostics(run: _Run, dropped: list[int] | None = None) -> dict:
    return {
        "truncated_weights": int(run.truncated),
        "dropped_folds": list(dropped or []),
        "learner_warnings": list(run.warnings),
    }


def _fold_groups(run: _Run, values: np.ndarray) -> list[np.ndarray]:
    return [values[idx] for _, idx in run.fold_slices()]


def _fold_entries(run: _Run, values: np.ndarray) -> tuple[dict, ...]:
    entries = []
    for k, idx in run.fold_slices():
        entries.append(
            {"fold": k, "n": int(idx.size), "estimate": float(values[idx].mean())}
        )
    return tuple(entries)


def _linear_report(
    run: _Run, kind: str, uncentered: np.ndarray
) -> EstimateReport:
    point = float(uncentered.mean())
    centered = uncentered - point
    sigma2 = cross_fit_variance(_fold_groups(run, centered))
    se = math.sqrt(sigma2 / run.n)
    return EstimateReport(
        target=kind,
        subset=run.spec.subset,
        point=point,
        se=se,
        ci=(point - 1.96 * se, point + 1.96 * se),
        statistic=None,
        p_value=None,
        folds=_fold_entries(run, uncentered),
        diagnostics=_diagnostics(run),
        n=run.n,
        eif_values=centered,
        phi_table=_phi_table(run),
    )


def _theta_l_values(run: _Run) -> np.ndarray:
    return (run.phi - run.tau_l) ** 2 - (run.phi - run.tau) ** 2


def _theta_d_values(run: _Run) -> np.ndarray:
    centers = run.tau_d_per_subject()
    return (run.phi - centers) ** 2 - (run.phi - run.tau) ** 2


def estimate_theta_l(dataset: SurvivalDataset, spec: TargetSpec) -> EstimateReport:
    """Cross-fitted one-step estimate of the variance drop for subset l."""
    if spec.kind != "theta_l":
        raise DataError(f"spec kind {spec.kind!r} does not match theta_l")
    run = _crossfit(dataset, spec, **_run_flags(spec.kind))
    return _linear_report(run, "theta_l", _theta_l_values(run))


def estimate_theta_d(dataset: SurvivalDataset, spec: TargetSpec) -> EstimateReport:
    """Cross-fitted one-step estimate of the total effect variance."""
    if spec.kind != "theta_d":
        raise DataError(f"spec kind {spec.kind!r} does not match theta_d")
    run = _crossfit(dataset, spec, **_run_flags(spec.kind))
    return _linear_report(run, "theta_d", _theta_d_values(run))


def _psi_pieces(run: _Run) -> tuple[np.ndarray, np.ndarray, float, float]:
    unc_l = _theta_l_values(run)
    unc_d = _theta_d_values(run)
    return unc_l, unc_d, float(unc_l.mean()), float(unc_d.mean())


def estimate_psi_l(dataset: SurvivalDataset, spec: TargetSpec) -> EstimateReport:
    """Variance share: ratio of the two one-step variance estimates."""
    if spec.kind != "psi_l":
        raise DataError(f"spec kind {spec.kind!r} does not match psi_l")
    run = _crossfit(dataset, spec, **_run_flags(spec.kind))
    return _psi_from_run(run)


def _psi_from_run(run: _Run) -> EstimateReport:
    unc_l, unc_d, theta_l, theta_d = _psi_pieces(run)
    if not theta_d > 0.0:
        raise DegenerateTargetError(
            f"total effect variance estimate {theta_d:.6g} is not positive; "
            "the share is undefined (consider the zeta_l or theta targets)"
        )
    point = theta_l / theta_d
    eif = eif_psi(unc_l, unc_d, theta_l, theta_d)
    sigma2 = cross_fit_variance(_fold_groups(run, eif))
    se = math.sqrt(sigma2 / run.n)
    entries = []
    for k, idx in run.fold_slices():
        mean_d = float(unc_d[idx].mean())
        entries.append(
            {
                "fold": k,
                "n": int(idx.size),
                "estimate": float(unc_l[idx].mean()) / mean_d if mean_d != 0 else None,
            }
        )
    return EstimateReport(
        target="psi_l",
        subset=run.spec.subset,
        point=point,
        se=se,
        ci=(point - 1.96 * se, point + 1.96 * se),
        statistic=None,
        p_value=None,
        folds=tuple(entries),
        diagnostics=_diagnostics(run),
        n=run.n,
        eif_values=eif,
        phi_table=_phi_table(run),
    )


def estimate_zeta_l(dataset: SurvivalDataset, spec: TargetSpec) -> EstimateReport:
    """Logit-scale share estimate whose back-transform stays inside (0, 1).

    Per fold: plug-in share from the training-side fitted effects, corrected
    by the held-out one-step component scaled to the logit derivative. Folds
    whose plug-in share falls outside (0, 1) are dropped with a warning.
    """
    if spec.kind != "zeta_l":
        raise DataError(f"spec kind {spec.kind!r} does not match zeta_l")
    run = _crossfit(dataset, spec, **_run_flags(spec.kind, for_zeta_train=True))
    return _zeta_from_run(run)


def _zeta_from_run(run: _Run) -> EstimateReport:
    unc_l, unc_d, theta_l_cf, theta_d_cf = _psi_pieces(run)
    if not theta_d_cf > 0.0:
        raise DegenerateTargetError(
            f"total effect variance estimate {theta_d_cf:.6g} is not positive; "
            "no share scale is identified"
        )

    kept: list[tuple[int, int, float]] = []
    dropped: list[int] = []
    drop_notes: list[str] = []
    entries = []
    for fit in run.fold_fits:
        idx = fit.valid_idx
        resid = fit.tau_train - fit.tau_l_train
        theta_l0 = float(np.mean(resid**2))
        theta_d0 = float(np.var(fit.tau_train))
        psi0 = theta_l0 / theta_d0 if theta_d0 > 0.0 else math.nan
        # the correction scale must survive in floating point as well
        scale0 = theta_d0 * psi0 * (1.0 - psi0) if 0.0 < psi0 < 1.0 else 0.0
        if not (0.0 < psi0 < 1.0 and scale0 > 0.0):
            dropped.append(fit.fold)
            drop_notes.append(
                f"fold {fit.fold}: plug-in share {psi0:.6g} outside (0, 1); dropped"
            )
            entries.append({"fold": fit.fold, "n": int(idx.size), "estimate": None})
            continue
        theta_lk = float(unc_l[idx].mean())
        theta_dk = float(unc_d[idx].mean())
        zeta_k = math.log(psi0 / (1.0 - psi0)) + (
            theta_lk - psi0 * theta_dk
        ) / scale0
        kept.append((fit.fold, int(idx.size), zeta_k))
        entries.append({"fold": fit.fold, "n": int(idx.size), "estimate": zeta_k})
    if len(dropped) > len(run.fold_fits) / 2:
        raise DegenerateTargetError(
            f"plug-in share outside (0, 1) on folds {dropped}; "
            "more than half the folds are unusable"
        )
    n_kept = sum(nk for _, nk, _ in kept)
    point = sum(nk * zk for _, nk, zk in kept) / n_kept
    if not math.isfinite(point):
        raise DegenerateTargetError(
            "logit-scale share estimate overflowed; the share is numerically "
            "degenerate on this sample"
        )
    # delta-method scale, kept away from 0 so the variance stays finite
    psi_back = _expit(point)
    scale = min(max(psi_back, 1e-12), 1.0 - 1e-12)
    eif = eif_psi(unc_l, unc_d, theta_l_cf, theta_d_cf) / (scale * (1.0 - scale))
    sigma2 = cross_fit_variance(_fold_groups(run, eif))
    se = math.sqrt(sigma2 / run.n)
    ci = (point - 1.96 * se, point + 1.96 * se)
    statistic = point / se if se > 0 else None
    diagnostics = _diagnostics(run, dropped)
    diagnostics["learner_warnings"].extend(drop_notes)
    return EstimateReport(
        target="zeta_l",
        subset=run.spec.subset,
        point=point,
        se=se,
        ci=ci,
        statistic=statistic,
        p_value=None if statistic is None else _normal_p(statistic),
        folds=tuple(entries),
        diagnostics=diagnostics,
        n=run.n,
        psi_point=_expit01(point),
        psi_ci=(_expit01(ci[0]), _expit01(ci[1])),
        eif_values=eif,
        phi_table=_phi_table(run),
    )


def estimate_share_pair(
    dataset: SurvivalDataset, spec: TargetSpec
) -> tuple[EstimateReport, EstimateReport]:
    """psi_l and zeta_l reports from a single cross-fitting pass.

    The nuisance fits are identical for the two share targets, so fitting
    once and reading both reports off the same run halves the cost of
    simulation studies that track the plain and logit-scale shares together.
    """
    if spec.kind not in ("psi_l", "zeta_l"):
        raise DataError(f"spec kind {spec.kind!r} is not a share target")
    run = _crossfit(dataset, spec, **_run_flags("zeta_l", for_zeta_train=True))
    return _psi_from_run(run), _zeta_from_run(run)


def estimate_gamma_chi_omega(
    dataset: SurvivalDataset, spec: TargetSpec
) -> EstimateReport:
    """Projection parameters for one covariate: Gamma, chi, or their ratio."""
    if spec.kind not in _PROJECTION_KINDS:
        raise DataError(f"spec kind {spec.kind!r} is not a projection target")
    run = _crossfit(dataset, spec, **_run_flags(spec.kind))
    j = spec.subset[0]
    resid = dataset.covariates[:, j - 1] - run.ej
    unc_gamma = (run.phi - run.tau_l) * resid
    unc_chi = resid**2
    gamma = float(unc_gamma.mean())
    chi = float(unc_chi.mean())
    marginal_var = float(np.var(dataset.covariates[:, j - 1]))
    if chi <= _CHI_FLOOR * marginal_var:
        raise DegenerateTargetError(
            f"conditional variance of covariate {j} is {chi:.6g}; the covariate "
            "is collinear with the others and the projection is undefined"
        )

    if spec.kind == "gamma_j":
        return _linear_report(run, "gamma_j", unc_gamma)
    if spec.kind == "chi_j":
        return _linear_report(run, "chi_j", unc_chi)

    point = gamma / chi
    eif = eif_omega(unc_gamma, unc_chi, gamma, chi)
    sigma2 = cross_fit_variance(_fold_groups(run, eif))
    se = math.sqrt(sigma2 / run.n)
    entries = []
    for k, idx in run.fold_slices():
        mean_c = float(unc_chi[idx].mean())
        entries.append(
            {
                "fold": k,
                "n": int(idx.size),
                "estimate": float(unc_gamma[idx].mean()) / mean_c
                if mean_c != 0
                else None,
            }
        )
    statistic = point / se if se > 0 else None
    return EstimateReport(
        target="omega_j",
        subset=spec.subset,
        point=point,
        se=se,
        ci=(point - 1.96 * se, point + 1.96 * se),
        statistic=statistic,
        p_value=None if statistic is None else _normal_p(statistic),
        folds=tuple(entries),
        diagnostics=_diagnostics(run),
        n=run.n,
        eif_values=eif,
        phi_table=_phi_table(run),
    )


def estimate(dataset: SurvivalDataset, spec: TargetSpec) -> EstimateReport:
    """Dispatch to the estimator matching the spec's target kind."""
    if spec.kind == "theta_l":
        return estimate_theta_l(dataset, spec)
    if spec.kind == "theta_d":
        return estimate_theta_d(dataset, spec)
    if spec.kind == "psi_l":
        return estimate_psi_l(dataset, spec)
    if spec.kind == "zeta_l":
        return estimate_zeta_l(dataset, spec)
    return estimate_gamma_chi_omega(dataset, spec)

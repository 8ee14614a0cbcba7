"""Per-subject influence-function evaluation.

The uncentered influence value phi = phi_1 - phi_0 combines, per arm, a
plug-in survival (or restricted-mean) term with an inverse-probability-
weighted martingale correction. All integrals are exact finite sums over the
jump points of the fitted step hazards. The per-target influence values for
the variance decomposition and projection parameters are simple arithmetic
in phi and the fitted projections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SurvivalDataset
from .errors import DataError, DegenerateTargetError, FitError
from .nuisance.cate import CateModel, CateProjection
from .nuisance.cox import CoxHazardModel

__all__ = [
    "Subject",
    "NuisanceBundle",
    "PhiValue",
    "PhiBatch",
    "weight_numerator",
    "phi",
    "phi_batch",
    "eif_theta",
    "eif_gamma",
    "eif_chi",
    "eif_psi",
    "eif_omega",
]


@dataclass(frozen=True)
class Subject:
    """One observed record."""

    time: float
    event: int
    treatment: int
    covariates: np.ndarray

    @classmethod
    def from_dataset(cls, dataset: SurvivalDataset, i: int) -> Subject:
        return cls(
            time=float(dataset.time[i]),
            event=int(dataset.event[i]),
            treatment=int(dataset.treatment[i]),
            covariates=dataset.covariates[i],
        )


@dataclass(frozen=True)
class NuisanceBundle:
    """Fitted nuisances for one training split.

    ``cate_projection`` (tau_l) and ``covariate_mean`` (E(X_j | X_-j)) are
    optional; operations that need them raise if absent. ``subset`` records
    the 1-based covariate indices the projection conditions away.
    """

    event_hazard: object
    censoring_hazard: object
    propensity_model: object
    cate: CateModel
    cate_projection: CateProjection | None = None
    covariate_mean: CateProjection | None = None
    subset: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for name in ("event_hazard", "censoring_hazard", "propensity_model", "cate"):
            if getattr(self, name) is None:
                raise FitError(f"nuisance bundle is missing {name}")
        if not self.cate.horizon > 0.0:
            raise FitError("bundle horizon must be positive")
        object.__setattr__(self, "subset", tuple(int(j) for j in self.subset))

    @property
    def horizon(self) -> float:
        return self.cate.horizon

    @property
    def estimand(self) -> str:
        return self.cate.estimand

    @property
    def epsilon(self) -> float:
        return float(self.propensity_model.epsilon)

    def own_propensity(self, treatment, covariates) -> np.ndarray:
        """Truncated pi-hat(A | X) for the subject's own arm."""
        p1 = self.propensity_model.propensity(covariates)
        a = np.asarray(treatment, dtype=float).reshape(-1)
        return np.where(a == 1.0, p1, 1.0 - p1)


@dataclass(frozen=True)
class PhiValue:
    """phi with its per-arm decomposition for diagnostics.

    ``counting`` and ``compensator`` are the martingale pieces of the
    subject's own arm; the opposite arm's martingale term is identically 0.
    """

    phi1: float
    phi0: float
    plug_in1: float
    plug_in0: float
    counting: float
    compensator: float
    inverse_weight: float
    treatment: int
    truncated: bool

    @property
    def phi(self) -> float:
        return self.phi1 - self.phi0


def _floored(values, epsilon: float):
    floored = np.maximum(values, epsilon)
    return floored, bool(np.any(values < epsilon))


def weight_numerator(u: float, subject: Subject, bundle: NuisanceBundle) -> float:
    """w(u): plug-in numerator over floored left-limit survival products."""
    t = bundle.horizon
    if not 0.0 <= u <= t:
        raise DataError("weight evaluation requires 0 <= u <= horizon")
    a, x = subject.treatment, subject.covariates
    event_haz = bundle.event_hazard.cum_hazard(a, x)
    cens_haz = bundle.censoring_hazard.cum_hazard(a, x)
    if bundle.estimand == "survival":
        numerator = float(event_haz.survival(t))
    else:
        numerator = float(event_haz.integrated_survival(u, t))
    eps = bundle.epsilon
    denom_event, _ = _floored(float(event_haz.survival_left(u)), eps)
    denom_cens, _ = _floored(float(cens_haz.survival_left(u)), eps)
    return numerator / float(denom_event * denom_cens)


def phi(subject: Subject, bundle: NuisanceBundle) -> PhiValue:
    """Evaluate phi_1, phi_0 and their decomposition for one subject.

    The martingale part exists only in the subject's own arm: counting term
    Delta * 1{time <= t} * w(time), compensator sum over the event hazard's
    jump points u_k <= min(t, time) of w(u_k) * jump size (a jump exactly at
    the observed time is included).

    Three hand-checked cases, each with unit own-arm propensity, no
    censoring mass, horizon 2, and an arm-1 event hazard with a single jump
    of 0.5 at u=1 (survival estimand):

    * subject in arm 0: the arm-1 martingale term vanishes, so
      phi1 = S(2|1,x) = exp(-0.5) exactly.
    * arm-1 subject with an observed event at 1.5: counting = w(1.5) = 1
      (numerator and left-limit denominator both exp(-0.5)), compensator
      = w(1)*0.5 = 0.5*exp(-0.5) (the left limit at 1 excludes the jump),
      so phi1 = exp(-0.5) - 1 + 0.5*exp(-0.5) = -0.0902040...
    * arm-1 subject censored at 0.5: no count and no jumps at or before
      0.5, so phi1 = exp(-0.5), the plug-in alone.
    """
    x = np.atleast_2d(subject.covariates)
    plug_in1 = float(bundle.cate.arm_value(1, x)[0])
    plug_in0 = float(bundle.cate.arm_value(0, x)[0])
    a = subject.treatment
    event_haz = bundle.event_hazard.cum_hazard(a, subject.covariates)
    cens_haz = bundle.censoring_hazard.cum_hazard(a, subject.covariates)
    pi_own = float(bundle.own_propensity([a], x)[0])
    counting, compensator, truncated = _martingale_parts(
        subject.time, subject.event, event_haz, cens_haz,
        bundle.horizon, bundle.estimand, bundle.epsilon,
    )

    martingale = (counting - compensator) / pi_own
    phi1 = plug_in1 - (martingale if a == 1 else 0.0)
    phi0 = plug_in0 - (martingale if a == 0 else 0.0)
    return PhiValue(
        phi1=phi1,
        phi0=phi0,
        plug_in1=plug_in1,
        plug_in0=plug_in0,
        counting=counting,
        compensator=compensator,
        inverse_weight=1.0 / pi_own,
        treatment=a,
        truncated=truncated,
    )


@dataclass(frozen=True)
class PhiBatch:
    """Vector phi decomposition over a dataset, plus truncation diagnostics."""

    phi1: np.ndarray
    phi0: np.ndarray
    plug_in1: np.ndarray
    plug_in0: np.ndarray
    counting: np.ndarray
    compensator: np.ndarray
    inverse_weight: np.ndarray
    truncated: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return self.phi1 - self.phi0

    @property
    def truncated_count(self) -> int:
        return int(np.sum(self.truncated))


def _martingale_parts(
    time: float,
    event: int,
    event_haz,
    cens_haz,
    horizon: float,
    estimand: str,
    eps: float,
) -> tuple[float, float, bool]:
    """Counting term, compensator sum, and truncation flag for one subject,
    over the subject's own-arm step hazards."""
    if estimand == "survival":
        surv_at_horizon = float(event_haz.survival(horizon))

        def numerator(u: np.ndarray) -> np.ndarray:
            return np.full(np.shape(u), surv_at_horizon)

    else:

        def numerator(u: np.ndarray) -> np.ndarray:
            return event_haz.integrated_survival(u, np.full(np.shape(u), horizon))

    truncated = False
    counting = 0.0
    if event == 1 and time <= horizon:
        d_event, f1 = _floored(event_haz.survival_left(time), eps)
        d_cens, f2 = _floored(cens_haz.survival_left(time), eps)
        truncated |= f1 or f2
        counting = float(numerator(np.asarray(time)) / (d_event * d_cens))

    jump_times, jump_sizes = event_haz.jumps_upto(min(horizon, time))
    compensator = 0.0
    if jump_times.size:
        d_event, f1 = _floored(event_haz.survival_left(jump_times), eps)
        d_cens, f2 = _floored(cens_haz.survival_left(jump_times), eps)
        truncated |= f1 or f2
        w = numerator(jump_times) / (d_event * d_cens)
        compensator = float(np.sum(w * jump_sizes))
    return counting, compensator, truncated


# subject-block size for the proportional-hazards fast path; bounds the
# (subjects x jump-points) work matrices
_PHI_BLOCK = 4096


def phi_batch(dataset: SurvivalDataset, bundle: NuisanceBundle) -> PhiBatch:
    """phi for every record of a dataset.

    When both hazards are proportional-hazards models the evaluation is
    vectorized over subjects sharing the baseline jump points; otherwise it
    falls back to per-subject evaluation. Both routes implement the same
    definitions and agree to floating-point accuracy.
    """
    if isinstance(bundle.event_hazard, CoxHazardModel) and isinstance(
        bundle.censoring_hazard, CoxHazardModel
    ):
        return _phi_batch_proportional(dataset, bundle)
    return _phi_batch_generic(dataset, bundle)


def _own_arm_steps(model, treatment, covariates) -> list:
    """Per-subject own-arm cumulative hazards, batched when the model can."""
    if hasattr(model, "cum_hazard_batch"):
        return model.cum_hazard_batch(treatment, covariates)
    return [
        model.cum_hazard(int(treatment[i]), covariates[i])
        for i in range(len(treatment))
    ]


def _phi_batch_generic(dataset: SurvivalDataset, bundle: NuisanceBundle) -> PhiBatch:
    n = dataset.n
    x, a = dataset.covariates, dataset.treatment
    plug_in1 = np.asarray(bundle.cate.arm_value(1, x), dtype=float)
    plug_in0 = np.asarray(bundle.cate.arm_value(0, x), dtype=float)
    pi_own = np.asarray(bundle.own_propensity(a, x), dtype=float)
    event_steps = _own_arm_steps(bundle.event_hazard, a, x)
    cens_steps = _own_arm_steps(bundle.censoring_hazard, a, x)

    counting = np.zeros(n)
    compensator = np.zeros(n)
    truncated = np.zeros(n, dtype=bool)
    for i in range(n):
        counting[i], compensator[i], truncated[i] = _martingale_parts(
            float(dataset.time[i]), int(dataset.event[i]),
            event_steps[i], cens_steps[i],
            bundle.horizon, bundle.estimand, bundle.epsilon,
        )

    martingale = (counting - compensator) / pi_own
    phi1 = plug_in1 - np.where(a == 1, martingale, 0.0)
    phi0 = plug_in0 - np.where(a == 0, martingale, 0.0)
    return PhiBatch(
        phi1=phi1,
        phi0=phi0,
        plug_in1=plug_in1,
        plug_in0=plug_in0,
        counting=counting,
        compensator=compensator,
        inverse_weight=1.0 / pi_own,
        truncated=truncated,
    )


def _phi_batch_proportional(
    dataset: SurvivalDataset, bundle: NuisanceBundle
) -> PhiBatch:
    t = bundle.horizon
    eps = bundle.epsilon
    event_model: CoxHazardModel = bundle.event_hazard
    cens_model: CoxHazardModel = bundle.censoring_hazard
    n = dataset.n
    x, a, obs_time = dataset.covariates, dataset.treatment, dataset.time

    plug_in1 = np.asarray(bundle.cate.arm_value(1, x), dtype=float)
    plug_in0 = np.asarray(bundle.cate.arm_value(0, x), dtype=float)
    pi_own = bundle.own_propensity(a, x)
    s_event = event_model.hazard_scales(a, x)
    s_cens = cens_model.hazard_scales(a, x)

    # shared baseline machinery, restricted to jumps inside [0, horizon]
    m = int(np.searchsorted(event_model.baseline_times, t, side="right"))
    jump_times = event_model.baseline_times[:m]
    jump_sizes = event_model.baseline_sizes[:m]
    base_cum = np.cumsum(jump_sizes)
    base_left = base_cum - jump_sizes  # baseline value strictly before each jump
    base_at_t = float(base_cum[-1]) if m else 0.0
    cens_cum = np.concatenate([[0.0], np.cumsum(cens_model.baseline_sizes)])
    cens_left_at_jumps = cens_cum[
        np.searchsorted(cens_model.baseline_times, jump_times, side="left")
    ]
    cens_left_at_obs = cens_cum[
        np.searchsorted(cens_model.baseline_times, obs_time, side="left")
    ]
    event_left_at_obs = np.concatenate([[0.0], base_cum])[
        np.searchsorted(jump_times, obs_time, side="left")
    ]
    # segment widths for the restricted-mean numerator H(u, t)
    if m:
        seg_widths = np.diff(np.concatenate([jump_times, [t]]))

    counting = np.zeros(n)
    compensator = np.zeros(n)
    truncated = np.zeros(n, dtype=bool)
    count_active = (dataset.event == 1) & (obs_time <= t)
    n_jumps_upto = np.searchsorted(jump_times, np.minimum(t, obs_time), side="right")

    for start in range(0, n, _PHI_BLOCK):
        rows = slice(start, min(start + _PHI_BLOCK, n))
        se = s_event[rows][:, None]
        sc = s_cens[rows][:, None]
        if m:
            mask = np.arange(m)[None, :] < n_jumps_upto[rows][:, None]
            surv_left = np.exp(-base_left[None, :] * se)
            cens_left = np.exp(-cens_left_at_jumps[None, :] * sc)
            truncated[rows] |= np.any(
                ((surv_left < eps) | (cens_left < eps)) & mask, axis=1
            )
            if bundle.estimand == "survival":
                numerators = np.exp(-base_at_t * s_event[rows])[:, None]
            else:
                # H(u_k, t) = suffix sums of width * survival on each segment
                seg_surv = np.exp(-base_cum[None, :] * se) * seg_widths[None, :]
                numerators = np.cumsum(seg_surv[:, ::-1], axis=1)[:, ::-1]
            w = numerators / (np.maximum(surv_left, eps) * np.maximum(cens_left, eps))
            compensator[rows] = np.sum(w * (jump_sizes[None, :] * se) * mask, axis=1)

        active = count_active[rows]
        if np.any(active):
            d_event = np.exp(-event_left_at_obs[rows] * s_event[rows])
            d_cens = np.exp(-cens_left_at_obs[rows] * s_cens[rows])
            truncated[rows] |= active & ((d_event < eps) | (d_cens < eps))
            if bundle.estimand == "survival":
                num_at_obs = np.exp(-base_at_t * s_event[rows])
            else:
                num_at_obs = np.zeros(d_event.shape[0])
                num_at_obs[active] = event_model.integrated_survival_upto(
                    t, a[rows][active], x[rows][active]
                ) - _integrated_survival_value(
                    event_model, obs_time[rows][active], s_event[rows][active]
                )
            counting[rows] = np.where(
                active,
                num_at_obs / (np.maximum(d_event, eps) * np.maximum(d_cens, eps)),
                0.0,
            )

    martingale = (counting - compensator) / pi_own
    phi1 = plug_in1 - np.where(a == 1, martingale, 0.0)
    phi0 = plug_in0 - np.where(a == 0, martingale, 0.0)
    return PhiBatch(
        phi1=phi1,
        phi0=phi0,
        plug_in1=plug_in1,
        plug_in0=plug_in0,
        counting=counting,
        compensator=compensator,
        inverse_weight=1.0 / pi_own,
        truncated=truncated,
    )


def _integrated_survival_value(
    model: CoxHazardModel, u: np.ndarray, scales: np.ndarray
) -> np.ndarray:
    """int_0^u S(v) dv for per-subject u under shared baseline jumps."""
    times = model.baseline_times
    cum = np.concatenate([[0.0], np.cumsum(model.baseline_sizes)])
    out = np.zeros(u.shape[0])
    # prefix integrals are subject-specific; evaluate per distinct segment
    idx = np.searchsorted(times, u, side="right")
    edges = np.concatenate([[0.0], times])
    for i in range(u.shape[0]):
        k = idx[i]
        widths = np.diff(np.concatenate([edges[: k + 1], [u[i]]]))
        out[i] = float(np.exp(-cum[: k + 1] * scales[i]) @ widths)
    return out


def eif_theta(
    subject: Subject,
    bundle: NuisanceBundle,
    tau_bar: float | None = None,
    target: str = "l",
) -> float:
    """Uncentered variance-component value for one subject.

    target='l': (phi - tau_l(x))^2 - (phi - tau(x))^2 with the fitted
    projection; target='d' replaces tau_l by the scalar ``tau_bar``.
    """
    value = phi(subject, bundle).phi
    x = np.atleast_2d(subject.covariates)
    tau = float(bundle.cate.tau(x)[0])
    if target == "l":
        if bundle.cate_projection is None:
            raise FitError("bundle has no fitted effect projection")
        center = float(bundle.cate_projection.predict(x)[0])
    elif target == "d":
        if tau_bar is None:
            raise DataError("target 'd' requires tau_bar")
        center = float(tau_bar)
    else:
        raise DataError(f"unknown theta target {target!r}")
    return (value - center) ** 2 - (value - tau) ** 2


def eif_gamma(subject: Subject, bundle: NuisanceBundle) -> float:
    """Uncentered projection-covariance value (phi - tau_j)(X_j - E-hat)."""
    if bundle.covariate_mean is None or bundle.cate_projection is None:
        raise FitError("bundle lacks the covariate-mean or effect projection")
    if len(bundle.subset) != 1:
        raise DataError("projection parameters require a single covariate index")
    j = bundle.subset[0]
    value = phi(subject, bundle).phi
    x = np.atleast_2d(subject.covariates)
    tau_j = float(bundle.cate_projection.predict(x)[0])
    residual = float(subject.covariates[j - 1] - bundle.covariate_mean.predict(x)[0])
    return (value - tau_j) * residual


def eif_chi(subject: Subject, bundle: NuisanceBundle) -> float:
    """Uncentered conditional-variance value (X_j - E-hat)^2."""
    if bundle.covariate_mean is None:
        raise FitError("bundle lacks the covariate-mean projection")
    if len(bundle.subset) != 1:
        raise DataError("projection parameters require a single covariate index")
    j = bundle.subset[0]
    x = np.atleast_2d(subject.covariates)
    residual = float(subject.covariates[j - 1] - bundle.covariate_mean.predict(x)[0])
    return residual**2


def eif_psi(theta_l_unc, theta_d_unc, theta_l: float, theta_d: float):
    """Influence value of the variance share: centered ratio combination."""
    if not theta_d > 0.0:
        raise DegenerateTargetError("total effect variance estimate is not positive")
    psi = theta_l / theta_d
    return (
        (np.asarray(theta_l_unc) - theta_l) - psi * (np.asarray(theta_d_unc) - theta_d)
    ) / theta_d


def eif_omega(gamma_unc, chi_unc, gamma: float, chi: float):
    """Influence value of the projection slope: centered ratio combination."""
    if not chi > 0.0:
        raise DegenerateTargetError("conditional covariate variance estimate is not positive")
    omega = gamma / chi
    return (
        (np.asarray(gamma_unc) - gamma) - omega * (np.asarray(chi_unc) - chi)
    ) / chi

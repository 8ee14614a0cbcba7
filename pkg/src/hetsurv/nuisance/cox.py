"""Cox proportional hazards with Breslow baseline and Breslow tie handling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import SurvivalDataset
from ..errors import FitError
from .config import DesignSpec
from .step import StepCumHazard

__all__ = ["CoxHazardModel", "fit_cox", "nelson_aalen"]

_GRAD_TOL = 1e-9
_MAX_ITER = 100
_MAX_HALVINGS = 40
_COEF_BOUND = 200.0


def _target_indicator(dataset: SurvivalDataset, target: str) -> np.ndarray:
    if target == "event":
        return dataset.event
    if target == "censoring":
        return 1 - dataset.event
    raise FitError(f"unknown hazard target {target!r}; use 'event' or 'censoring'")


@dataclass(frozen=True)
class _RiskSetSums:
    """Sorted times with suffix machinery for partial-likelihood terms."""

    time: np.ndarray       # ascending observed times
    design: np.ndarray     # rows aligned with time
    event_times: np.ndarray  # distinct target-event times, ascending
    event_counts: np.ndarray  # d_k per distinct event time
    event_design_sums: np.ndarray  # sum of design rows over events at t_k
    risk_start: np.ndarray  # first sorted index with time >= t_k

    @classmethod
    def build(cls, time, indicator, design) -> _RiskSetSums:
        order = np.argsort(time, kind="stable")
        time = time[order]
        indicator = indicator[order]
        design = design[order]
        ev_mask = indicator == 1
        ev_times, first = np.unique(time[ev_mask], return_index=True)
        p = design.shape[1]
        counts = np.zeros(ev_times.size, dtype=np.int64)
        dsums = np.zeros((ev_times.size, p))
        pos = np.searchsorted(ev_times, time[ev_mask])
        np.add.at(counts, pos, 1)
        if p:
            np.add.at(dsums, pos, design[ev_mask])
        risk_start = np.searchsorted(time, ev_times, side="left")
        return cls(
            time=time,
            design=design,
            event_times=ev_times,
            event_counts=counts,
            event_design_sums=dsums,
            risk_start=risk_start,
        )

    def log_likelihood_parts(self, beta: np.ndarray):
        """Breslow log partial likelihood with gradient and Hessian."""
        z = self.design
        n, p = z.shape
        eta = z @ beta if p else np.zeros(n)
        # guard against overflow from extreme trial steps
        w = np.exp(np.clip(eta, -500.0, 500.0))
        s0 = np.cumsum(w[::-1])[::-1]
        s1 = np.cumsum((z * w[:, None])[::-1], axis=0)[::-1] if p else None
        if p:
            zz = z[:, :, None] * z[:, None, :] * w[:, None, None]
            s2 = np.cumsum(zz[::-1], axis=0)[::-1]
        m0 = s0[self.risk_start]
        loglik = float(
            np.sum(self.event_design_sums @ beta) - np.sum(self.event_counts * np.log(m0))
        )
        if not p:
            return loglik, np.zeros(0), np.zeros((0, 0)), m0
        m1 = s1[self.risk_start]
        m2 = s2[self.risk_start]
        mean = m1 / m0[:, None]
        grad = self.event_design_sums.sum(axis=0) - (
            self.event_counts[:, None] * mean
        ).sum(axis=0)
        cov = m2 / m0[:, None, None] - mean[:, :, None] * mean[:, None, :]
        hess = -(self.event_counts[:, None, None] * cov).sum(axis=0)
        return loglik, grad, hess, m0

    def breslow_jumps(self, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        _, _, _, m0 = self.log_likelihood_parts(beta)
        return self.event_times, self.event_counts / m0


@dataclass(frozen=True)
class CoxHazardModel:
    """Fitted Cox model: baseline jump measure scaled by exp(design beta)."""

    design_spec: DesignSpec
    coef: np.ndarray
    baseline_times: np.ndarray
    baseline_sizes: np.ndarray
    target: str

    def linear_predictor(self, treatment, covariates) -> np.ndarray:
        z = self.design_spec.matrix(covariates, treatment)
        return z @ self.coef if self.coef.size else np.zeros(z.shape[0])

    def cum_hazard(self, treatment, covariates) -> StepCumHazard:
        """Predicted cumulative hazard for a single subject."""
        scale = float(self.hazard_scales(treatment, np.atleast_2d(covariates))[0])
        return StepCumHazard(self.baseline_times, self.baseline_sizes * scale)

    def hazard_scales(self, treatment, covariates) -> np.ndarray:
        """exp(lp) for a batch; hazards share the baseline jump times."""
        # clip matches the fit-time bound, keeping extreme predictions finite
        return np.exp(np.clip(self.linear_predictor(treatment, covariates), -500, 500))

    def _baseline_value(self, t: float) -> float:
        k = np.searchsorted(self.baseline_times, t, side="right")
        return float(np.sum(self.baseline_sizes[:k]))

    def survival_at(self, t: float, treatment, covariates) -> np.ndarray:
        """S(t | a, x) for a batch of subjects."""
        return np.exp(-self._baseline_value(t) * self.hazard_scales(treatment, covariates))

    def integrated_survival_upto(self, t: float, treatment, covariates) -> np.ndarray:
        """int_0^t S(u | a, x) du for a batch, exact over the baseline steps."""
        scales = self.hazard_scales(treatment, covariates)
        k = int(np.searchsorted(self.baseline_times, t, side="right"))
        edges = np.concatenate([[0.0], self.baseline_times[:k], [t]])
        widths = np.diff(edges)
        cum = np.concatenate([[0.0], np.cumsum(self.baseline_sizes[:k])])
        # rows: subjects, cols: inter-jump segments
        return np.exp(-np.outer(scales, cum)) @ widths


def fit_cox(
    dataset: SurvivalDataset, target: str = "event", design: DesignSpec | None = None
) -> CoxHazardModel:
    """Maximize the Breslow partial likelihood by damped Newton-Raphson.

    Parameters
    ----------
    dataset : SurvivalDataset
    target : str
        'event' fits the event hazard; 'censoring' flips the indicator.
    design : DesignSpec, optional
        Model terms. Defaults to all covariates plus a treatment main effect.

    Raises
    ------
    FitError
        No target events, rank-deficient design, singular information,
        diverging coefficients, or no convergence within 100 iterations.
    """
    indicator = _target_indicator(dataset, target)
    if not np.any(indicator == 1):
        raise FitError(f"no observed {target} occurrences; cannot fit hazard")
    if design is None:
        design = DesignSpec(
            covariates=tuple(range(1, dataset.d + 1)), treatment=True
        )
    z = design.matrix(dataset.covariates, dataset.treatment)
    p = z.shape[1]
    if p:
        centered = z - z.mean(axis=0)
        if np.linalg.matrix_rank(centered) < p:
            raise FitError("design matrix is rank-deficient after centering")
    if np.any(dataset.time[indicator == 1] <= 0.0):
        raise FitError("target occurrences at time 0 are not supported")
    sums = _RiskSetSums.build(dataset.time, indicator, z)
    beta = np.zeros(p)
    if p:
        loglik, grad, hess, _ = sums.log_likelihood_parts(beta)
        converged = bool(np.max(np.abs(grad)) <= _GRAD_TOL)
        for _ in range(_MAX_ITER):
            if converged:
                break
            try:
                step = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError as exc:
                raise FitError("singular information matrix") from exc
            # step-halving keeps each iterate on the likelihood ascent path
            scale_factor = 1.0
            for _ in range(_MAX_HALVINGS):
                candidate = beta + scale_factor * step
                cand_loglik, cand_grad, cand_hess, _ = sums.log_likelihood_parts(
                    candidate
                )
                if np.isfinite(cand_loglik) and cand_loglik >= loglik - 1e-12:
                    break
                scale_factor *= 0.5
            else:
                raise FitError("partial likelihood failed to increase")
            beta, loglik, grad, hess = candidate, cand_loglik, cand_grad, cand_hess
            if np.max(np.abs(beta)) > _COEF_BOUND:
                raise FitError("diverging coefficients in partial likelihood")
            converged = bool(np.max(np.abs(grad)) <= _GRAD_TOL)
        if not converged:
            raise FitError("partial likelihood did not converge in 100 iterations")
    times, sizes = sums.breslow_jumps(beta)
    return CoxHazardModel(
        design_spec=design,
        coef=beta,
        baseline_times=times,
        baseline_sizes=sizes,
        target=target,
    )


def nelson_aalen(dataset: SurvivalDataset, target: str = "event") -> StepCumHazard:
    """Nelson-Aalen estimator: jumps d_k / n_k at distinct target times."""
    indicator = _target_indicator(dataset, target)
    if not np.any(indicator == 1):
        raise FitError(f"no observed {target} occurrences")
    sums = _RiskSetSums.build(dataset.time, indicator, np.empty((dataset.n, 0)))
    times, sizes = sums.breslow_jumps(np.zeros(0))
    return StepCumHazard(times, sizes)

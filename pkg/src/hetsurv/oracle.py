"""Brute-force ground truth for the synthetic generating process.

Every target the estimators produce has a Monte Carlo counterpart here that
knows the generating model: the conditional effect in closed form, the
variance-of-effect measures by nested simulation, the projection parameters
through the independence structure of the covariates, and step-hazard
versions of the true nuisances for injecting into the estimation pipeline.

The conditional survival enters every computation only through
G(s) = exp(-b exp(s)) with b the baseline cumulative hazard at the horizon
(or its running integral for the restricted-mean scale), so the expensive
nested loops evaluate a precomputed lookup table of G on a fine grid instead
of exponentials, with the exact form kept alongside for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DgpConfig, WeibullCoxModel, _squash_log_time
from .errors import DataError, DegenerateTargetError, FitError
from .eif import NuisanceBundle
from .nuisance.cate import build_cate
from .nuisance.config import DesignSpec
from .nuisance.cox import CoxHazardModel
from .nuisance.propensity import LogisticPropensityModel
from .util import child_rng

__all__ = [
    "OracleResult",
    "ProjectionErrors",
    "oracle_tau",
    "oracle_ate",
    "oracle_theta_l",
    "oracle_theta_d",
    "oracle_psi",
    "oracle_gamma",
    "oracle_chi",
    "oracle_omega",
    "oracle_projection_errors",
    "oracle_nuisance_bundle",
]

_MIN_DRAWS = 10**4
_BATCH = 512
_TABLE_SIZE = 1 << 17
_GL_PANELS = 64
_GL_NODES = 12


@dataclass(frozen=True)
class OracleResult:
    """One Monte Carlo truth value with its own sampling uncertainty."""

    value: float
    mc_se: float
    n_draws: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "mc_se": float(self.mc_se),
            "n_draws": int(self.n_draws),
            "seed": int(self.seed),
        }


@dataclass(frozen=True)
class ProjectionErrors:
    """L2 norms of the two projection remainders, with the MC standard
    error of their difference."""

    norm_partial: float
    norm_linear: float
    mc_se: float
    n_draws: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "norm_partial": float(self.norm_partial),
            "norm_linear": float(self.norm_linear),
            "mc_se": float(self.mc_se),
            "n_draws": int(self.n_draws),
            "seed": int(self.seed),
        }


class _EffectCurve:
    """G(s) on a uniform grid with linear interpolation.

    survival: G(s) = exp(-b e^s) with b = scale * t^shape.
    rmst: G(s) = integral_0^t exp(-scale u^shape e^s) du by Gauss-Legendre
    panels, log-spaced in u so the near-zero region is resolved.
    """

    def __init__(self, model: WeibullCoxModel, horizon: float, estimand: str):
        self.horizon = float(horizon)
        self.estimand = estimand
        self.b = model.scale * self.horizon**model.shape
        self._model = model
        lo = -math.log(self.b) - 42.0
        hi = -math.log(self.b) + 4.6
        self.lo = lo
        self.step = (hi - lo) / (_TABLE_SIZE - 1)
        self.inv_step = 1.0 / self.step
        grid = lo + self.step * np.arange(_TABLE_SIZE)
        self.table = self.exact(grid)
        self._top = float(_TABLE_SIZE - 1) - 1e-9

    def _quad_nodes(self, panels: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
        edges = self.horizon * np.exp(
            np.linspace(math.log(1e-12), 0.0, panels + 1)
        )
        ref_x, ref_w = np.polynomial.legendre.leggauss(nodes)
        lo, hi = edges[:-1], edges[1:]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        u = (mid[:, None] + half[:, None] * ref_x[None, :]).ravel()
        w = (half[:, None] * ref_w[None, :]).ravel()
        return u, w

    def exact(self, s: np.ndarray) -> np.ndarray:
        """Direct evaluation, used to build the table and to audit it."""
        s = np.asarray(s, dtype=float)
        if self.estimand == "survival":
            return np.exp(-self.b * np.exp(s))
        u, w = self._quad_nodes(_GL_PANELS, _GL_NODES)
        base = self._model.scale * u**self._model.shape
        es = np.exp(s)
        out = np.zeros_like(es)
        for bq, wq in zip(base, w):
            out += wq * np.exp(-bq * es)
        return out

    def values(self, s: np.ndarray) -> np.ndarray:
        pos = (np.asarray(s, dtype=float) - self.lo) * self.inv_step
        np.clip(pos, 0.0, self._top, out=pos)
        idx = pos.astype(np.int64)
        frac = pos - idx
        return self.table[idx] * (1.0 - frac) + self.table[idx + 1] * frac


def _check_common(config: DgpConfig, t: float | None, estimand: str) -> float:
    if estimand not in ("survival", "rmst"):
        raise DataError(f"unknown estimand {estimand!r}")
    horizon = config.horizon if t is None else float(t)
    if not horizon > 0.0:
        raise DataError("horizon must be positive")
    return horizon


def _check_subset(config: DgpConfig, l: tuple[int, ...]) -> tuple[int, ...]:
    subset = tuple(int(j) for j in l)
    if not subset:
        raise DataError("covariate subset must be nonempty")
    if len(set(subset)) != len(subset):
        raise DataError("covariate subset contains duplicates")
    if any(j < 1 or j > config.d for j in subset):
        raise DataError(f"covariate subset {subset} outside 1..{config.d}")
    return subset


def _check_draws(n_draws: int) -> int:
    n = int(n_draws)
    if n < _MIN_DRAWS:
        raise DataError(f"at least {_MIN_DRAWS} draws required, got {n}")
    return n


def _arm_predictors(model: WeibullCoxModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s0 = x @ model.coef
    s1 = s0 + model.treatment + x @ model.interactions
    return s0, s1


def _tau_values(model: WeibullCoxModel, x: np.ndarray, curve: _EffectCurve) -> np.ndarray:
    s0, s1 = _arm_predictors(model, x)
    return curve.values(s1) - curve.values(s0)


def oracle_tau(
    config: DgpConfig,
    x,
    t: float | None = None,
    estimand: str = "survival",
    tol: float = 1e-8,
) -> float:
    """True conditional effect at one covariate point, in closed form.

    The survival contrast is exact; the restricted-mean contrast integrates
    the two closed-form survival curves by adaptive quadrature to absolute
    tolerance ``tol`` each.
    """
    horizon = _check_common(config, t, estimand)
    point = np.asarray(x, dtype=float).reshape(1, -1)
    if point.shape[1] != config.d:
        raise DataError(f"expected {config.d} covariates, got {point.shape[1]}")
    model = config.outcome_hazard
    s0, s1 = _arm_predictors(model, point)
    if estimand == "survival":
        b = model.scale * horizon**model.shape
        return float(np.exp(-b * np.exp(s1[0])) - np.exp(-b * np.exp(s0[0])))
    from scipy.integrate import quad

    def survival(u: float, es: float) -> float:
        return math.exp(-model.scale * u**model.shape * es)

    out = 0.0
    for sign, s in ((1.0, float(s1[0])), (-1.0, float(s0[0]))):
        es = math.exp(s)
        val, _ = quad(survival, 0.0, horizon, args=(es,), epsabs=tol, limit=200)
        out += sign * val
    return out


def _draw_covariates(config: DgpConfig, n: int, seed: int) -> np.ndarray:
    return child_rng(seed, 0).standard_normal((n, config.d))


def oracle_ate(
    config: DgpConfig,
    t: float | None = None,
    estimand: str = "survival",
    n_draws: int = 10**6,
    seed: int = 0,
) -> OracleResult:
    """True average effect E[tau(X)] by plain Monte Carlo."""
    horizon = _check_common(config, t, estimand)
    n = _check_draws(n_draws)
    curve = _EffectCurve(config.outcome_hazard, horizon, estimand)
    tau = _tau_values(config.outcome_hazard, _draw_covariates(config, n, seed), curve)
    return OracleResult(
        value=float(tau.mean()),
        mc_se=float(tau.std(ddof=1) / math.sqrt(n)),
        n_draws=n,
        seed=seed,
    )


@dataclass
class _VtePieces:
    """Per-draw ingredients of the variance-of-effect targets."""

    tau: np.ndarray
    tau_l: np.ndarray          # nested-MC estimate of E[tau | X_{-l}]
    inner_var: np.ndarray      # per-draw sampling variance of that estimate
    n_pairs: int

    @property
    def n(self) -> int:
        return self.tau.shape[0]

    def theta_terms(self) -> tuple[np.ndarray, np.ndarray, float, float]:
        """(e_i, d_i, theta_d, theta_l): per-draw pieces and point values."""
        tau_c = self.tau - self.tau.mean()
        e = tau_c**2
        theta_d = float(self.tau.var(ddof=1))
        noise = self.inner_var / self.n_pairs
        taul_c = self.tau_l - self.tau_l.mean()
        d = e - taul_c**2 + noise
        var_l = float(self.tau_l.var(ddof=1)) - float(noise.mean())
        theta_l = theta_d - var_l
        return e, d, theta_d, theta_l


def _vte_pieces(
    config: DgpConfig,
    l: tuple[int, ...],
    horizon: float,
    estimand: str,
    n_draws: int,
    inner_draws: int,
    seed: int,
) -> _VtePieces:
    # at least two antithetic pairs, so the per-draw inner variance exists
    if inner_draws < 4 or inner_draws % 2:
        raise DataError("inner draw count must be even and at least 4")
    model = config.outcome_hazard
    curve = _EffectCurve(model, horizon, estimand)
    x = _draw_covariates(config, n_draws, seed)
    tau = _tau_values(model, x, curve)

    cols = [j - 1 for j in l]
    coef1 = model.coef + model.interactions
    w0 = model.coef[cols]
    w1 = coef1[cols]
    x_rest = x.copy()
    x_rest[:, cols] = 0.0
    r0 = x_rest @ model.coef
    r1 = x_rest @ coef1 + model.treatment

    n_pairs = inner_draws // 2
    tau_l = np.empty(n_draws)
    inner_var = np.empty(n_draws)
    for b, start in enumerate(range(0, n_draws, _BATCH)):
        stop = min(start + _BATCH, n_draws)
        rows = stop - start
        z = child_rng(seed, 1, b).standard_normal((rows, n_pairs, len(cols)))
        p0 = z @ w0
        p1 = z @ w1
        c0 = r0[start:stop, None]
        c1 = r1[start:stop, None]
        # antithetic pair: the sign-flipped inner draw shares each z
        pair_mean = 0.5 * (
            curve.values(c1 + p1) - curve.values(c0 + p0)
            + curve.values(c1 - p1) - curve.values(c0 - p0)
        )
        tau_l[start:stop] = pair_mean.mean(axis=1)
        inner_var[start:stop] = pair_mean.var(axis=1, ddof=1)
    return _VtePieces(tau=tau, tau_l=tau_l, inner_var=inner_var, n_pairs=n_pairs)


def oracle_theta_d(
    config: DgpConfig,
    t: float | None = None,
    estimand: str = "survival",
    n_draws: int = 10**6,
    seed: int = 0,
) -> OracleResult:
    """True variance of the conditional effect, Var(tau(X))."""
    horizon = _check_common(config, t, estimand)
    n = _check_draws(n_draws)
    curve = _EffectCurve(config.outcome_hazard, horizon, estimand)
    tau = _tau_values(config.outcome_hazard, _draw_covariates(config, n, seed), curve)
    e = (tau - tau.mean()) ** 2
    return OracleResult(
        value=float(tau.var(ddof=1)),
        mc_se=float(e.std(ddof=1) / math.sqrt(n)),
        n_draws=n,
        seed=seed,
    )


def oracle_theta_l(
    config: DgpConfig,
    l: tuple[int, ...],
    t: float | None = None,
    estimand: str = "survival",
    n_draws: int = 10**6,
    inner_draws: int = 2000,
    seed: int = 0,
) -> OracleResult:
    """True Var(tau) - Var(E[tau | X_{-l}]) by nested Monte Carlo.

    The inner conditional mean is estimated from antithetic standard-normal
    redraws of the coordinates in l; its sampling noise would bias the
    variance of the outer sample upward, so the mean inner variance over
    pairs is subtracted out.
    """
    horizon = _check_common(config, t, estimand)
    n = _check_draws(n_draws)
    subset = _check_subset(config, l)
    pieces = _vte_pieces(config, subset, horizon, estimand, n, inner_draws, seed)
    _, d, _, theta_l = pieces.theta_terms()
    return OracleResult(
        value=theta_l,
        mc_se=float(d.std(ddof=1) / math.sqrt(n)),
        n_draws=n,
        seed=seed,
    )


def oracle_psi(
    config: DgpConfig,
    l: tuple[int, ...],
    t: float | None = None,
    estimand: str = "survival",
    n_draws: int = 10**6,
    inner_draws: int = 2000,
    seed: int = 0,
) -> OracleResult:
    """True variance share Theta_l / Theta_d with delta-method mc_se."""
    horizon = _check_common(config, t, estimand)
    n = _check_draws(n_draws)
    subset = _check_subset(config, l)
    pieces = _vte_pieces(config, subset, horizon, estimand, n, inner_draws, seed)
    e, d, theta_d, theta_l = pieces.theta_terms()
    if not theta_d > 0.0:
        raise DegenerateTargetError(
            f"effect variance estimate {theta_d:.6g} is not positive"
        )
    psi = theta_l / theta_d
    per_draw = (d - psi * e) / theta_d
    return OracleResult(
        value=psi,
        mc_se=float(per_draw.std(ddof=1) / math.sqrt(n)),
        n_draws=n,
        seed=seed,
    )


def _bplp_pieces(
    config: DgpConfig,
    j: int,
    horizon: float,
    estimand: str,
    n_draws: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    # independent standard-normal covariates make E[X_j | X_{-j}] = 0, so
    # the covariance term collapses to E[X_j tau] and the conditional
    # variance to the marginal second moment
    curve = _EffectCurve(config.outcome_hazard, horizon, estimand)
    x = _draw_covariates(config, n_draws, seed)
    tau = _tau_values(config.outcome_hazard, x, curve)
    xj = x[:, j - 1]
    return xj * tau, xj**2


def oracle_gamma(
    config: DgpConfig,
    j: int,
    t: float | None = None,
    estimand: str = "survival",
    n_draws: int = 10**6,
    seed: int = 0,
) -> OracleResult:
    """True projection numerator E[cov(X_j, tau | X_{-j})]."""
    horizon = _check_common(config, t, estimand)
    n = _check_draws(n_draws)
    (j,) = _check_subset(config, (j,))
    g, _ = _bplp_pieces(config, j, horizon, estimand, n, seed)
    return OracleResult(
        value=float(g.mean()),
        mc_se=float(g.std(ddof=1) / math.sqrt(n)),
        n_draws=n,
        seed=seed,
    )


def oracle_chi(
    config: DgpConfig,
    j: int,
    t: float | None = None,
    estimand: str = "survival",
    n_draws: int = 10**6,
    seed: int = 0,
) -> OracleResult:
    """True projection denominator E[var(X_j | X_{-j})]."""
    horizon = _check_common(config, t, estimand)
    n = _check_draws(n_draws)
    (j,) = _check_subset(config, (j,))
    _, c = _bplp_pieces(config, j, horizon, estimand, n, seed)
    return OracleResult(
        value=float(c.mean()),
        mc_se=float(c.std(ddof=1) / math.sqrt(n)),
        n_draws=n,
        seed=seed,
    )


def oracle_omega(
    config: DgpConfig,
    j: int,
    t: float | None = None,
    estimand: str = "survival",
    n_draws: int = 10**6,
    seed: int = 0,
) -> OracleResult:
    """True projection slope Gamma_j / chi_j with delta-method mc_se."""
    horizon = _check_common(config, t, estimand)
    n = _check_draws(n_draws)
    (j,) = _check_subset(config, (j,))
    g, c = _bplp_pieces(config, j, horizon, estimand, n, seed)
    chi = float(c.mean())
    if not chi > 0.0:
        raise DegenerateTargetError(f"conditional variance estimate {chi:.6g} is not positive")
    omega = float(g.mean()) / chi
    per_draw = (g - omega * c) / chi
    return OracleResult(
        value=omega,
        mc_se=float(per_draw.std(ddof=1) / math.sqrt(n)),
        n_draws=n,
        seed=seed,
    )


def oracle_projection_errors(
    config: DgpConfig,
    j: int,
    t: float | None = None,
    estimand: str = "survival",
    n_draws: int = 10**5,
    inner_draws: int = 2000,
    seed: int = 0,
) -> ProjectionErrors:
    """L2 remainders of the partially linear and fully linear projections.

    The partially linear projection keeps the slope at the true Omega_j and
    absorbs everything else into a free function of X_{-j}; the linear one
    is ordinary least squares of tau on (1, X). The returned mc_se is the
    delta-method standard error of the difference of the two norms.
    """
    horizon = _check_common(config, t, estimand)
    n = _check_draws(n_draws)
    (j,) = _check_subset(config, (j,))
    pieces = _vte_pieces(config, (j,), horizon, estimand, n, inner_draws, seed)
    x = _draw_covariates(config, n, seed)
    tau = pieces.tau
    xj = x[:, j - 1]
    chi = float(np.mean(xj**2))
    omega = float(np.mean(xj * tau)) / chi
    # E[(tau - omega X_j - tau_hat_l)^2] carries the inner sampling noise of
    # tau_hat_l additively; subtract its estimate
    partial_sq = (tau - omega * xj - pieces.tau_l) ** 2 - pieces.inner_var / pieces.n_pairs
    design = np.column_stack([np.ones(n), x])
    coef, *_ = np.linalg.lstsq(design, tau, rcond=None)
    linear_sq = (tau - design @ coef) ** 2
    norm_partial = math.sqrt(max(float(partial_sq.mean()), 0.0))
    norm_linear = math.sqrt(max(float(linear_sq.mean()), 0.0))
    per_draw = partial_sq / (2.0 * max(norm_partial, 1e-12)) - linear_sq / (
        2.0 * max(norm_linear, 1e-12)
    )
    return ProjectionErrors(
        norm_partial=norm_partial,
        norm_linear=norm_linear,
        mc_se=float(per_draw.std(ddof=1) / math.sqrt(n)),
        n_draws=n,
        seed=seed,
    )


class _GaussHermiteProjection:
    """E[tau | X_{-l}] by Gauss-Hermite integration over the l coordinates."""

    def __init__(
        self,
        model: WeibullCoxModel,
        subset: tuple[int, ...],
        curve: _EffectCurve,
        nodes: int = 80,
    ):
        self.model = model
        self.cols = [j - 1 for j in subset]
        self.curve = curve
        if len(self.cols) > 2:
            raise DataError("conditional-mean quadrature supports at most 2 dropped covariates")
        h_nodes, h_weights = np.polynomial.hermite.hermgauss(nodes)
        z = math.sqrt(2.0) * h_nodes
        w = h_weights / math.sqrt(math.pi)
        if len(self.cols) == 1:
            self.z = z.reshape(-1, 1)
            self.w = w
        else:
            za, zb = np.meshgrid(z, z, indexing="ij")
            self.z = np.column_stack([za.ravel(), zb.ravel()])
            self.w = np.outer(w, w).ravel()

    def predict(self, covariates) -> np.ndarray:
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        coef1 = self.model.coef + self.model.interactions
        w0 = self.model.coef[self.cols]
        w1 = coef1[self.cols]
        rest = x.copy()
        rest[:, self.cols] = 0.0
        r0 = rest @ self.model.coef
        r1 = rest @ coef1 + self.model.treatment
        s0 = r0[:, None] + self.z @ w0
        s1 = r1[:, None] + self.z @ w1
        tau_nodes = self.curve.values(s1) - self.curve.values(s0)
        return tau_nodes @ self.w


class _ConstantPredictor:
    """Constant conditional mean, exact for independent centered covariates."""

    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, covariates) -> np.ndarray:
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        return np.full(x.shape[0], self.value)


def _step_grid_model(
    model: WeibullCoxModel, horizon: float, cells: int, target: str
) -> CoxHazardModel:
    """Discretize a smooth conditional hazard onto an equal-mass step grid.

    Placing one jump per equal slice of baseline mass keeps every jump size
    at b/cells, so downstream martingale sums see a uniformly fine hazard
    regardless of how the generating process spreads mass over time. Jump
    locations are mapped through the simulator's own time transform so the
    grid lives on the same compressed time axis as simulated data.
    """
    b = model.scale * horizon**model.shape
    levels = b * np.arange(1, cells + 1) / cells
    log_raw = (np.log(levels) - math.log(model.scale)) / model.shape
    times = np.exp(_squash_log_time(log_raw))
    times[-1] = horizon  # exact mass at the horizon, no roundtrip error
    if not np.all(np.diff(times) > 0.0):
        raise FitError("hazard grid collapsed; increase cells or horizon")
    design = DesignSpec(
        covariates=tuple(range(1, model.d + 1)),
        treatment=True,
        interactions=tuple(range(1, model.d + 1)),
    )
    coef = np.concatenate([model.coef, [model.treatment], model.interactions])
    return CoxHazardModel(
        design_spec=design,
        coef=coef,
        baseline_times=times,
        baseline_sizes=np.full(cells, b / cells),
        target=target,
    )


def oracle_nuisance_bundle(
    config: DgpConfig,
    t: float | None = None,
    estimand: str = "survival",
    subset: tuple[int, ...] = (),
    cells: int = 2048,
    epsilon: float = 1e-6,
) -> NuisanceBundle:
    """True nuisances packaged for the estimation pipeline.

    Hazards become fine equal-mass step approximations of the generating
    model, the propensity keeps its exact coefficients, and when a subset is
    given the effect projection and conditional covariate mean are supplied
    by quadrature (exact up to grid error under the independent-normal
    covariate law).
    """
    horizon = _check_common(config, t, estimand)
    event = _step_grid_model(config.outcome_hazard, horizon, cells, "event")
    if config.censoring_hazard is None:
        censoring = CoxHazardModel(
            design_spec=DesignSpec(covariates=(), treatment=False),
            coef=np.zeros(0),
            baseline_times=np.zeros(0),
            baseline_sizes=np.zeros(0),
            target="censoring",
        )
    else:
        censoring = _step_grid_model(
            config.censoring_hazard, horizon, cells, "censoring"
        )
    propensity = LogisticPropensityModel(
        design_spec=DesignSpec(covariates=tuple(range(1, config.d + 1))),
        intercept=config.propensity.intercept,
        coef=config.propensity.coef,
        epsilon=epsilon,
    )
    projection = None
    mean = None
    if subset:
        subset = _check_subset(config, subset)
        curve = _EffectCurve(config.outcome_hazard, horizon, estimand)
        projection = _GaussHermiteProjection(config.outcome_hazard, subset, curve)
        if len(subset) == 1:
            mean = _ConstantPredictor(0.0)
    return NuisanceBundle(
        event_hazard=event,
        censoring_hazard=censoring,
        propensity_model=propensity,
        cate=build_cate(event, horizon, estimand),
        cate_projection=projection,
        covariate_mean=mean,
        subset=subset,
    )

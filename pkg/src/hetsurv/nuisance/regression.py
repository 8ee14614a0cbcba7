"""Generic regressors: Nadaraya-Watson kernel smoother and regression forest.

Used for the conditional effect projection (tau-hat regressed on the retained
covariates) and for the conditional covariate mean E(X_j | X_-j).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from ..errors import FitError
from ..util import child_rng

__all__ = ["KernelRegressor", "ForestRegressor", "fit_regressor"]

_BANDWIDTH_GRID = (0.5, 1.0, 2.0, 4.0, 8.0)
_CV_FOLDS = 5
# cap on rows*cols of a kernel-weight block, keeps memory modest
_BLOCK_BUDGET = 10_000_000


def _as_features(features) -> np.ndarray:
    z = np.asarray(features, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.ndim != 2:
        raise FitError("features must be a 2-d array")
    return z


@dataclass(frozen=True)
class KernelRegressor:
    """Nadaraya-Watson estimate with a Gaussian product kernel.

    Bandwidths are h_m = c * sd_m * n^(-1/(4+dim)) with the constant c picked
    from {0.5, 1, 2} by 5-fold cross-validation on squared error. Predictions
    are convex combinations of training targets, hence always inside
    [min(y), max(y)].
    """

    features: np.ndarray
    targets: np.ndarray
    bandwidths: np.ndarray
    cv_constant: float

    def predict(self, features) -> np.ndarray:
        q = _as_features(features)
        if q.shape[1] != self.features.shape[1]:
            raise FitError(
                f"query has {q.shape[1]} features, model expects "
                f"{self.features.shape[1]}"
            )
        if self.features.shape[1] == 0:
            return np.full(q.shape[0], float(np.mean(self.targets)))
        return _kernel_predict(self.features, self.targets, self.bandwidths, q)


def _kernel_predict(train, y, bandwidths, queries) -> np.ndarray:
    n = train.shape[0]
    out = np.empty(queries.shape[0])
    block = max(1, _BLOCK_BUDGET // max(n, 1))
    scaled_train = train / bandwidths
    for start in range(0, queries.shape[0], block):
        q = queries[start : start + block] / bandwidths
        # -0.5 * squared distance in bandwidth units, via the expansion
        logk = q @ scaled_train.T
        logk -= 0.5 * np.sum(scaled_train**2, axis=1)[None, :]
        logk -= 0.5 * np.sum(q**2, axis=1)[:, None]
        # log-sum-exp keeps the weights a proper convex combination even
        # when every kernel value underflows
        logk -= logk.max(axis=1, keepdims=True)
        w = np.exp(logk)
        out[start : start + block] = (w @ y) / w.sum(axis=1)
    return out


def _kernel_bandwidths(train: np.ndarray, c: float) -> np.ndarray:
    n, dim = train.shape
    sd = train.std(axis=0, ddof=1) if n > 1 else np.ones(dim)
    sd = np.where(sd > 0.0, sd, 1.0)  # constant feature: neutral bandwidth
    return c * sd * n ** (-1.0 / (4.0 + dim))


def _fit_kernel(features: np.ndarray, targets: np.ndarray, seed: int) -> KernelRegressor:
    n, dim = features.shape
    if dim == 0 or np.ptp(targets) == 0.0:
        return KernelRegressor(
            features=features,
            targets=targets,
            bandwidths=np.ones(dim),
            cv_constant=1.0,
        )
    folds = min(_CV_FOLDS, n)
    perm = child_rng(seed, 0).permutation(n)
    assignment = np.zeros(n, dtype=np.int64)
    sizes = np.full(folds, n // folds)
    sizes[: n % folds] += 1
    start = 0
    for k in range(folds):
        assignment[perm[start : start + sizes[k]]] = k
        start += sizes[k]
    best_c, best_score = None, np.inf
    for c in _BANDWIDTH_GRID:
        score = 0.0
        for k in range(folds):
            val = assignment == k
            h = _kernel_bandwidths(features[~val], c)
            pred = _kernel_predict(features[~val], targets[~val], h, features[val])
            score += float(np.sum((pred - targets[val]) ** 2))
        if score < best_score - 1e-12:
            best_c, best_score = c, score
    return KernelRegressor(
        features=features,
        targets=targets,
        bandwidths=_kernel_bandwidths(features, best_c),
        cv_constant=best_c,
    )


@dataclass(frozen=True)
class ForestRegressor:
    """Random-forest regression wrapper; constant fallback for dim 0."""

    forest: RandomForestRegressor | None
    constant: float
    dim: int

    def predict(self, features) -> np.ndarray:
        q = _as_features(features)
        if q.shape[1] != self.dim:
            raise FitError(f"query has {q.shape[1]} features, model expects {self.dim}")
        if self.forest is None:
            return np.full(q.shape[0], self.constant)
        return self.forest.predict(q)


def _fit_forest(
    features: np.ndarray,
    targets: np.ndarray,
    n_trees: int,
    min_node: int,
    max_depth: int | None,
    bootstrap: bool,
    seed: int,
) -> ForestRegressor:
    dim = features.shape[1]
    if dim == 0 or np.ptp(targets) == 0.0:
        return ForestRegressor(forest=None, constant=float(np.mean(targets)), dim=dim)
    forest = RandomForestRegressor(
        n_estimators=n_trees,
        min_samples_leaf=min_node,
        max_depth=max_depth,
        bootstrap=bootstrap,
        random_state=int(seed) % 2**32,  # sklearn rejects seeds >= 2**32
    )
    forest.fit(features, targets)
    return ForestRegressor(forest=forest, constant=float(np.mean(targets)), dim=dim)


def fit_regressor(
    features,
    targets,
    method: str = "kernel-smoother",
    *,
    n_trees: int = 300,
    min_node: int = 5,
    max_depth: int | None = None,
    bootstrap: bool = True,
    seed: int = 0,
):
    """Fit a regression of targets on features.

    Parameters
    ----------
    features : array-like, shape (n, dim)
        dim may be 0, in which case the fit is the constant mean.
    targets : array-like, shape (n,)
    method : str
        'kernel-smoother' or 'random-forest-regressor'.

    Raises
    ------
    FitError
        Fewer than 2 rows, non-finite inputs, or an unknown method.
    """
    z = _as_features(features)
    y = np.asarray(targets, dtype=float)
    if y.ndim != 1 or y.shape[0] != z.shape[0]:
        raise FitError("targets must be a 1-d array aligned with features")
    if z.shape[0] < 2:
        raise FitError("regression requires at least 2 rows")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
        raise FitError("regression inputs must be finite")
    if method == "kernel-smoother":
        return _fit_kernel(z, y, seed)
    if method == "random-forest-regressor":
        return _fit_forest(z, y, n_trees, min_node, max_depth, bootstrap, seed)
    raise FitError(f"unknown regression method {method!r}")

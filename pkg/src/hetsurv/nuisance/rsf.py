"""Random survival forest with log-rank splitting and Nelson-Aalen leaves.

Treatment enters as an ordinary feature (last column), so one forest serves
both arms of the effect model. Each tree is grown on a bootstrap sample;
splits maximize the standardized log-rank statistic over ``mtry`` randomly
chosen features with exhaustive threshold search; leaves carry the
Nelson-Aalen cumulative hazard of their in-leaf records. The ensemble
prediction is the pointwise mean of per-tree cumulative hazards, which is
again a step function on the grid of training event times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import SurvivalDataset
from ..errors import FitError
from ..util import child_rng
from .cox import _target_indicator
from .step import StepCumHazard

__all__ = ["RsfHazardModel", "fit_rsf"]


@dataclass
class _Tree:
    """Flat tree arrays; node 0 is the root."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    leaf_curve: list[np.ndarray | None] = field(default_factory=list)

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_curve.append(None)
        return len(self.feature) - 1

    def route(self, z: np.ndarray) -> np.ndarray:
        """Leaf node index for each row of z."""
        node = np.zeros(z.shape[0], dtype=np.int64)
        active = self.feature[0] >= 0 if self.feature else False
        while active:
            active = False
            for idx in range(len(self.feature)):
                f = self.feature[idx]
                if f < 0:
                    continue
                here = node == idx
                if not np.any(here):
                    continue
                goes_left = z[here, f] <= self.threshold[idx]
                node[here] = np.where(goes_left, self.left[idx], self.right[idx])
                active = True
        return node


def _nelson_aalen_on_grid(
    time: np.ndarray, indicator: np.ndarray, grid: np.ndarray
) -> np.ndarray:
    """Cumulative Nelson-Aalen values at the grid points."""
    ev_times, first = np.unique(time[indicator == 1], return_index=True)
    if ev_times.size == 0:
        return np.zeros(grid.size)
    d = np.zeros(ev_times.size)
    np.add.at(d, np.searchsorted(ev_times, time[indicator == 1]), 1.0)
    order = np.sort(time)
    at_risk = time.size - np.searchsorted(order, ev_times, side="left")
    cum = np.concatenate([[0.0], np.cumsum(d / at_risk)])
    return cum[np.searchsorted(ev_times, grid, side="right")]


def _best_split(
    time: np.ndarray,
    indicator: np.ndarray,
    z: np.ndarray,
    candidates: np.ndarray,
    min_node: int,
):
    """Exhaustive log-rank threshold search over the candidate features.

    Returns (feature, threshold) or None when no split keeps at least
    ``min_node`` events in both children.
    """
    ev_times = np.unique(time[indicator == 1])
    if ev_times.size == 0:
        return None
    n = time.size
    # risk/death membership per record and per node event time
    risk = time[:, None] >= ev_times[None, :]
    death = (indicator[:, None] == 1) & (time[:, None] == ev_times[None, :])
    n_k = risk.sum(axis=0).astype(float)
    d_k = death.sum(axis=0).astype(float)
    total_events = float(d_k.sum())
    best = None
    best_stat = 0.0
    for f in candidates:
        order = np.argsort(z[:, f], kind="stable")
        zs = z[order, f]
        distinct = np.flatnonzero(zs[:-1] < zs[1:])
        if distinct.size == 0:
            continue
        nl = np.cumsum(risk[order], axis=0, dtype=float)
        dl = np.cumsum(death[order], axis=0, dtype=float)
        events_left = np.cumsum(indicator[order] == 1, dtype=float)
        valid = (events_left[distinct] >= min_node) & (
            total_events - events_left[distinct] >= min_node
        )
        if not np.any(valid):
            continue
        rows = distinct[valid]
        frac = nl[rows] / n_k[None, :]
        num = (dl[rows] - d_k[None, :] * frac).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            var_terms = np.where(
                n_k[None, :] > 1.0,
                d_k[None, :] * frac * (1.0 - frac) * (n_k[None, :] - d_k[None, :])
                / np.maximum(n_k[None, :] - 1.0, 1.0),
                0.0,
            )
        var = var_terms.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            stat = np.where(var > 0.0, np.abs(num) / np.sqrt(var), 0.0)
        pick = int(np.argmax(stat))
        if stat[pick] > best_stat + 1e-12:
            best_stat = float(stat[pick])
            best = (int(f), float(zs[rows[pick]]))
    return best


def _grow(
    tree: _Tree,
    node: int,
    time: np.ndarray,
    indicator: np.ndarray,
    z: np.ndarray,
    grid: np.ndarray,
    mtry: int,
    min_node: int,
    max_depth: int | None,
    depth: int,
    rng: np.random.Generator,
) -> None:
    split = None
    if max_depth is None or depth < max_depth:
        d_feat = z.shape[1]
        candidates = rng.choice(d_feat, size=min(mtry, d_feat), replace=False)
        split = _best_split(time, indicator, z, candidates, min_node)
    if split is None:
        tree.leaf_curve[node] = _nelson_aalen_on_grid(time, indicator, grid)
        return
    f, threshold = split
    tree.feature[node] = f
    tree.threshold[node] = threshold
    mask = z[:, f] <= threshold
    left = tree.add_node()
    right = tree.add_node()
    tree.left[node] = left
    tree.right[node] = right
    # left child first, so node numbering is deterministic given the seed
    _grow(tree, left, time[mask], indicator[mask], z[mask], grid,
          mtry, min_node, max_depth, depth + 1, rng)
    _grow(tree, right, time[~mask], indicator[~mask], z[~mask], grid,
          mtry, min_node, max_depth, depth + 1, rng)


@dataclass(frozen=True)
class RsfHazardModel:
    """Fitted forest; predictions are mean cumulative hazards on ``grid``."""

    trees: tuple[_Tree, ...]
    grid: np.ndarray
    target: str

    def _features(self, treatment, covariates) -> np.ndarray:
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        a = np.broadcast_to(
            np.asarray(treatment, dtype=float).reshape(-1), (x.shape[0],)
        )
        return np.column_stack([x, a])

    def curve_values(self, treatment, covariates) -> np.ndarray:
        """(n_queries, grid size) matrix of mean cumulative hazards."""
        z = self._features(treatment, covariates)
        acc = np.zeros((z.shape[0], self.grid.size))
        for tree in self.trees:
            leaves = tree.route(z)
            for leaf in np.unique(leaves):
                acc[leaves == leaf] += tree.leaf_curve[leaf]
        acc /= len(self.trees)
        return acc

    def cum_hazard(self, treatment, covariates) -> StepCumHazard:
        values = self.curve_values(treatment, np.atleast_2d(covariates))[0]
        return _curve_to_step(self.grid, values)

    def cum_hazard_batch(self, treatment, covariates) -> list[StepCumHazard]:
        values = self.curve_values(treatment, covariates)
        return [_curve_to_step(self.grid, row) for row in values]

    def survival_at(self, t: float, treatment, covariates) -> np.ndarray:
        """S(t | a, x) for a batch of subjects."""
        values = self.curve_values(treatment, covariates)
        k = int(np.searchsorted(self.grid, t, side="right"))
        cum_at_t = values[:, k - 1] if k > 0 else np.zeros(values.shape[0])
        return np.exp(-cum_at_t)

    def integrated_survival_upto(self, t: float, treatment, covariates) -> np.ndarray:
        """int_0^t S(u | a, x) du for a batch, exact over the grid steps."""
        values = self.curve_values(treatment, covariates)
        k = int(np.searchsorted(self.grid, t, side="right"))
        edges = np.concatenate([[0.0], self.grid[:k], [t]])
        widths = np.diff(edges)
        cum = np.concatenate(
            [np.zeros((values.shape[0], 1)), values[:, :k]], axis=1
        )
        return np.exp(-cum) @ widths


def _curve_to_step(grid: np.ndarray, values: np.ndarray) -> StepCumHazard:
    sizes = np.diff(np.concatenate([[0.0], values]))
    keep = sizes > 0.0
    return StepCumHazard(grid[keep], sizes[keep])


def fit_rsf(
    dataset: SurvivalDataset,
    target: str = "event",
    *,
    n_trees: int = 300,
    mtry: int | None = None,
    min_node: int = 15,
    max_depth: int | None = None,
    bootstrap: bool = True,
    seed: int = 0,
) -> RsfHazardModel:
    """Grow a random survival forest for the event or censoring hazard.

    Parameters
    ----------
    dataset : SurvivalDataset
    target : str
        'event' or 'censoring' (flips the indicator).
    n_trees, mtry, min_node, max_depth, bootstrap, seed
        ``mtry`` defaults to ceil(sqrt(d_feat)) + 1 with d_feat = d + 1
        (treatment included); ``min_node`` counts events required in each
        child; ``max_depth=0`` forces stumps; ``bootstrap=False`` grows every
        tree on the full sample. Deterministic given seed.
    """
    indicator = _target_indicator(dataset, target)
    if not np.any(indicator == 1):
        raise FitError(f"no observed {target} occurrences; cannot fit forest")
    if min_node < 2:
        raise FitError("min_node must be at least 2 events")
    z = np.column_stack([dataset.covariates, dataset.treatment.astype(float)])
    d_feat = z.shape[1]
    if mtry is None:
        mtry = int(np.ceil(np.sqrt(d_feat))) + 1
    grid = np.unique(dataset.time[indicator == 1])
    if grid[0] <= 0.0:
        raise FitError("target occurrences at time 0 are not supported")
    trees = []
    n = dataset.n
    for t in range(n_trees):
        rng = child_rng(seed, t)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = _Tree()
        tree.add_node()
        _grow(
            tree,
            0,
            dataset.time[rows],
            indicator[rows],
            z[rows],
            grid,
            mtry,
            min_node,
            max_depth,
            0,
            rng,
        )
        trees.append(tree)
    return RsfHazardModel(trees=tuple(trees), grid=grid, target=target)

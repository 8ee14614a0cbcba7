"""Right-continuous step cumulative hazards.

Every fitted hazard in this package (Cox-Breslow, Nelson-Aalen, survival
forest ensembles, discretized closed-form hazards) is represented as a finite
collection of positive jumps. All downstream integrals (survival curves,
restricted-mean rectangles, martingale compensator sums) are exact finite
sums over these jumps, so there is no quadrature grid to tune.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

__all__ = ["StepCumHazard"]


@dataclass(frozen=True)
class StepCumHazard:
    """Cumulative hazard u -> sum of jump sizes at times <= u.

    Parameters
    ----------
    times : ndarray
        Strictly increasing jump locations, all > 0.
    sizes : ndarray
        Jump sizes, all > 0. May be empty (the zero hazard).

    Notes
    -----
    The function is right-continuous with left limits: ``value(u)`` includes a
    jump at u, ``left(u)`` does not. ``value(0)`` is always 0.
    """

    times: np.ndarray
    sizes: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _surv_int: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        sizes = np.asarray(self.sizes, dtype=float)
        if times.ndim != 1 or sizes.ndim != 1 or times.shape != sizes.shape:
            raise DataError("jump times and sizes must be 1-d arrays of equal length")
        if times.size:
            if not np.all(np.isfinite(times)) or not np.all(np.isfinite(sizes)):
                raise DataError("jump times and sizes must be finite")
            if times[0] <= 0.0:
                raise DataError("jump times must be strictly positive")
            if np.any(np.diff(times) <= 0.0):
                raise DataError("jump times must be strictly increasing")
            if np.any(sizes <= 0.0):
                raise DataError("jump sizes must be strictly positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(sizes)]))
        # prefix integrals of the survival curve over [0, times[k]) for the
        # rectangle sums used by the RMST plug-in and H(u, t)
        if times.size:
            surv = np.exp(-self._cum[:-1])  # survival on each segment [t_{k-1}, t_k)
            widths = np.diff(np.concatenate([[0.0], times]))
            prefix = np.concatenate([[0.0], np.cumsum(surv * widths)])
        else:
            prefix = np.zeros(1)
        object.__setattr__(self, "_surv_int", prefix)

    # -- point evaluation -------------------------------------------------

    def value(self, u) -> np.ndarray | float:
        """Lambda(u), right-continuous. u must be >= 0."""
        u = self._check_times(u)
        idx = np.searchsorted(self.times, u, side="right")
        return self._cum[idx]

    def left(self, u) -> np.ndarray | float:
        """Lambda(u-), the left limit. left(0) = 0."""
        u = self._check_times(u)
        idx = np.searchsorted(self.times, u, side="left")
        return self._cum[idx]

    def survival(self, u):
        """S(u) = exp(-Lambda(u))."""
        return np.exp(-self.value(u))

    def survival_left(self, u):
        """S(u-) = exp(-Lambda(u-))."""
        return np.exp(-self.left(u))

    # -- integrals ---------------------------------------------------------

    def integrated_survival(self, lo, hi) -> np.ndarray | float:
        """Exact rectangle sum of int_lo^hi S(v) dv for 0 <= lo <= hi.

        Both bounds may be arrays (broadcast together). The survival curve is
        piecewise constant so the integral is evaluated without quadrature.
        """
        lo = self._check_times(lo)
        hi = self._check_times(hi)
        if np.any(np.asarray(hi) < np.asarray(lo)):
            raise DataError("integration bounds must satisfy lo <= hi")
        return self._cum_survival_integral(hi) - self._cum_survival_integral(lo)

    def _cum_survival_integral(self, u):
        """I(u) = int_0^u S(v) dv, piecewise linear in u."""
        idx = np.searchsorted(self.times, u, side="right")
        seg_start = np.concatenate([[0.0], self.times])[idx]
        surv = np.exp(-self._cum[idx])
        return self._surv_int[idx] + (u - seg_start) * surv

    def jumps_upto(self, u: float) -> tuple[np.ndarray, np.ndarray]:
        """Jump times and sizes in (0, u], for compensator sums."""
        k = int(np.searchsorted(self.times, float(u), side="right"))
        return self.times[:k], self.sizes[:k]

    @staticmethod
    def _check_times(u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0.0):
            raise DataError("evaluation times must be non-negative")
        return u if u.ndim else float(u)

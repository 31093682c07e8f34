"""Censored-data primitives.

Weighted Kaplan-Meier and Nelson-Aalen estimators plus the right-continuous
step functions every model in this package predicts with. Weights are
arbitrary nonnegative reals so the same code serves unit samples, bootstrap
resamples and forest leaf masses.

Tie convention: at a tied time, events are counted before censorings, so a
subject censored at t is still at risk for the drop at t. Curve grids hold
event times only (censoring never creates a grid point).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SurvivalSample",
    "SurvivalCurve",
    "CumulativeHazard",
    "kaplan_meier",
    "nelson_aalen",
    "median_survival",
    "curve_eval",
    "to_arrays",
]


@dataclass(frozen=True)
class SurvivalSample:
    """One subject: observed time on the chosen axis and churn indicator.

    ``time`` is measured in whatever the model's axis is (game levels for the
    level model, seconds for the playtime model). ``event=True`` means the
    subject was observed to churn at ``time``; ``False`` means the
    observation window ended first (right censoring).
    """

    time: float
    event: bool

    def __post_init__(self):
        if not np.isfinite(self.time) or self.time < 0:
            raise ValueError(f"time must be finite and nonnegative, got {self.time!r}")


def to_arrays(samples):
    """Split a sequence of SurvivalSample into (times, events) arrays."""
    times = np.array([s.time for s in samples], dtype=np.float64)
    events = np.array([s.event for s in samples], dtype=bool)
    return times, events


def _step_eval(grid, values, t, before):
    """Right-continuous step evaluation: values[last grid index <= t]."""
    t_arr = np.asarray(t, dtype=np.float64)
    if len(grid) == 0:
        out = np.full(t_arr.shape, before)
    else:
        idx = np.searchsorted(grid, t_arr, side="right") - 1
        out = np.where(idx >= 0, values[np.maximum(idx, 0)], before)
    if np.ndim(t) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class SurvivalCurve:
    """Right-continuous survival step function S(t) on a sorted grid.

    S(t) = probs[last grid index <= t], and S(t) = 1 for t < grid[0].
    An empty grid encodes the constant curve S(t) = 1 (no observed events).
    """

    grid: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if grid.ndim != 1 or probs.shape != grid.shape:
            raise ValueError("grid and probs must be 1-D arrays of equal length")
        if grid.size:
            if not np.all(np.isfinite(grid)) or np.any(grid < 0):
                raise ValueError("grid times must be finite and nonnegative")
            if np.any(np.diff(grid) <= 0):
                raise ValueError("grid must be strictly increasing")
            if np.any(probs < 0.0) or np.any(probs > 1.0):
                raise ValueError("survival probabilities must lie in [0, 1]")
            if np.any(np.diff(probs) > 0):
                raise ValueError("survival probabilities must be nonincreasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "probs", probs)

    def evaluate(self, t):
        """S(t) for scalar or array t, right-continuous, 1.0 before grid[0]."""
        return _step_eval(self.grid, self.probs, t, before=1.0)


@dataclass(frozen=True)
class CumulativeHazard:
    """Nondecreasing cumulative hazard step function, 0 before grid[0]."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if grid.size:
            if not np.all(np.isfinite(grid)) or np.any(grid < 0):
                raise ValueError("grid times must be finite and nonnegative")
            if np.any(np.diff(grid) <= 0):
                raise ValueError("grid must be strictly increasing")
            if values[0] < 0 or np.any(np.diff(values) < 0):
                raise ValueError("cumulative hazard must be nonnegative and nondecreasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def evaluate(self, t):
        return _step_eval(self.grid, self.values, t, before=0.0)


def _validate_weighted(times, events, weights):
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("need at least one sample")
    if e.shape != t.shape:
        raise ValueError("times and events must have the same length")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise ValueError("times must be finite and nonnegative")
    if weights is None:
        w = np.ones_like(t)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != t.shape:
            raise ValueError("weights must match the sample count")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise ValueError("total weight must be positive")
    return t, e, w


def _event_steps(t, e, w):
    """Distinct event times with their event mass d_k and at-risk mass n_k.

    Only times carrying positive event weight become steps; n_k counts all
    weight with time >= t_k (censored subjects tied at t_k included).
    """
    order = np.argsort(t, kind="stable")
    ts, es, ws = t[order], e[order], w[order]
    at_risk = np.cumsum(ws[::-1])[::-1]
    starts = np.flatnonzero(np.r_[True, ts[1:] != ts[:-1]])
    d = np.add.reduceat(ws * es, starts)
    n = at_risk[starts]
    keep = d > 0
    return ts[starts][keep], d[keep], n[keep]


def kaplan_meier(times, events, weights=None) -> SurvivalCurve:
    """Weighted product-limit estimator of the survival function.

    S(t) = prod_{t_k <= t} (1 - d_k / n_k) over distinct event times t_k,
    where d_k is the event weight at t_k and n_k the weight at risk
    (time >= t_k). With all subjects censored the curve is constant 1.

    Raises ValueError on empty input, negative weights or zero total weight.
    """
    t, e, w = _validate_weighted(times, events, weights)
    grid, d, n = _event_steps(t, e, w)
    # d is summed per tie block while n comes from a running suffix sum, so
    # d/n can exceed 1 by one ulp when the whole remaining mass fails at once.
    factors = np.clip(1.0 - d / n, 0.0, 1.0)
    return SurvivalCurve(grid=grid, probs=np.cumprod(factors))


def nelson_aalen(times, events, weights=None) -> CumulativeHazard:
    """Weighted Nelson-Aalen estimator: Lambda(t) = sum_{t_k <= t} d_k / n_k."""
    t, e, w = _validate_weighted(times, events, weights)
    grid, d, n = _event_steps(t, e, w)
    return CumulativeHazard(grid=grid, values=np.cumsum(d / n))


def median_survival(curve: SurvivalCurve):
    """Smallest grid time with S(t) <= 0.5, or None when never reached.

    None is the loyal-player case: the predicted curve stays above one half
    over the whole observed range.
    """
    below = curve.probs <= 0.5
    if not below.any():
        return None
    return float(curve.grid[int(np.argmax(below))])


def curve_eval(curve: SurvivalCurve, t):
    """Right-continuous evaluation of a survival curve at scalar or array t."""
    return curve.evaluate(t)

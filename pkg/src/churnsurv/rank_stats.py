"""Linear rank statistics for censored responses.

The splitting machinery of a conditional inference survival tree works in
two steps. Censored responses are first turned into log-rank scores
a_i = event_i - Lambda(time_i), with Lambda the in-node weighted
Nelson-Aalen estimate; association between a covariate transform g and the
scores is then measured by the linear statistic

    T = sum_i w_i * g(x_i) * a_i

standardized by its exact mean and variance under the permutation null
(subject labels permuted with weight-proportional multiplicity):

    mu     = (sum_i w_i h_i) * abar
    sigma2 = w. / (w. - 1) * V_a * sum_i w_i (h_i - hbar)^2

where h_i = g(x_i), abar/hbar are weighted means, V_a the weighted variance
of the scores and w. the total weight. Variable selection uses g = identity
(optionally midranks); the split-point search uses g = indicator of the
left child, scanning every threshold between distinct covariate values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .survival import nelson_aalen

__all__ = [
    "DegenerateNodeError",
    "DegenerateCovariateError",
    "VariableTest",
    "SplitPoint",
    "logrank_scores",
    "linear_statistic",
    "conditional_moments",
    "variable_test",
    "best_split_point",
    "rank_transform",
]


class DegenerateNodeError(ValueError):
    """The node carries no event weight; log-rank scores are undefined."""


class DegenerateCovariateError(ValueError):
    """Constant covariate or constant scores: sigma2 = 0, no test possible."""


@dataclass(frozen=True)
class VariableTest:
    covariate_index: int
    statistic: float
    p_value: float


@dataclass(frozen=True)
class SplitPoint:
    covariate_index: int
    threshold: float
    standardized_statistic: float


def logrank_scores(times, events, weights=None) -> np.ndarray:
    """Log-rank score transformation a_i = event_i - Lambda(time_i).

    Lambda is the weighted Nelson-Aalen estimate over the node itself, so
    the weighted scores sum to zero by construction. Raises
    DegenerateNodeError when the node has no positive event weight (the
    caller must stop splitting there).
    """
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=np.float64)
    if not np.any(e & (w > 0)):
        raise DegenerateNodeError("no events with positive weight in node")
    cumhaz = nelson_aalen(t, e, w)
    return e.astype(np.float64) - cumhaz.evaluate(t)


def linear_statistic(scores, covariate, weights=None) -> float:
    """T = sum_i w_i * g(x_i) * a_i for an already-transformed covariate."""
    a = np.asarray(scores, dtype=np.float64)
    h = np.asarray(covariate, dtype=np.float64)
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=np.float64)
    if not (a.shape == h.shape == w.shape):
        raise ValueError("scores, covariate and weights must have equal length")
    return float(np.sum(w * h * a))


def _is_constant(x):
    return x.size == 0 or bool(np.all(x == x.flat[0]))


def conditional_moments(scores, covariate, weights=None):
    """Exact permutation-null mean and variance of the linear statistic.

    Returns (mu, sigma2). Raises DegenerateCovariateError when the covariate
    or the scores are constant on the positive-weight sample (sigma2 = 0),
    and ValueError when the total weight does not exceed 1.
    """
    a = np.asarray(scores, dtype=np.float64)
    h = np.asarray(covariate, dtype=np.float64)
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=np.float64)
    if not (a.shape == h.shape == w.shape):
        raise ValueError("scores, covariate and weights must have equal length")
    wsum = float(w.sum())
    if wsum <= 1:
        raise ValueError("total weight must exceed 1 for a variance estimate")
    active = w > 0
    if _is_constant(h[active]) or _is_constant(a[active]):
        raise DegenerateCovariateError("constant covariate or constant scores in node")
    abar = float(np.sum(w * a)) / wsum
    hbar = float(np.sum(w * h)) / wsum
    v_a = float(np.sum(w * (a - abar) ** 2)) / wsum
    v_h = float(np.sum(w * (h - hbar) ** 2))
    mu = float(np.sum(w * h)) * abar
    sigma2 = wsum / (wsum - 1.0) * v_a * v_h
    if sigma2 <= 0.0:
        raise DegenerateCovariateError("zero permutation variance")
    return mu, sigma2


def variable_test(scores, covariate, weights=None, covariate_index=0) -> VariableTest:
    """Two-sided standardized association test between covariate and scores.

    c = |T - mu| / sqrt(sigma2); p = 2 * (1 - Phi(c)) via the asymptotic
    normal approximation. Degenerate covariates are reported with p = 1 so
    they never win variable selection.
    """
    try:
        mu, sigma2 = conditional_moments(scores, covariate, weights)
    except DegenerateCovariateError:
        return VariableTest(covariate_index=covariate_index, statistic=0.0, p_value=1.0)
    t_stat = linear_statistic(scores, covariate, weights)
    c = abs(t_stat - mu) / math.sqrt(sigma2)
    p = math.erfc(c / math.sqrt(2.0))
    return VariableTest(covariate_index=covariate_index, statistic=c, p_value=p)


def rank_transform(covariate) -> np.ndarray:
    """Midranks of a covariate (ties averaged), for rank-based selection."""
    x = np.asarray(covariate, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    stops = np.r_[starts[1:], len(xs)]
    # a tie block spanning 1-based ranks [s+1, e] has midrank (s + e + 1) / 2
    block_rank = (starts + stops + 1) / 2.0
    out = np.empty_like(xs)
    out[order] = np.repeat(block_rank, stops - starts)
    return out


def best_split_point(scores, covariate, weights=None, min_child_weight=0.0,
                     covariate_index=0):
    """Exhaustive two-sample split search over one covariate.

    Every threshold between consecutive distinct covariate values (among
    positive-weight samples) is scored with the standardized statistic
    |T_left - mu| / sqrt(sigma2), g = indicator of the left group. Returns
    the maximizing SplitPoint among partitions where both children carry at
    least ``min_child_weight``, or None when no admissible partition exists.
    Ties in the statistic break toward the smallest threshold.
    """
    a = np.asarray(scores, dtype=np.float64)
    x = np.asarray(covariate, dtype=np.float64)
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=np.float64)
    if not (a.shape == x.shape == w.shape):
        raise ValueError("scores, covariate and weights must have equal length")
    active = w > 0
    xa, aa, wa = x[active], a[active], w[active]
    if xa.size < 2:
        return None
    order = np.argsort(xa, kind="stable")
    xs, as_, ws = xa[order], aa[order], wa[order]
    boundaries = np.flatnonzero(xs[1:] > xs[:-1])  # split after position i
    if boundaries.size == 0:
        return None  # constant covariate
    wtot = float(ws.sum())
    if wtot <= 1.0:
        return None
    cw = np.cumsum(ws)
    cwa = np.cumsum(ws * as_)
    w_left = cw[boundaries]
    t_left = cwa[boundaries]
    abar = cwa[-1] / wtot
    v_a = float(np.sum(ws * (as_ - abar) ** 2)) / wtot
    # indicator transform: sum w h = W_left, sum w (h - hbar)^2 = W_left (1 - W_left / wtot)
    v_h = w_left * (1.0 - w_left / wtot)
    sigma2 = wtot / (wtot - 1.0) * v_a * v_h
    mu = w_left * abar
    admissible = (
        (w_left >= min_child_weight)
        & (wtot - w_left >= min_child_weight)
        & (sigma2 > 0.0)
    )
    if not admissible.any():
        return None
    stat = np.full(boundaries.shape, -np.inf)
    ok = admissible
    stat[ok] = np.abs(t_left[ok] - mu[ok]) / np.sqrt(sigma2[ok])
    best = int(np.argmax(stat))  # first max: smallest threshold wins ties
    i = boundaries[best]
    threshold = 0.5 * (xs[i] + xs[i + 1])
    return SplitPoint(
        covariate_index=covariate_index,
        threshold=float(threshold),
        standardized_statistic=float(stat[best]),
    )

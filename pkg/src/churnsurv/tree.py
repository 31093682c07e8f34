"""Single conditional inference survival tree.

Recursive partitioning in two steps per node: pick the covariate with the
strongest standardized association to the log-rank scores (stop when the
smallest p-value misses alpha), then place the threshold by exhaustive
two-sample search on that covariate. Leaves store the weights of the
training samples that reached them; prediction returns those weights, and
the leaf curve is the weighted Kaplan-Meier of the leaf members.

Randomness (the per-node covariate draw) comes from a substream derived
from (seed, node path), so the grown structure does not depend on
traversal or scheduling order. That property is what lets the forest train
trees on any number of workers and still merge to an identical model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import rank_stats
from .rank_stats import DegenerateNodeError
from .survival import SurvivalCurve, kaplan_meier

__all__ = [
    "TreeParams",
    "InternalNode",
    "LeafNode",
    "SurvivalTree",
    "grow_tree",
    "tree_predict_weights",
    "tree_predict_curve",
    "apply_tree",
    "collect_leaves",
]

SELECTION_INFLUENCES = ("identity", "rank")


@dataclass(frozen=True)
class TreeParams:
    """Stopping and sampling parameters for a single tree.

    alpha: significance level for the variable-selection stop rule.
    min_node_weight: smallest node weight at which a split is attempted.
    min_child_weight: smallest admissible child weight.
    mtry: covariates drawn per node; None means ceil(sqrt(p)).
    bonferroni: multiply the smallest p-value by the number of covariates
        tested before comparing against alpha.
    selection_influence: covariate transform for variable selection,
        "identity" (default) or "rank" (midranks).
    """

    alpha: float = 0.05
    min_node_weight: float = 20.0
    min_child_weight: float = 7.0
    mtry: Optional[int] = None
    bonferroni: bool = False
    selection_influence: str = "identity"

    def validate(self, n_features: int) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.min_node_weight <= 0 or self.min_child_weight <= 0:
            raise ValueError("node and child weight minimums must be positive")
        if self.min_child_weight > self.min_node_weight:
            raise ValueError("min_child_weight must not exceed min_node_weight")
        if self.mtry is not None and not 1 <= self.mtry <= n_features:
            raise ValueError(f"mtry must be in [1, {n_features}]")
        if self.selection_influence not in SELECTION_INFLUENCES:
            raise ValueError(f"selection_influence must be one of {SELECTION_INFLUENCES}")

    def resolved_mtry(self, n_features: int) -> int:
        if self.mtry is not None:
            return self.mtry
        return int(math.ceil(math.sqrt(n_features)))


@dataclass
class InternalNode:
    covariate_index: int
    threshold: float
    left: "Node"
    right: "Node"


@dataclass
class LeafNode:
    """Positive-weight members of the leaf, sparse over the training rows."""

    sample_indices: np.ndarray  # int32, ascending
    sample_weights: np.ndarray  # float64, > 0


Node = Union[InternalNode, LeafNode]


@dataclass
class SurvivalTree:
    """A fitted tree plus references to the shared training responses."""

    params: TreeParams
    n_samples: int
    n_features: int
    root: Node
    times: np.ndarray = field(repr=False)
    events: np.ndarray = field(repr=False)


def _node_rng(seed: int, path: tuple) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=path))


def grow_tree(X, times, events, row_weights, params: TreeParams,
              rng_seed: int) -> SurvivalTree:
    """Grow one tree from a weighted view of the training data.

    Rows with zero weight are invisible to the tree but keep their index in
    the leaf weight vectors, so forests can pool leaves by plain summation.
    """
    X = np.asarray(X, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    w0 = np.asarray(row_weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("covariate matrix must be 2-D with at least one column")
    n, p = X.shape
    if not (times.shape == events.shape == w0.shape == (n,)):
        raise ValueError("times, events and row_weights must match the row count")
    if np.any(w0 < 0) or not np.any(w0 > 0):
        raise ValueError("row weights must be nonnegative with positive total")
    if not np.all(np.isfinite(X)):
        raise ValueError("covariates must be finite")
    params.validate(p)
    mtry = params.resolved_mtry(p)

    def make_leaf(weights):
        idx = np.flatnonzero(weights > 0).astype(np.int32)
        return LeafNode(sample_indices=idx, sample_weights=weights[idx].copy())

    def grow(weights, path):
        active = weights > 0
        node_weight = float(weights[active].sum())
        n_events = int(np.count_nonzero(events & active))
        if node_weight < params.min_node_weight or n_events < 2:
            return make_leaf(weights)
        try:
            scores = rank_stats.logrank_scores(
                times[active], events[active], weights[active]
            )
        except DegenerateNodeError:
            return make_leaf(weights)
        rng = _node_rng(rng_seed, path)
        drawn = np.sort(rng.choice(p, size=mtry, replace=False))
        w_act = weights[active]
        best = None
        n_tested = 0
        for j in drawn:
            cov = X[active, j]
            if params.selection_influence == "rank":
                cov = rank_stats.rank_transform(cov)
            test = rank_stats.variable_test(scores, cov, w_act, covariate_index=int(j))
            if test.p_value < 1.0:
                n_tested += 1
            if best is None or test.p_value < best.p_value:
                best = test
        if best is None:
            return make_leaf(weights)
        p_min = best.p_value
        if params.bonferroni and n_tested > 0:
            p_min = min(1.0, p_min * n_tested)
        if p_min > params.alpha:
            return make_leaf(weights)
        split = rank_stats.best_split_point(
            scores,
            X[active, best.covariate_index],
            w_act,
            min_child_weight=params.min_child_weight,
            covariate_index=best.covariate_index,
        )
        if split is None:
            return make_leaf(weights)
        go_left = X[:, split.covariate_index] <= split.threshold
        left_w = np.where(go_left, weights, 0.0)
        right_w = np.where(go_left, 0.0, weights)
        return InternalNode(
            covariate_index=split.covariate_index,
            threshold=split.threshold,
            left=grow(left_w, path + (0,)),
            right=grow(right_w, path + (1,)),
        )

    root = grow(w0.copy(), ())
    return SurvivalTree(
        params=params, n_samples=n, n_features=p, root=root,
        times=times, events=events,
    )


def _route(root: Node, x: np.ndarray) -> LeafNode:
    node = root
    while isinstance(node, InternalNode):
        node = node.left if x[node.covariate_index] <= node.threshold else node.right
    return node


def tree_predict_weights(tree: SurvivalTree, x) -> np.ndarray:
    """Per-training-sample weights of the leaf that x routes to."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise ValueError(
            f"expected a covariate vector of length {tree.n_features}, got shape {x.shape}"
        )
    leaf = _route(tree.root, x)
    out = np.zeros(tree.n_samples)
    out[leaf.sample_indices] = leaf.sample_weights
    return out


def tree_predict_curve(tree: SurvivalTree, x) -> SurvivalCurve:
    """Weighted Kaplan-Meier over the members of the reached leaf."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise ValueError(
            f"expected a covariate vector of length {tree.n_features}, got shape {x.shape}"
        )
    leaf = _route(tree.root, x)
    idx = leaf.sample_indices
    return kaplan_meier(tree.times[idx], tree.events[idx], leaf.sample_weights)


def collect_leaves(root: Node) -> list:
    """All leaves in depth-first (left before right) order."""
    out = []
    stack = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, InternalNode):
            stack.append(node.right)
            stack.append(node.left)
        else:
            out.append(node)
    return out


def apply_tree(root: Node, X: np.ndarray) -> np.ndarray:
    """Leaf ordinal (in collect_leaves order) for every row of X."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int32)
    counter = [0]

    def descend(node, rows):
        if isinstance(node, InternalNode):
            mask = X[rows, node.covariate_index] <= node.threshold
            descend(node.left, rows[mask])
            descend(node.right, rows[~mask])
        else:
            out[rows] = counter[0]
            counter[0] += 1
        return None

    descend(root, np.arange(n))
    return out

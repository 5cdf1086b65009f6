"""Gini CART trees bagged into a random forest.

Trees are grown by the compiled kernels in ``_kernels``; this module owns
the hyperparameters, the fitted-model containers, voting, out-of-bag error,
impurity-based importance and JSON (de)serialization.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyNode,
    NoOobRows,
    SingleClassInput,
)
from .rng import derive_seed

LAWFUL, UNLAWFUL = 0, 1


@dataclass(frozen=True)
class HyperParams:
    ntrees: int = 100
    mtry_fraction: Optional[float] = None  # None -> sqrt(m)/m
    max_depth: Optional[int] = None  # None -> unlimited
    sample_rate: float = 1.0
    min_samples_split: int = 2
    seed: int = 0
    bootstrap: bool = True
    tie_break: str = "unlawful"

    def __post_init__(self):
        if self.ntrees < 1:
            raise ConfigError(f"ntrees must be >= 1, got {self.ntrees}")
        if self.mtry_fraction is not None and not 0 < self.mtry_fraction <= 1:
            raise ConfigError(f"mtry_fraction must be in (0, 1], got {self.mtry_fraction}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.sample_rate <= 1:
            raise ConfigError(f"sample_rate must be in (0, 1], got {self.sample_rate}")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if self.tie_break not in ("unlawful", "lawful"):
            raise ConfigError(f"tie_break must be 'unlawful' or 'lawful', got {self.tie_break!r}")

    def resolve_mtry(self, m: int) -> int:
        frac = self.mtry_fraction if self.mtry_fraction is not None else math.sqrt(m) / m
        return min(m, max(1, int(math.floor(frac * m + 0.5))))

    def replace(self, **changes) -> "HyperParams":
        return HyperParams(**{**asdict(self), **changes})


@dataclass
class DecisionTree:
    """Flat node arena. ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2) in-bag class counts: lawful, unlawful
    decrease: np.ndarray  # weighted Gini decrease at internal nodes, 0 at leaves
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def fraction(self) -> np.ndarray:
        """Share of the tree's in-bag sample reaching each node."""
        return self.n_samples / self.n_samples[0]

    def leaf_labels(self, tie_break: str = "unlawful") -> np.ndarray:
        c0, c1 = self.counts[:, 0], self.counts[:, 1]
        if tie_break == "unlawful":
            return (c1 >= c0).astype(np.int8)
        return (c1 > c0).astype(np.int8)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def to_dict(self, node: int = 0) -> dict:
        rec = {"counts": [int(c) for c in self.counts[node]]}
        if self.feature[node] >= 0:
            rec.update(
                feature=int(self.feature[node]),
                threshold=float(self.threshold[node]),
                impurity_decrease=float(self.decrease[node]),
                left=self.to_dict(int(self.left[node])),
                right=self.to_dict(int(self.right[node])),
            )
        return rec

    @classmethod
    def from_dict(cls, rec: dict) -> "DecisionTree":
        # rebuild breadth-first so node numbering matches the grower's
        nodes = [rec]
        parent_links = []
        i = 0
        while i < len(nodes):
            r = nodes[i]
            if "feature" in r:
                parent_links.append((i, len(nodes)))
                nodes.extend([r["left"], r["right"]])
            i += 1
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        counts = np.array([r["counts"] for r in nodes], dtype=np.int64)
        decrease = np.zeros(n)
        for parent, child in parent_links:
            r = nodes[parent]
            feature[parent] = r["feature"]
            threshold[parent] = r["threshold"]
            decrease[parent] = r["impurity_decrease"]
            left[parent], right[parent] = child, child + 1
        return cls(feature, threshold, left, right, counts, decrease, counts.sum(axis=1))


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    params: HyperParams
    feature_count: int
    oob_indices: list[np.ndarray] = field(default_factory=list)
    _packed: Optional[tuple] = field(default=None, repr=False, compare=False)

    def packed(self) -> tuple:
        if self._packed is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees[:-1]])
            shift = lambda a, off: np.where(a >= 0, a + off, -1)  # noqa: E731
            self._packed = (
                np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.threshold for t in self.trees]),
                np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)]),
                np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)]),
                np.concatenate([t.leaf_labels(self.params.tie_break) for t in self.trees]),
                offsets.astype(np.int64),
            )
        return self._packed

    def to_json(self) -> str:
        return json.dumps(
            {
                "params": asdict(self.params),
                "feature_count": self.feature_count,
                "oob_indices": [idx.tolist() for idx in self.oob_indices],
                "trees": [t.to_dict() for t in self.trees],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "RandomForestModel":
        raw = json.loads(text)
        return cls(
            trees=[DecisionTree.from_dict(t) for t in raw["trees"]],
            params=HyperParams(**raw["params"]),
            feature_count=raw["feature_count"],
            oob_indices=[np.asarray(i, dtype=np.int64) for i in raw["oob_indices"]],
        )


def gini_impurity(counts: Sequence[float]) -> float:
    """Sum over classes of p(1 - p)."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total < 1:
        raise EmptyNode("gini impurity of an empty node")
    p = counts / total
    return float(np.sum(p * (1.0 - p)))


def best_split(x: np.ndarray, y: np.ndarray, features: Sequence[int]):
    """Best midpoint split over ``features`` for the rows of (x, y).

    Returns ``(feature, threshold, impurity_decrease)`` or None when no
    candidate lowers the weighted Gini impurity.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if x.shape[0] == 0 or len(features) == 0:
        raise ValueError("best_split needs at least one row and one candidate feature")
    n = x.shape[0]
    f, t, gain = _kernels.node_best_split(
        x, y, np.ones(n, dtype=np.int64), np.arange(n, dtype=np.int64), 0, n,
        np.asarray(features, dtype=np.int64), _kernels.presort(x), np.zeros(n, dtype=np.int64), 0,
    )
    if f < 0:
        return None
    return int(f), float(t), float(gain)


def _check_xy(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"x {x.shape} does not match y {y.shape}")
    if x.shape[0] < 2 or np.unique(y).size < 2:
        raise SingleClassInput("training data must contain both classes")
    return x, y


def _grow_one(x, y, order, params: HyperParams, mtry: int, tree_index: int):
    n = x.shape[0]
    seed = derive_seed(params.seed, tree_index)
    if params.bootstrap:
        size = int(math.ceil(params.sample_rate * n))
        inbag, state = _kernels.draw_bootstrap(n, size, np.uint64(seed))
    else:
        inbag, state = np.ones(n, dtype=np.int64), np.uint64(seed)
    max_depth = -1 if params.max_depth is None else params.max_depth
    arrays = _kernels.grow_tree(x, y, order, inbag, mtry, max_depth, params.min_samples_split, np.uint64(state))
    return DecisionTree(*arrays), np.flatnonzero(inbag == 0)


def fit_arrays(x: np.ndarray, y: np.ndarray, params: HyperParams, n_jobs: int = 1) -> RandomForestModel:
    x, y = _check_xy(x, y)
    mtry = params.resolve_mtry(x.shape[1])
    order = _kernels.presort(x)
    work = lambda i: _grow_one(x, y, order, params, mtry, i)  # noqa: E731
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            grown = list(pool.map(work, range(params.ntrees)))
    else:
        grown = [work(i) for i in range(params.ntrees)]
    return RandomForestModel(
        trees=[g[0] for g in grown],
        params=params,
        feature_count=x.shape[1],
        oob_indices=[g[1] for g in grown],
    )


def fit_forest(d, params: HyperParams, n_jobs: int = 1) -> RandomForestModel:
    """Fit on a ``Dataset``; trees are independent of ``n_jobs``."""
    return fit_arrays(d.x, d.y, params, n_jobs=n_jobs)


def _rows(model: RandomForestModel, x) -> np.ndarray:
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    if x.shape[1] != model.feature_count:
        raise DimensionMismatch(f"expected {model.feature_count} features, got {x.shape[1]}")
    return x


def vote_fraction(model: RandomForestModel, x) -> np.ndarray:
    """Share of trees voting unlawful, per row."""
    x = _rows(model, x)
    votes = _kernels.count_votes(x, *model.packed())
    return votes / len(model.trees)


def _label_from_fraction(frac: np.ndarray, tie_break: str) -> np.ndarray:
    if tie_break == "unlawful":
        return (frac >= 0.5).astype(np.int8)
    return (frac > 0.5).astype(np.int8)


def predict_batch(model: RandomForestModel, x) -> tuple[np.ndarray, np.ndarray]:
    frac = vote_fraction(model, x)
    return _label_from_fraction(frac, model.params.tie_break), frac


def predict(model: RandomForestModel, row) -> tuple[int, float]:
    """Majority vote for one row: (label, unlawful vote fraction)."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise DimensionMismatch("predict takes a single row; use predict_batch for matrices")
    labels, frac = predict_batch(model, row[None, :])
    return int(labels[0]), float(frac[0])


def tree_predictions(model: RandomForestModel, x) -> np.ndarray:
    return _kernels.predict_trees(_rows(model, x), *model.packed())


def accuracy(model: RandomForestModel, x, y) -> float:
    labels, _ = predict_batch(model, x)
    return float(np.mean(labels == np.asarray(y)))


def oob_error(model: RandomForestModel, d) -> float:
    """Majority vote among each row's out-of-bag trees.

    Rows that were in-bag for every tree are left out of the denominator.
    """
    x, y = d.x, np.asarray(d.y)
    per_tree = tree_predictions(model, x)
    votes = np.zeros(x.shape[0])
    n_oob = np.zeros(x.shape[0])
    for t, oob in enumerate(model.oob_indices):
        votes[oob] += per_tree[t, oob]
        n_oob[oob] += 1
    counted = n_oob > 0
    if not counted.any():
        raise NoOobRows("every row was in-bag for every tree")
    frac = votes[counted] / n_oob[counted]
    pred = _label_from_fraction(frac, model.params.tie_break)
    return float(np.mean(pred != y[counted]))


def mdi_importance(model: RandomForestModel) -> np.ndarray:
    """Mean decrease in impurity, normalised to sum to one."""
    total = np.zeros(model.feature_count)
    for tree in model.trees:
        internal = tree.feature >= 0
        np.add.at(total, tree.feature[internal], tree.fraction[internal] * tree.decrease[internal])
    total /= len(model.trees)
    s = total.sum()
    return total / s if s > 0 else total


def audit_tree(tree: DecisionTree, tol: float = 1e-12) -> float:
    """Recompute every stored decrease from the node counts; return the worst gap."""
    worst = 0.0
    for i in np.flatnonzero(tree.feature >= 0):
        l, r = tree.left[i], tree.right[i]
        n = tree.n_samples[i]
        expect = gini_impurity(tree.counts[i]) - (
            tree.n_samples[l] / n * gini_impurity(tree.counts[l])
            + tree.n_samples[r] / n * gini_impurity(tree.counts[r])
        )
        worst = max(worst, abs(expect - tree.decrease[i]))
    if worst > tol:
        raise AssertionError(f"stored impurity decrease off by {worst:.3e}")
    return worst

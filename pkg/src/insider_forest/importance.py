"""Feature importance: MDI, permutation, and cluster-decorrelated permutation.

Correlated features share credit under permutation: shuffling one leaves
its twin intact. The decorrelated variant clusters features on Spearman
correlation (Ward linkage on 1 - |rho|), keeps one medoid per cluster,
refits on those, and permutes them on held-out data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BadCorrelationMatrix, DimensionMismatch
from .fileio import fmt_float
from .forest import HyperParams, RandomForestModel, fit_forest, mdi_importance, predict_batch
from .linalg import spearman_correlation
from .rng import generator

IMPORTANCE_HEADER = ["rank", "feature", "method", "split", "mean_importance", "std"]


@dataclass
class ImportanceReport:
    feature_names: list[str]
    scores: np.ndarray
    score_std: np.ndarray
    method: str  # mdi | permutation | permutation_decorrelated
    evaluated_on: str  # train | test
    samples: Optional[np.ndarray] = field(default=None, repr=False)  # (features, repeats)

    def ranking(self) -> list[int]:
        return sorted(range(len(self.scores)), key=lambda i: (-self.scores[i], i))

    def csv_rows(self) -> list[list[str]]:
        return [
            [str(r + 1), self.feature_names[i], self.method, self.evaluated_on,
             fmt_float(self.scores[i]), fmt_float(self.score_std[i])]
            for r, i in enumerate(self.ranking())
        ]


def mdi_report(model: RandomForestModel, names: Sequence[str]) -> ImportanceReport:
    scores = mdi_importance(model)
    return ImportanceReport(list(names), scores, np.zeros_like(scores), "mdi", "train")


def permutation_importance(
    model: RandomForestModel, d, n_repeats: int = 10, seed: int = 0, evaluated_on: str = "test"
) -> ImportanceReport:
    """Accuracy drop when one column is shuffled, model held fixed."""
    if d.x.shape[1] != model.feature_count:
        raise DimensionMismatch(f"model has {model.feature_count} features, data has {d.x.shape[1]}")
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    x = np.array(d.x, dtype=np.float64, order="C")
    labels, _ = predict_batch(model, x)
    baseline = float(np.mean(labels == d.y))
    m = x.shape[1]
    samples = np.zeros((m, n_repeats))
    for j in range(m):
        original = x[:, j].copy()
        for r in range(n_repeats):
            x[:, j] = original[generator(seed, j, r).permutation(original.size)]
            labels, _ = predict_batch(model, x)
            samples[j, r] = baseline - float(np.mean(labels == d.y))
        x[:, j] = original
    std = samples.std(axis=1, ddof=1) if n_repeats > 1 else np.zeros(m)
    return ImportanceReport(d.names, samples.mean(axis=1), std, "permutation", evaluated_on, samples)


@dataclass
class Dendrogram:
    """Merge list in scipy convention: leaves are 0..n-1, merge i creates n+i."""

    merges: list[tuple[int, int, float, int]]
    leaf_count: int

    @property
    def heights(self) -> np.ndarray:
        return np.array([h for _, _, h, _ in self.merges], dtype=float)

    def to_json(self, names: Optional[Sequence[str]] = None) -> str:
        return json.dumps(
            {
                "leaf_count": self.leaf_count,
                "labels": list(names) if names is not None else None,
                "merges": [
                    {"a": a, "b": b, "height": h, "size": s} for a, b, h, s in self.merges
                ],
            },
            indent=1,
        )

    def linkage_matrix(self) -> np.ndarray:
        return np.array([[a, b, h, s] for a, b, h, s in self.merges], dtype=float).reshape(-1, 4)


def correlation_distance(corr, signed: bool = False) -> np.ndarray:
    corr = np.asarray(corr, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise BadCorrelationMatrix(f"expected a square matrix, got {corr.shape}")
    if np.any(np.abs(np.diag(corr) - 1.0) > 1e-9):
        raise BadCorrelationMatrix("diagonal must be 1")
    if np.any(np.abs(corr) > 1.0 + 1e-9) or not np.all(np.isfinite(corr)):
        raise BadCorrelationMatrix("entries must lie in [-1, 1]")
    dist = 1.0 - (corr if signed else np.abs(corr))
    dist = np.clip(0.5 * (dist + dist.T), 0.0, None)
    np.fill_diagonal(dist, 0.0)
    return dist


def ward_cluster(corr, signed: bool = False) -> Dendrogram:
    """Agglomerative Ward linkage on the correlation distance.

    Lance-Williams update on squared distances; reported heights are the
    square roots, matching the usual dendrogram scale.
    """
    dist = correlation_distance(corr, signed)
    n = dist.shape[0]
    d2 = {}
    for i in range(n):
        for j in range(i + 1, n):
            d2[(i, j)] = dist[i, j] ** 2
    size = {i: 1 for i in range(n)}
    active = list(range(n))
    merges = []
    for step in range(n - 1):
        best = None
        for ai in range(len(active)):
            for bi in range(ai + 1, len(active)):
                a, b = active[ai], active[bi]
                v = d2[(a, b)]
                if best is None or v < best[0]:
                    best = (v, a, b)
        v, a, b = best
        new = n + step
        na, nb = size[a], size[b]
        for c in active:
            if c in (a, b):
                continue
            nc = size[c]
            dac = d2[(min(a, c), max(a, c))]
            dbc = d2[(min(b, c), max(b, c))]
            d2[(c, new)] = ((na + nc) * dac + (nb + nc) * dbc - nc * v) / (na + nb + nc)
        active = [c for c in active if c not in (a, b)] + [new]
        size[new] = na + nb
        merges.append((a, b, float(np.sqrt(max(v, 0.0))), na + nb))
    return Dendrogram(merges, n)


def cut_clusters(dend: Dendrogram, threshold: float) -> np.ndarray:
    """Cluster label per leaf after applying merges strictly below ``threshold``."""
    parent = list(range(dend.leaf_count + len(dend.merges)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for step, (a, b, h, _) in enumerate(dend.merges):
        if h < threshold:
            new = dend.leaf_count + step
            parent[find(a)] = new
            parent[find(b)] = new
    roots = [find(i) for i in range(dend.leaf_count)]
    relabel = {}
    return np.array([relabel.setdefault(r, len(relabel)) for r in roots], dtype=np.int64)


def largest_gap_threshold(dend: Dendrogram) -> float:
    """Midpoint of the widest gap between consecutive merge heights."""
    h = np.sort(dend.heights)
    if h.size < 2:
        return float(h[-1]) + 1.0 if h.size else 1.0
    gaps = np.diff(h)
    i = int(np.argmax(gaps))
    return float(0.5 * (h[i] + h[i + 1]))


def cluster_representatives(dend: Dendrogram, corr, height_threshold: float) -> list[int]:
    """One medoid per cluster: highest mean |rho| to its cluster, lowest index on ties."""
    if height_threshold < 0:
        raise ValueError("threshold must be >= 0")
    corr = np.abs(np.asarray(corr, dtype=np.float64))
    labels = cut_clusters(dend, height_threshold)
    reps = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        closeness = corr[np.ix_(members, members)].mean(axis=1)
        best = closeness.max()
        reps.append(int(members[np.flatnonzero(closeness >= best - 1e-12)[0]]))
    return sorted(reps)


@dataclass
class DecorrelatedResult:
    report: ImportanceReport
    representatives: list[int]
    dendrogram: Dendrogram
    correlation: np.ndarray
    model: RandomForestModel


def decorrelated_permutation_importance(
    train,
    test,
    params: HyperParams,
    threshold: float = 1.0,
    n_repeats: int = 10,
    seed: int = 0,
    signed: bool = False,
) -> DecorrelatedResult:
    """Cluster on train, keep representatives, refit, permute on test."""
    if train.names != test.names:
        raise DimensionMismatch("train and test must share a schema")
    corr = spearman_correlation(train.x)
    dend = ward_cluster(corr, signed=signed)
    reps = cluster_representatives(dend, corr, threshold)
    sub_train = train.select_columns(reps)
    sub_test = test.select_columns(reps)
    model = fit_forest(sub_train, params)
    report = permutation_importance(model, sub_test, n_repeats, seed, evaluated_on="test")
    report.method = "permutation_decorrelated"
    return DecorrelatedResult(report, reps, dend, corr, model)

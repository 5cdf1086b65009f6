"""Confusion-matrix metrics, ranking metrics, k-fold CV and random search.

Lawful is the positive class for the confusion matrix. Scores fed to the
ranking metrics are unlawful vote fractions, so those treat unlawful as the
detected class.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BadK,
    ConfigError,
    EmptyInput,
    InsiderForestError,
    LengthMismatch,
    NoPositiveClass,
    SingleClass,
)
from .forest import HyperParams, fit_arrays, predict_batch
from .linalg import average_ranks
from .rng import derive_seed, generator

log = logging.getLogger(__name__)

METRIC_NAMES = ("acc", "tpr", "fpr", "tnr", "fnr", "pre")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int  # lawful called lawful
    fn: int  # lawful called unlawful
    fp: int  # unlawful called lawful
    tn: int  # unlawful called unlawful

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn

    @property
    def total(self) -> int:
        return self.positives + self.negatives


@dataclass(frozen=True)
class MetricsReport:
    """Rates in [0, 1]; None marks a zero denominator."""

    tpr: Optional[float]
    fpr: Optional[float]
    tnr: Optional[float]
    fnr: Optional[float]
    acc: float
    pre: Optional[float]
    auc: Optional[float] = None
    aucpr: Optional[float] = None

    def as_percent(self) -> dict:
        return {k: (None if v is None else 100.0 * v) for k, v in asdict(self).items()}


def confusion_matrix(y_true, y_pred) -> ConfusionMatrix:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise EmptyInput("no predictions to score")
    lawful_t, lawful_p = y_true == 0, y_pred == 0
    return ConfusionMatrix(
        tp=int(np.sum(lawful_t & lawful_p)),
        fn=int(np.sum(lawful_t & ~lawful_p)),
        fp=int(np.sum(~lawful_t & lawful_p)),
        tn=int(np.sum(~lawful_t & ~lawful_p)),
    )


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def metrics(cm: ConfusionMatrix, auc: Optional[float] = None, aucpr: Optional[float] = None) -> MetricsReport:
    if cm.total <= 0:
        raise EmptyInput("confusion matrix is empty")
    return MetricsReport(
        tpr=_ratio(cm.tp, cm.tp + cm.fn),
        fpr=_ratio(cm.fp, cm.fp + cm.tn),
        tnr=_ratio(cm.tn, cm.tn + cm.fp),
        fnr=_ratio(cm.fn, cm.tp + cm.fn),
        acc=(cm.tp + cm.tn) / cm.total,
        pre=_ratio(cm.tp, cm.tp + cm.fp),
        auc=auc,
        aucpr=aucpr,
    )


def roc_auc(y_true, scores) -> float:
    """P(random unlawful row outscores random lawful row), ties counting half."""
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise LengthMismatch(f"{y.shape} vs {s.shape}")
    n_pos = int(np.sum(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = average_ranks(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(y_true, scores) -> float:
    """Average precision: step-wise area under precision-recall for unlawful.

    Each distinct score is a threshold; precision at that threshold is
    weighted by the recall gained there.
    """
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise LengthMismatch(f"{y.shape} vs {s.shape}")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise NoPositiveClass("PR-AUC needs at least one unlawful row")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y == 1)
    fp = np.cumsum(y != 1)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp, fp = tp[last], fp[last]
    recall = tp / n_pos
    precision = tp / (tp + fp)
    gain = np.diff(np.r_[0.0, recall])
    return float(np.sum(gain * precision))


def kfold_split(n: int, k: int, seed) -> list[np.ndarray]:
    """Shuffled folds whose sizes differ by at most one (larger folds first)."""
    if k < 2 or n < k:
        raise BadK(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass(frozen=True)
class SearchSpace:
    ntrees: tuple = (100, 1030)
    mtry_fraction: tuple = (0.35, 0.95)
    max_depth: tuple = (2, 18)
    sample_rate: tuple = (0.5, 1.0)  # lower bound open
    n_iterations: int = 5
    k_folds: int = 5

    def __post_init__(self):
        for name in ("ntrees", "mtry_fraction", "max_depth", "sample_rate"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"empty range for {name}: {lo} > {hi}")
        if self.ntrees[0] < 1 or self.max_depth[0] < 1:
            raise ConfigError("ntrees and max_depth ranges must start at >= 1")
        if not (0 < self.mtry_fraction[0] and self.mtry_fraction[1] <= 1):
            raise ConfigError("mtry_fraction range must lie in (0, 1]")
        if not (0 <= self.sample_rate[0] and 0 < self.sample_rate[1] <= 1):
            raise ConfigError("sample_rate range must lie in (0, 1]")
        if self.n_iterations < 1:
            raise ConfigError("n_iterations must be >= 1")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")

    @classmethod
    def from_dict(cls, raw: dict) -> "SearchSpace":
        known = {k: (tuple(v) if isinstance(v, list) else v) for k, v in raw.items()}
        unknown = set(known) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown search-space keys: {sorted(unknown)}")
        return cls(**known)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    def draw(self, rng: np.random.Generator, seed: int) -> HyperParams:
        lo, hi = self.sample_rate
        return HyperParams(
            ntrees=int(rng.integers(self.ntrees[0], self.ntrees[1] + 1)),
            mtry_fraction=float(rng.uniform(*self.mtry_fraction)) if self.mtry_fraction[0] < self.mtry_fraction[1] else float(self.mtry_fraction[0]),
            max_depth=int(rng.integers(self.max_depth[0], self.max_depth[1] + 1)),
            sample_rate=float(hi - rng.random() * (hi - lo)),
            seed=seed,
        )


def cross_val_score(train, params: HyperParams, folds: Sequence[np.ndarray], criterion: str = "acc") -> float:
    """Mean validation score over the given folds."""
    if criterion not in ("acc", "auc"):
        raise ConfigError(f"criterion must be acc or auc, got {criterion!r}")
    scores = []
    all_rows = np.arange(train.n_rows)
    for i, val in enumerate(folds):
        fit_rows = np.setdiff1d(all_rows, val, assume_unique=True)
        model = fit_arrays(train.x[fit_rows], train.y[fit_rows], params.replace(seed=derive_seed(params.seed, i)))
        labels, frac = predict_batch(model, train.x[val])
        if criterion == "acc":
            scores.append(float(np.mean(labels == train.y[val])))
        else:
            scores.append(roc_auc(train.y[val], frac))
    return float(np.mean(scores))


@dataclass(frozen=True)
class Trial:
    params: HyperParams
    score: Optional[float]
    error: Optional[str] = None


def random_search(space: SearchSpace, train, seed, criterion: str = "acc") -> tuple[HyperParams, float, list[Trial]]:
    """Draw ``space.n_iterations`` settings, score each by k-fold CV, keep the best.

    All draws share one fold assignment. A draw whose fits fail is logged
    and skipped; ties go to the earlier draw.
    """
    folds = kfold_split(train.n_rows, space.k_folds, derive_seed(seed, 0))
    trials: list[Trial] = []
    best: Optional[Trial] = None
    for i in range(space.n_iterations):
        params = space.draw(generator(seed, 1, i), derive_seed(seed, 2, i))
        try:
            score = cross_val_score(train, params, folds, criterion)
        except InsiderForestError as exc:
            log.warning("draw %d failed: %s: %s", i, type(exc).__name__, exc)
            trials.append(Trial(params, None, f"{type(exc).__name__}: {exc}"))
            continue
        trial = Trial(params, score)
        trials.append(trial)
        if best is None or score > best.score:
            best = trial
    if best is None:
        raise InsiderForestError("every random-search draw failed")
    return best.params, best.score, trials


def summarize(values: Sequence[Optional[float]]) -> dict:
    """Mean, sample std and std of the mean, skipping undefined entries."""
    v = np.array([x for x in values if x is not None and not math.isnan(x)], dtype=float)
    if v.size == 0:
        return {"mean": None, "std": None, "sem": None, "n": 0}
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return {"mean": float(v.mean()), "std": std, "sem": std / math.sqrt(v.size), "n": int(v.size)}

"""Principal component analysis via the covariance eigendecomposition."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, KOutOfRange, NonFiniteInput, TooFewRows, ZeroVariance
from .linalg import covariance_matrix, symmetric_eigen


@dataclass(frozen=True)
class PcaModel:
    means: np.ndarray
    eigenvalues: np.ndarray  # descending
    components: np.ndarray  # (m, m); column i is the i-th principal direction
    evr: np.ndarray

    @property
    def cum_evr(self) -> np.ndarray:
        return np.cumsum(self.evr)

    @property
    def n_components(self) -> int:
        return self.components.shape[1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "means": self.means.tolist(),
                "eigenvalues": self.eigenvalues.tolist(),
                "components": self.components.tolist(),  # row-major
                "evr": self.evr.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        raw = json.loads(text)
        return cls(
            np.asarray(raw["means"], dtype=float),
            np.asarray(raw["eigenvalues"], dtype=float),
            np.asarray(raw["components"], dtype=float),
            np.asarray(raw["evr"], dtype=float),
        )


def fit_pca(x) -> PcaModel:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooFewRows("PCA needs at least two rows")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("PCA input has non-finite entries")
    means = x.mean(axis=0)
    b = x - means
    # re-centre to absorb rounding in the subtraction above
    b -= b.mean(axis=0)
    eig = symmetric_eigen(covariance_matrix(b, x.shape[0]))
    total = eig.values.sum()
    if not total > 0:
        raise ZeroVariance("all columns are constant")
    return PcaModel(means, eig.values, eig.vectors, eig.values / total)


def transform(model: PcaModel, x, k: int) -> np.ndarray:
    """Factor scores on the first k components."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.means.shape[0]:
        raise DimensionMismatch(f"expected {model.means.shape[0]} columns, got shape {x.shape}")
    if not 1 <= k <= model.n_components:
        raise KOutOfRange(f"k must be in [1, {model.n_components}], got {k}")
    return (x - model.means) @ model.components[:, :k]


def inverse_transform(model: PcaModel, scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    k = scores.shape[1]
    return scores @ model.components[:, :k].T + model.means


def select_components(model: PcaModel, target_cum_evr: float) -> int:
    """Smallest k whose cumulative explained-variance ratio reaches the target."""
    if not 0 < target_cum_evr <= 1:
        raise KOutOfRange("target must lie in (0, 1]")
    cum = model.cum_evr
    # tolerate rounding in the running sum when the target is exactly 1
    hit = np.flatnonzero(cum >= target_cum_evr - 1e-12)
    k = int(hit[0]) + 1 if hit.size else model.n_components
    return k

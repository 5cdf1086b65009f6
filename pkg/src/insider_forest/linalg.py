"""Dense symmetric linear algebra: covariance, Jacobi eigensolver, Spearman."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.stats import rankdata

from .errors import DimensionMismatch, NoConvergence, NotCentered, TooFewRows

CENTER_TOL = 1e-9
MAX_SWEEPS = 100


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray  # descending
    vectors: np.ndarray  # column i pairs with values[i]


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NoConvergence("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        raise DimensionMismatch("matrix is not symmetric")
    return a


def covariance_matrix(b, n: int | None = None) -> np.ndarray:
    """C = B^T B / N for a column-centred B."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 1:
        b = b[:, None]
    n = b.shape[0] if n is None else n
    if n < 1:
        raise TooFewRows("covariance needs at least one row")
    col_scale = np.maximum(1.0, np.abs(b).max(axis=0, initial=0.0))
    if np.any(np.abs(b.mean(axis=0)) > CENTER_TOL * col_scale):
        raise NotCentered("columns must have zero mean")
    c = b.T @ b / n
    return 0.5 * (c + c.T)


@njit(cache=True)
def _jacobi(a, tol, max_sweeps):
    a = a.copy()
    dim = a.shape[0]
    v = np.eye(dim)
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(dim):
            for q in range(p + 1, dim):
                off += a[p, q] * a[p, q]
        if np.sqrt(2.0 * off) <= tol:
            return a, v, sweep
        for p in range(dim - 1):
            for q in range(p + 1, dim):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(dim):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(dim):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(dim):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return a, v, -1


def symmetric_eigen(c) -> EigenDecomposition:
    """Cyclic Jacobi rotations.

    Eigenvalues come back in non-increasing order, values in (-1e-10, 0)
    are clipped to 0, and each eigenvector is signed so that its
    largest-magnitude entry is positive.
    """
    a = _check_symmetric(c)
    dim = a.shape[0]
    if dim == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)))
    norm = np.linalg.norm(a)
    tol = 1e-13 * max(norm, 1e-300)
    d, v, sweeps = _jacobi(a, tol, MAX_SWEEPS)
    if sweeps < 0:
        raise NoConvergence(f"Jacobi did not converge in {MAX_SWEEPS} sweeps")
    values = np.diag(d).copy()
    values[(values < 0) & (values > -1e-10)] = 0.0
    order = np.argsort(-values, kind="stable")
    values = values[order]
    v = v[:, order]
    lead = np.argmax(np.abs(v), axis=0)
    signs = np.where(v[lead, np.arange(dim)] < 0, -1.0, 1.0)
    return EigenDecomposition(values, v * signs)


def average_ranks(col) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the positions they span."""
    return rankdata(col, method="average")


def spearman_correlation(x) -> np.ndarray:
    """Pearson correlation of average-tie column ranks.

    Constant columns correlate 0 with everything else; the diagonal is 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooFewRows("Spearman correlation needs at least two rows")
    r = np.column_stack([average_ranks(x[:, j]) for j in range(x.shape[1])])
    r -= r.mean(axis=0)
    ss = np.sqrt((r * r).sum(axis=0))
    live = ss > 0
    z = np.zeros_like(r)
    z[:, live] = r[:, live] / ss[live]
    rho = np.clip(z.T @ z, -1.0, 1.0)
    rho = 0.5 * (rho + rho.T)
    np.fill_diagonal(rho, 1.0)
    return rho

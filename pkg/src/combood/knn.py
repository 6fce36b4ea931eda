"""Nonparametric detector component: k-th nearest-neighbor distance on the unit sphere."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_matrix, as_vector, check_fitted

# Rows with a smaller L2 norm than this cannot be normalized meaningfully.
MIN_ROW_NORM = 1e-12
# Accepted deviation from unit norm for pre-normalized inputs and queries.
UNIT_NORM_TOL = 1e-6
# Training rows are scanned in blocks so the difference temporaries stay
# cache-sized; blocking does not change any per-row arithmetic.
_SCAN_BLOCK = 512


def normalize_rows(X) -> np.ndarray:
    """Divide every row by its L2 norm.

    Raises on rows with norm below ``MIN_ROW_NORM``, reporting the row index.
    """
    X = as_matrix(X)
    norms = np.sqrt((X * X).sum(axis=1))
    bad = np.flatnonzero(norms < MIN_ROW_NORM)
    if bad.size:
        raise ValueError(f"row {bad[0]} has near-zero L2 norm ({norms[bad[0]]:.3e}) and cannot be normalized")
    return X / norms[:, None]


def normalize_vector(x) -> np.ndarray:
    """L2-normalize a single vector; error on near-zero norm."""
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.sqrt((x * x).sum()))
    if norm < MIN_ROW_NORM:
        raise ValueError(f"vector has near-zero L2 norm ({norm:.3e}) and cannot be normalized")
    return x / norm


def kc_score(kd: float, n: int, clamp_eps: float = 1e-12) -> float:
    """Nonparametric confidence score ``-sqrt(n) * ln(kd)``.

    ``kd`` is clamped at ``clamp_eps`` before the log so duplicate samples
    (kd == 0) give a finite ceiling instead of +inf; ordering is preserved.
    ``n`` is the dimensionality of the embedding space.
    """
    if kd < 0:
        raise ValueError(f"neighbor distance must be >= 0, got {kd}")
    if n < 1:
        raise ValueError(f"dimensionality must be >= 1, got {n}")
    return float(-np.sqrt(n) * np.log(max(kd, clamp_eps)))


class NormalizedKnn(BaseEstimator):
    """Exact k-th nearest-neighbor distance over L2-normalized training rows.

    Queries run a full linear scan: per point, O(N * dim) distance work plus
    an O(N) selection of the k-th order statistic, so the cost is linear in
    the embedding size. Ties at the k-th distance follow sorted-multiset
    semantics (duplicates count separately).

    The training matrix must already be row-normalized (see
    :func:`normalize_rows`); rows off unit norm by more than ``UNIT_NORM_TOL``
    are rejected so the scheme stays Euclidean-on-the-sphere.
    """

    def __init__(self, k: int = 50, clamp_eps: float = 1e-12):
        self.k = k
        self.clamp_eps = clamp_eps

    def fit(self, X, y=None):
        X = as_matrix(X)
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.k > X.shape[0]:
            raise ValueError(f"k={self.k} exceeds the number of training rows ({X.shape[0]})")
        norms = np.sqrt((X * X).sum(axis=1))
        off = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
        if off.size:
            raise ValueError(
                f"training row {off[0]} has L2 norm {norms[off[0]]:.9f}; "
                "rows must be normalized (see normalize_rows)"
            )
        self.train_ = X.copy()
        self.dim_ = X.shape[1]
        return self

    def kth_distance(self, z) -> float:
        """Euclidean distance from ``z`` to its k-th closest training row (1-indexed)."""
        check_fitted(self, "train_")
        z = as_vector(z, dim=self.dim_, name="query")
        norm = np.sqrt((z * z).sum())
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"query has L2 norm {norm:.9f}; queries must be normalized")
        n_rows = self.train_.shape[0]
        d = np.empty(n_rows)
        for start in range(0, n_rows, _SCAN_BLOCK):
            stop = min(start + _SCAN_BLOCK, n_rows)
            diff = self.train_[start:stop] - z
            d[start:stop] = (diff * diff).sum(axis=1)
        np.sqrt(d, out=d)
        return float(np.partition(d, self.k - 1)[self.k - 1])

    def confidence(self, kd: float) -> float:
        """Confidence score for a neighbor distance in this model's space."""
        check_fitted(self, "train_")
        return kc_score(kd, self.dim_, self.clamp_eps)

    def score_samples(self, Z) -> np.ndarray:
        """Confidence scores for each (normalized) row of ``Z``."""
        Z = as_matrix(Z)
        return np.array([self.confidence(self.kth_distance(Z[i])) for i in range(Z.shape[0])])

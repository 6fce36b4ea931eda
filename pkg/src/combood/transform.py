"""Yeo-Johnson power transform with standardization for extrema features."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_matrix, check_fitted

# Standard deviations of degenerate (constant) columns are clamped to this
# instead of dropping the column, which would silently change the feature
# dimensionality seen by the parametric model.
STD_CLAMP = 1e-12

# |lam| (resp. |lam - 2|) below one ulp of 1.0 takes the log branch; dividing
# by a smaller lam after expm1 underflows and would break monotonicity.
_LAMBDA_EPS = np.spacing(1.0)


def yeo_johnson(x, lam: float):
    """Apply the four-branch Yeo-Johnson transform elementwise.

    For ``x >= 0``:  ``((x+1)**lam - 1)/lam``, or ``log(x+1)`` when ``lam == 0``.
    For ``x < 0``:   ``-((-x+1)**(2-lam) - 1)/(2-lam)``, or ``-log(-x+1)`` when
    ``lam == 2``. Monotone increasing in ``x`` for any fixed ``lam``.

    Accepts scalars or arrays; returns the same shape. Uses ``expm1``/``log1p``
    forms so the result is continuous through the ``lam == 0`` and ``lam == 2``
    seams.
    """
    x = np.asarray(x, dtype=np.float64)
    if lam == 1.0:
        # identity on both branches
        return x if x.ndim else float(x)
    out = np.empty_like(x)
    pos = x >= 0

    if abs(lam) < _LAMBDA_EPS:
        out[pos] = np.log1p(x[pos])
    else:
        out[pos] = np.expm1(lam * np.log1p(x[pos])) / lam

    if abs(lam - 2.0) < _LAMBDA_EPS:
        out[~pos] = -np.log1p(-x[~pos])
    else:
        out[~pos] = -np.expm1((2.0 - lam) * np.log1p(-x[~pos])) / (2.0 - lam)

    return out if out.ndim else float(out)


def yeo_johnson_inverse(y, lam: float):
    """Invert :func:`yeo_johnson` elementwise.

    The transform maps x >= 0 to y >= 0 and x < 0 to y < 0, so the branch is
    recovered from the sign of ``y``.
    """
    y = np.asarray(y, dtype=np.float64)
    if lam == 1.0:
        return y if y.ndim else float(y)
    out = np.empty_like(y)
    pos = y >= 0

    if abs(lam) < _LAMBDA_EPS:
        out[pos] = np.expm1(y[pos])
    else:
        out[pos] = np.expm1(np.log1p(lam * y[pos]) / lam)

    if abs(lam - 2.0) < _LAMBDA_EPS:
        out[~pos] = -np.expm1(-y[~pos])
    else:
        out[~pos] = -np.expm1(np.log1p(-(2.0 - lam) * y[~pos]) / (2.0 - lam))

    return out if out.ndim else float(out)


def _yeo_johnson_loglik(lam: float, col: np.ndarray) -> float:
    """Profile log-likelihood of ``lam`` for one feature column.

    llf(lam) = -n/2 * ln(var(y)) + (lam - 1) * sum(sign(x) * ln(|x| + 1))

    where ``y = yeo_johnson(col, lam)``, ``var`` is the MLE variance
    (divisor n) and the second term is the log-Jacobian of the transform.
    Returns ``-inf`` when the transformed variance is zero or non-finite so
    the optimizer steers away from degenerate regions.
    """
    y = yeo_johnson(col, lam)
    var = np.var(y)
    if not np.isfinite(var) or var <= 0.0:
        return -np.inf
    n = col.shape[0]
    jacobian = np.sum(np.sign(col) * np.log1p(np.abs(col)))
    return -n / 2.0 * np.log(var) + (lam - 1.0) * jacobian


def _optimize_lambda(col: np.ndarray, bounds: tuple[float, float], grid_points: int, tol: float) -> float:
    """Maximize the profile log-likelihood over ``bounds``.

    A coarse grid pre-scan localizes the optimum, then a bounded Brent
    refinement runs on the surrounding sub-interval.
    """
    lo, hi = bounds
    grid = np.linspace(lo, hi, grid_points)
    ll = np.array([_yeo_johnson_loglik(g, col) for g in grid])
    best = int(np.argmax(ll))
    step = grid[1] - grid[0]
    sub_lo = max(lo, grid[best] - step)
    sub_hi = min(hi, grid[best] + step)
    res = optimize.minimize_scalar(
        lambda lam: -_yeo_johnson_loglik(lam, col),
        bounds=(sub_lo, sub_hi),
        method="bounded",
        options={"xatol": tol},
    )
    return float(res.x)


class PowerTransform(TransformerMixin, BaseEstimator):
    """Per-feature Yeo-Johnson transform followed by standardization.

    Each column receives its own ``lambda`` chosen by maximizing the profile
    log-likelihood over ``search_bounds``, then the transformed column is
    shifted/scaled to zero mean and unit standard deviation (divisor n).

    Parameters
    ----------
    search_bounds : tuple of float, default (-5, 5)
        Interval searched for each column's lambda.
    grid_points : int, default 21
        Size of the coarse pre-scan grid used to bracket the optimum.
    tol : float, default 1e-6
        Absolute tolerance of the bounded refinement.

    Attributes
    ----------
    lambdas_ : ndarray of shape (n_features,)
    means_ : ndarray of shape (n_features,)
        Post-transform column means.
    stds_ : ndarray of shape (n_features,)
        Post-transform column standard deviations, clamped to ``STD_CLAMP``.
    n_features_ : int
    """

    def __init__(self, search_bounds=(-5.0, 5.0), grid_points=21, tol=1e-6):
        self.search_bounds = search_bounds
        self.grid_points = grid_points
        self.tol = tol

    def fit(self, X, y=None):
        X = as_matrix(X)
        if X.shape[0] < 2:
            raise ValueError(f"need at least 2 rows to fit the transform, got {X.shape[0]}")
        n_features = X.shape[1]
        lambdas = np.empty(n_features)
        means = np.empty(n_features)
        stds = np.empty(n_features)
        for j in range(n_features):
            col = X[:, j]
            if np.all(col == col[0]):
                warnings.warn(
                    f"column {j} is constant; using lambda=1 and clamping its std to {STD_CLAMP}"
                )
                lambdas[j] = 1.0
                means[j] = col[0]
                stds[j] = STD_CLAMP
                continue
            lambdas[j] = _optimize_lambda(col, self.search_bounds, self.grid_points, self.tol)
            transformed = yeo_johnson(col, lambdas[j])
            means[j] = np.mean(transformed)
            stds[j] = max(np.std(transformed), STD_CLAMP)
        self.lambdas_ = lambdas
        self.means_ = means
        self.stds_ = stds
        self.n_features_ = n_features
        return self

    def transform(self, X):
        check_fitted(self, "lambdas_")
        X = as_matrix(X)
        if X.shape[1] != self.n_features_:
            raise ValueError(
                f"X has {X.shape[1]} columns, transform was fit on {self.n_features_}"
            )
        out = np.empty_like(X)
        for j in range(self.n_features_):
            out[:, j] = (yeo_johnson(X[:, j], self.lambdas_[j]) - self.means_[j]) / self.stds_[j]
        return out

    def transform_vector(self, x: np.ndarray) -> np.ndarray:
        """Transform a single sample (1-D vector of length ``n_features_``)."""
        check_fitted(self, "lambdas_")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features_,):
            raise ValueError(f"x has shape {x.shape}, expected ({self.n_features_},)")
        out = np.empty_like(x)
        for j in range(self.n_features_):
            out[j] = (yeo_johnson(x[j], self.lambdas_[j]) - self.means_[j]) / self.stds_[j]
        return out

    def inverse_transform(self, X):
        check_fitted(self, "lambdas_")
        X = as_matrix(X)
        if X.shape[1] != self.n_features_:
            raise ValueError(
                f"X has {X.shape[1]} columns, transform was fit on {self.n_features_}"
            )
        out = np.empty_like(X)
        for j in range(self.n_features_):
            out[:, j] = yeo_johnson_inverse(
                X[:, j] * self.stds_[j] + self.means_[j], self.lambdas_[j]
            )
        return out

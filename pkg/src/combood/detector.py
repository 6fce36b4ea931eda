"""Semiparametric detector: score fusion, threshold calibration, and the ID/OOD decision."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_matrix, as_vector, check_fitted
from .knn import NormalizedKnn, normalize_rows, normalize_vector
from .mahalanobis import RegularizedMahalanobis
from .transform import PowerTransform

ID = "ID"
OOD = "OOD"


@dataclass(frozen=True)
class DetectorConfig:
    """Configuration shared by the detector components.

    ``reg_c`` regularizes the covariance diagonal (default 1, which works
    well across architectures). ``k`` is the neighbor index of the
    nonparametric component. ``target_tpr`` is the fraction of in-distribution
    validation data the calibrated threshold must keep on the ID side.
    """

    reg_c: float = 1.0
    k: int = 50
    target_tpr: float = 0.95
    clamp_eps: float = 1e-12

    def __post_init__(self):
        if self.reg_c < 0:
            raise ValueError(f"reg_c must be >= 0, got {self.reg_c}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.target_tpr < 1.0:
            raise ValueError(f"target_tpr must be in (0, 1), got {self.target_tpr}")
        if self.clamp_eps <= 0:
            raise ValueError(f"clamp_eps must be > 0, got {self.clamp_eps}")


@dataclass(frozen=True)
class ScoreTriple:
    """Per-sample confidence components and their unweighted sum."""

    kc: float
    mc: float
    score: float


def threshold_for_target_tpr(scores, target_tpr: float) -> float:
    """Lower-tail order-statistic threshold keeping a ``target_tpr`` fraction above.

    Picks the ascending order statistic at 1-based index
    ``n - ceil(n * target_tpr) + 1`` with no interpolation, so the fraction of
    scores ``>= threshold`` is at least ``target_tpr`` and minimal among
    order-statistic choices. The ceil is taken with a hair of relative slack
    so products like ``100 * 0.95`` do not round up past their intended
    integer value.
    """
    s = np.sort(np.asarray(scores, dtype=np.float64))
    n = s.shape[0]
    if n == 0:
        raise ValueError("scores must be non-empty")
    if not 0.0 < target_tpr < 1.0:
        raise ValueError(f"target_tpr must be in (0, 1), got {target_tpr}")
    keep = math.ceil(n * target_tpr * (1.0 - 1e-12))
    keep = min(max(keep, 1), n)
    return float(s[n - keep])


class ComboodDetector(BaseEstimator):
    """Fused detector: parametric and nonparametric confidences added unweighted.

    The parametric branch fits a power transform on extrema features and a
    regularized Mahalanobis model on the transformed matrix. The nonparametric
    branch L2-normalizes embedding features and scores the k-th neighbor
    distance. Per sample, ``score = kc + mc``; higher means more
    in-distribution. No fusion weights are exposed.

    The two training matrices need not be row-paired (they may come from
    different-size exports of the same in-distribution data); scoring always
    takes paired feature vectors.
    """

    def __init__(self, reg_c: float = 1.0, k: int = 50, target_tpr: float = 0.95,
                 clamp_eps: float = 1e-12):
        self.reg_c = reg_c
        self.k = k
        self.target_tpr = target_tpr
        self.clamp_eps = clamp_eps

    @property
    def config(self) -> DetectorConfig:
        return DetectorConfig(self.reg_c, self.k, self.target_tpr, self.clamp_eps)

    def fit(self, X_extrema, X_embed, y=None):
        """Fit both components on in-distribution training exports."""
        self.config  # validates parameters
        X_extrema = as_matrix(X_extrema, name="X_extrema")
        X_embed = as_matrix(X_embed, name="X_embed")
        transform = PowerTransform().fit(X_extrema)
        maha = RegularizedMahalanobis(reg_c=self.reg_c).fit(transform.transform(X_extrema))
        knn = NormalizedKnn(k=self.k, clamp_eps=self.clamp_eps).fit(normalize_rows(X_embed))
        self.transform_ = transform
        self.maha_ = maha
        self.knn_ = knn
        self.n_embed_ = X_embed.shape[1]
        self.threshold_ = None
        return self

    def score_sample(self, x_extrema, x_embed) -> ScoreTriple:
        """Score one sample; the two component evaluations are independent."""
        check_fitted(self, "knn_")
        x_extrema = as_vector(x_extrema, dim=self.maha_.dim_, name="x_extrema")
        x_embed = as_vector(x_embed, dim=self.n_embed_, name="x_embed")
        kc = self.knn_.confidence(self.knn_.kth_distance(normalize_vector(x_embed)))
        mc = self.maha_.confidence(self.maha_.distance(self.transform_.transform_vector(x_extrema)))
        return ScoreTriple(kc=kc, mc=mc, score=kc + mc)

    def score_samples(self, X_extrema, X_embed, n_threads: int = 1) -> np.ndarray:
        """Score paired rows; returns an (n, 3) array of columns [kc, mc, score].

        Each row is computed independently with the same arithmetic as
        :meth:`score_sample`, so results are identical for any thread count.
        """
        check_fitted(self, "knn_")
        X_extrema = as_matrix(X_extrema, name="X_extrema")
        X_embed = as_matrix(X_embed, name="X_embed")
        if X_extrema.shape[0] != X_embed.shape[0]:
            raise ValueError(
                f"paired scoring needs equal row counts, got {X_extrema.shape[0]} extrema rows "
                f"and {X_embed.shape[0]} embedding rows"
            )
        n = X_extrema.shape[0]
        out = np.empty((n, 3))

        def fill(i: int) -> None:
            t = self.score_sample(X_extrema[i], X_embed[i])
            out[i, 0] = t.kc
            out[i, 1] = t.mc
            out[i, 2] = t.score

        if n_threads and n_threads > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                list(pool.map(fill, range(n)))
        else:
            for i in range(n):
                fill(i)
        return out

    def calibrate_threshold(self, id_validation_scores) -> float:
        """Pick and store the decision threshold from ID validation scores.

        The threshold is the lower-tail order-statistic quantile at which a
        ``target_tpr`` fraction of the validation scores lies at or above it.
        """
        check_fitted(self, "knn_")
        scores = np.asarray(id_validation_scores, dtype=np.float64)
        if scores.ndim != 1 or scores.shape[0] < 20:
            raise ValueError(
                f"calibration needs at least 20 validation scores, got {scores.shape}"
            )
        self.threshold_ = threshold_for_target_tpr(scores, self.target_tpr)
        return self.threshold_

    def decide(self, s: ScoreTriple) -> str:
        """Classify a scored sample: ID iff ``score >= threshold`` (boundary is ID)."""
        check_fitted(self, "knn_")
        if self.threshold_ is None:
            raise ValueError("detector is not calibrated; call calibrate_threshold first")
        return ID if s.score >= self.threshold_ else OOD

    def predict(self, X_extrema, X_embed, n_threads: int = 1) -> np.ndarray:
        """Decisions for paired rows ('ID'/'OOD'); requires calibration."""
        if getattr(self, "threshold_", None) is None:
            raise ValueError("detector is not calibrated; call calibrate_threshold first")
        scores = self.score_samples(X_extrema, X_embed, n_threads=n_threads)[:, 2]
        return np.where(scores >= self.threshold_, ID, OOD)

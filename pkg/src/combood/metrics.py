"""Detection-quality metrics, paired significance testing, and inference timing."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import chi2

from ._validation import as_matrix
from .detector import threshold_for_target_tpr
from .knn import normalize_vector


@dataclass(frozen=True)
class EvalReport:
    """Detection metrics for one ID-vs-OOD score split (positive class = ID)."""

    auroc: float
    aupr: float
    fpr_at_tpr: float
    n_id: int
    n_ood: int

    def to_dict(self) -> dict:
        return asdict(self)


def _score_arrays(id_scores, ood_scores):
    a = np.asarray(id_scores, dtype=np.float64).ravel()
    b = np.asarray(ood_scores, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("score lists must be non-empty")
    return a, b


def auroc(id_scores, ood_scores) -> float:
    """Area under the ROC curve with ID as the positive class.

    Equals the Mann-Whitney statistic
    ``(#pairs with id > ood + 0.5 * #tied pairs) / (n_id * n_ood)``,
    computed by exact counting (ties get half credit), so it matches a
    brute-force pair-counting oracle bit for bit.
    """
    id_s, ood_s = _score_arrays(id_scores, ood_scores)
    ood_sorted = np.sort(ood_s)
    below = np.searchsorted(ood_sorted, id_s, side="left")
    ties = np.searchsorted(ood_sorted, id_s, side="right") - below
    numer = float(below.sum()) + 0.5 * float(ties.sum())
    return numer / (id_s.size * ood_s.size)


def aupr(id_scores, ood_scores) -> float:
    """Area under the precision-recall curve with ID as the positive class.

    Descending-score threshold sweep with step-wise precision (no trapezoids);
    tied scores are processed as a single group.
    """
    id_s, ood_s = _score_arrays(id_scores, ood_scores)
    id_sorted = np.sort(id_s)
    ood_sorted = np.sort(ood_s)
    thresholds = np.unique(np.concatenate([id_s, ood_s]))[::-1]
    tp = id_s.size - np.searchsorted(id_sorted, thresholds, side="left")
    fp = ood_s.size - np.searchsorted(ood_sorted, thresholds, side="left")
    precision = tp / (tp + fp)
    recall = tp / id_s.size
    recall_steps = np.diff(recall, prepend=0.0)
    return float(np.sum(recall_steps * precision))


def fpr_at_tpr(id_scores, ood_scores, tpr: float) -> float:
    """False-positive rate at the threshold that just reaches ``tpr`` on ID scores.

    The threshold is the same order-statistic pick used for calibration;
    OOD samples scoring at or above it count as false positives.
    """
    id_s, ood_s = _score_arrays(id_scores, ood_scores)
    if not 0.0 < tpr < 1.0:
        raise ValueError(f"tpr must be in (0, 1), got {tpr}")
    t = threshold_for_target_tpr(id_s, tpr)
    return float(np.mean(ood_s >= t))


def evaluate(id_scores, ood_scores, tpr: float = 0.95) -> EvalReport:
    """Bundle AUROC, AUPR and FPR@TPR into one report."""
    id_s, ood_s = _score_arrays(id_scores, ood_scores)
    return EvalReport(
        auroc=auroc(id_s, ood_s),
        aupr=aupr(id_s, ood_s),
        fpr_at_tpr=fpr_at_tpr(id_s, ood_s, tpr),
        n_id=int(id_s.size),
        n_ood=int(ood_s.size),
    )


def mcnemar(correct_a, correct_b) -> tuple[float, float]:
    """Continuity-corrected McNemar test on paired correctness vectors.

    With ``b`` = samples A got right and B wrong, ``c`` = the reverse:
    ``statistic = (|b - c| - 1)^2 / (b + c)`` and the p-value is the upper
    tail of chi-squared with one degree of freedom. No discordant pairs
    (``b + c == 0``) gives ``(0.0, 1.0)``.
    """
    a = np.asarray(correct_a, dtype=bool).ravel()
    b_arr = np.asarray(correct_b, dtype=bool).ravel()
    if a.size != b_arr.size:
        raise ValueError(f"correctness vectors differ in length: {a.size} vs {b_arr.size}")
    if a.size == 0:
        raise ValueError("correctness vectors must be non-empty")
    b = int(np.sum(a & ~b_arr))
    c = int(np.sum(~a & b_arr))
    if b + c == 0:
        return 0.0, 1.0
    statistic = (abs(b - c) - 1) ** 2 / (b + c)
    return float(statistic), float(chi2.sf(statistic, df=1))


@dataclass(frozen=True)
class BenchReport:
    """Per-sample inference-time statistics in milliseconds.

    Statistics are computed per repeat over all samples, then averaged across
    repeats. With ``parallel_components`` the recorded per-sample time is the
    maximum of the two component times plus the fusion step, modeling
    simultaneous execution of the components.
    """

    mean_ms: float
    median_ms: float
    p95_ms: float
    n_samples: int
    repeats: int
    parallel_components: bool

    def to_dict(self) -> dict:
        return asdict(self)


def bench_inference(detector, test_extrema, test_embed, repeats: int = 1,
                    parallel_components: bool = True) -> BenchReport:
    """Time per-sample scoring over paired test rows.

    Runs one untimed warm-up pass, then ``repeats`` timed passes on a
    monotonic clock. Each sample's nonparametric and parametric component is
    timed separately so both serial (sum) and parallel (max) accounting are
    possible.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    X_e = as_matrix(test_extrema, name="test_extrema")
    X_m = as_matrix(test_embed, name="test_embed")
    if X_e.shape[0] != X_m.shape[0]:
        raise ValueError(
            f"paired benchmarking needs equal row counts, got {X_e.shape[0]} and {X_m.shape[0]}"
        )
    n = X_e.shape[0]
    knn = detector.knn_
    maha = detector.maha_
    transform = detector.transform_

    def run_once(timed: bool) -> np.ndarray | None:
        per_sample = np.empty(n) if timed else None
        for i in range(n):
            t0 = time.perf_counter()
            kc = knn.confidence(knn.kth_distance(normalize_vector(X_m[i])))
            t1 = time.perf_counter()
            mc = maha.confidence(maha.distance(transform.transform_vector(X_e[i])))
            t2 = time.perf_counter()
            _ = kc + mc
            t3 = time.perf_counter()
            if timed:
                knn_t, maha_t, fuse_t = t1 - t0, t2 - t1, t3 - t2
                if parallel_components:
                    per_sample[i] = max(knn_t, maha_t) + fuse_t
                else:
                    per_sample[i] = knn_t + maha_t + fuse_t
        return per_sample

    run_once(timed=False)  # warm-up, excluded from statistics
    means, medians, p95s = [], [], []
    for _ in range(repeats):
        ms = run_once(timed=True) * 1e3
        means.append(float(np.mean(ms)))
        medians.append(float(np.median(ms)))
        p95s.append(float(np.percentile(ms, 95)))
    return BenchReport(
        mean_ms=float(np.mean(means)),
        median_ms=float(np.mean(medians)),
        p95_ms=float(np.mean(p95s)),
        n_samples=n,
        repeats=repeats,
        parallel_components=parallel_components,
    )

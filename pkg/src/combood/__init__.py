"""Semiparametric out-of-distribution detection toolkit.

Fuses a regularized-Mahalanobis model over power-transformed extrema features
with a k-th nearest-neighbor model over L2-normalized embeddings; the two
log-likelihood-style confidences are added unweighted and thresholded at a
target in-distribution true-positive rate.
"""

from .dataio import (
    FeatureMatrix,
    DetectorArchive,
    load_matrix,
    save_matrix,
    save_detector,
    load_detector,
)
from .detector import (
    ComboodDetector,
    DetectorConfig,
    ScoreTriple,
    threshold_for_target_tpr,
    ID,
    OOD,
)
from .knn import NormalizedKnn, kc_score, normalize_rows, normalize_vector
from .mahalanobis import RegularizedMahalanobis
from .metrics import (
    BenchReport,
    EvalReport,
    auroc,
    aupr,
    bench_inference,
    evaluate,
    fpr_at_tpr,
    mcnemar,
)
from .synth import ScenarioSpec, SyntheticScenario, generate
from .transform import PowerTransform, yeo_johnson, yeo_johnson_inverse

__version__ = "0.1.0"

__all__ = [
    "FeatureMatrix",
    "DetectorArchive",
    "load_matrix",
    "save_matrix",
    "save_detector",
    "load_detector",
    "ComboodDetector",
    "DetectorConfig",
    "ScoreTriple",
    "threshold_for_target_tpr",
    "ID",
    "OOD",
    "NormalizedKnn",
    "kc_score",
    "normalize_rows",
    "normalize_vector",
    "RegularizedMahalanobis",
    "BenchReport",
    "EvalReport",
    "auroc",
    "aupr",
    "bench_inference",
    "evaluate",
    "fpr_at_tpr",
    "mcnemar",
    "ScenarioSpec",
    "SyntheticScenario",
    "generate",
    "PowerTransform",
    "yeo_johnson",
    "yeo_johnson_inverse",
    "__version__",
]

import math
import time

import numpy as np
import pytest

from combood.knn import NormalizedKnn, kc_score, normalize_rows, normalize_vector


def brute_force_kth(train, z, k):
    """Full-sort oracle: all Euclidean distances, ascending, k-th (1-indexed)."""
    dists = sorted(math.sqrt(((train[i] - z) ** 2).sum()) for i in range(train.shape[0]))
    return dists[k - 1]


def unit_rows(rng, n, d):
    return normalize_rows(rng.standard_normal((n, d)))


class TestNormalize:
    def test_three_four_five(self):
        np.testing.assert_array_equal(normalize_rows([[3.0, 4.0]]), [[0.6, 0.8]])

    def test_axis_vectors(self):
        np.testing.assert_array_equal(
            normalize_rows([[1.0, 0.0], [0.0, -2.0]]), [[1.0, 0.0], [0.0, -1.0]]
        )

    def test_zero_row_reports_index(self):
        with pytest.raises(ValueError, match="row 1"):
            normalize_rows([[1.0, 0.0], [0.0, 0.0]])

    def test_output_norms_are_unit(self):
        rng = np.random.default_rng(3)
        Z = normalize_rows(rng.standard_normal((100, 7)) * 50)
        np.testing.assert_allclose(np.linalg.norm(Z, axis=1), 1.0, atol=1e-12)

    def test_vector_variant(self):
        np.testing.assert_array_equal(normalize_vector([3.0, 4.0]), [0.6, 0.8])
        with pytest.raises(ValueError, match="near-zero"):
            normalize_vector([0.0, 0.0])


class TestBuild:
    def test_k_equal_to_rows_is_valid(self):
        rng = np.random.default_rng(0)
        model = NormalizedKnn(k=3).fit(unit_rows(rng, 3, 4))
        assert model.dim_ == 4

    def test_k_zero_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="k must be >= 1"):
            NormalizedKnn(k=0).fit(unit_rows(rng, 3, 4))

    def test_k_beyond_rows_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="exceeds"):
            NormalizedKnn(k=4).fit(unit_rows(rng, 3, 4))

    def test_unnormalized_input_rejected(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((5, 4))
        with pytest.raises(ValueError, match="normalized"):
            NormalizedKnn(k=1).fit(X)


class TestKthDistance:
    def test_self_match_is_zero(self):
        rng = np.random.default_rng(4)
        X = unit_rows(rng, 10, 5)
        model = NormalizedKnn(k=1).fit(X)
        assert model.kth_distance(X[3]) == 0.0

    def test_two_axis_vectors(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        model = NormalizedKnn(k=2).fit(X)
        assert model.kth_distance([1.0, 0.0]) == math.sqrt(2.0)

    def test_matches_brute_force_oracle_exactly(self):
        rng = np.random.default_rng(50)
        X = unit_rows(rng, 50, 8)
        model = NormalizedKnn(k=5).fit(X)
        for _ in range(20):
            z = normalize_vector(rng.standard_normal(8))
            assert model.kth_distance(z) == brute_force_kth(X, z, 5)

    def test_monotone_in_k(self):
        rng = np.random.default_rng(51)
        X = unit_rows(rng, 40, 6)
        z = normalize_vector(rng.standard_normal(6))
        prev = 0.0
        for k in range(1, 41):
            model = NormalizedKnn(k=k).fit(X)
            kd = model.kth_distance(z)
            assert kd >= prev
            prev = kd

    def test_tie_multiset_semantics(self):
        # duplicated training rows count separately at the k-th position
        X = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        z = np.array([1.0, 0.0])
        assert NormalizedKnn(k=1).fit(X).kth_distance(z) == 0.0
        assert NormalizedKnn(k=2).fit(X).kth_distance(z) == 0.0
        assert NormalizedKnn(k=3).fit(X).kth_distance(z) == math.sqrt(2.0)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(1)
        model = NormalizedKnn(k=1).fit(unit_rows(rng, 5, 4))
        with pytest.raises(ValueError, match="length"):
            model.kth_distance([1.0, 0.0])

    def test_unnormalized_query_rejected(self):
        rng = np.random.default_rng(1)
        model = NormalizedKnn(k=1).fit(unit_rows(rng, 5, 4))
        with pytest.raises(ValueError, match="normalized"):
            model.kth_distance([1.0, 1.0, 1.0, 1.0])

    def test_query_time_roughly_linear_in_dimension(self):
        rng = np.random.default_rng(99)
        n_train, n_queries = 2000, 50

        def mean_query_seconds(dim):
            model = NormalizedKnn(k=5).fit(unit_rows(rng, n_train, dim))
            queries = [normalize_vector(rng.standard_normal(dim)) for _ in range(n_queries)]
            for z in queries:
                model.kth_distance(z)  # warm-up
            start = time.perf_counter()
            for z in queries:
                model.kth_distance(z)
            return (time.perf_counter() - start) / n_queries

        ratio = mean_query_seconds(128) / mean_query_seconds(64)
        assert ratio <= 2.5


class TestConfidence:
    def test_unit_distance_scores_zero(self):
        for n in (1, 4, 100):
            assert kc_score(1.0, n) == 0.0

    def test_sqrt_dimension_scaling(self):
        assert kc_score(math.e, 4) == pytest.approx(-2.0, abs=1e-12)

    def test_clamp_gives_finite_ceiling(self):
        assert kc_score(0.0, 1) == pytest.approx(-math.log(1e-12), abs=1e-9)
        assert kc_score(0.0, 1) == pytest.approx(27.631, abs=1e-3)

    def test_monotone_decreasing_in_distance(self):
        kds = [0.0, 1e-14, 1e-6, 0.1, 1.0, 2.0]
        values = [kc_score(kd, 9) for kd in kds]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_linear_in_sqrt_n(self):
        kd = 0.37
        assert kc_score(kd, 16) == pytest.approx(2 * kc_score(kd, 4), rel=1e-12)

    def test_model_confidence_uses_its_dimension(self):
        rng = np.random.default_rng(2)
        model = NormalizedKnn(k=2).fit(unit_rows(rng, 10, 9))
        assert model.confidence(math.e) == pytest.approx(-3.0, abs=1e-12)

    def test_score_samples_matches_scalar_path(self):
        rng = np.random.default_rng(14)
        X = unit_rows(rng, 30, 5)
        model = NormalizedKnn(k=3).fit(X)
        Q = unit_rows(rng, 8, 5)
        batch = model.score_samples(Q)
        single = [model.confidence(model.kth_distance(q)) for q in Q]
        np.testing.assert_array_equal(batch, single)

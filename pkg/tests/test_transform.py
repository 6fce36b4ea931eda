import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import yeojohnson_llf

from combood.transform import PowerTransform, yeo_johnson, yeo_johnson_inverse


def grid_search_lambda(col, lo=-5.0, hi=5.0, step=0.1):
    """Independent MLE oracle: scipy's profile log-likelihood on a coarse grid."""
    grid = np.arange(lo, hi + step / 2, step)
    lls = [yeojohnson_llf(lam, col) for lam in grid]
    return float(grid[int(np.argmax(lls))])


class TestYeoJohnsonFunction:
    def test_lambda_one_is_identity(self):
        assert yeo_johnson(2.0, 1.0) == 2.0
        x = np.linspace(-80, 80, 101)
        np.testing.assert_array_equal(yeo_johnson(x, 1.0), x)

    def test_log_branch(self):
        assert yeo_johnson(math.e - 1.0, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_negative_log_branch(self):
        assert yeo_johnson(-3.0, 2.0) == pytest.approx(-math.log(4.0), abs=1e-12)

    def test_closed_form_positive(self):
        # ((x+1)^lam - 1)/lam by direct evaluation
        assert yeo_johnson(3.0, 2.0) == pytest.approx((4.0**2 - 1) / 2, rel=1e-14)

    def test_closed_form_negative(self):
        # -((-x+1)^(2-lam) - 1)/(2-lam)
        assert yeo_johnson(-3.0, 0.5) == pytest.approx(-(4.0**1.5 - 1) / 1.5, rel=1e-14)

    @given(
        x1=st.floats(-100, 100),
        gap=st.floats(1e-3, 50),
        lam=st.floats(-5, 5),
    )
    @settings(max_examples=300, deadline=None)
    def test_monotone_in_x(self, x1, gap, lam):
        assert yeo_johnson(x1, lam) < yeo_johnson(x1 + gap, lam)

    def test_continuity_at_lambda_zero(self):
        x = np.linspace(0, 100, 501)
        diff = np.abs(yeo_johnson(x, 1e-9) - yeo_johnson(x, 0.0))
        assert diff.max() < 1e-6

    def test_continuity_at_lambda_two(self):
        x = np.linspace(-100, -1e-6, 501)
        diff = np.abs(yeo_johnson(x, 2.0 + 1e-9) - yeo_johnson(x, 2.0))
        assert diff.max() < 1e-6

    @given(
        x=st.floats(-50, 50),
        lam=st.floats(-2, 4),
    )
    @settings(max_examples=300, deadline=None)
    def test_inverse_roundtrip(self, x, lam):
        back = yeo_johnson_inverse(yeo_johnson(x, lam), lam)
        assert back == pytest.approx(x, rel=1e-9, abs=1e-9)


class TestFit:
    def test_recovers_lambda_near_one_on_gaussian(self):
        rng = np.random.default_rng(42)
        col = rng.standard_normal(10_000)
        t = PowerTransform().fit(col.reshape(-1, 1))
        assert 0.7 <= t.lambdas_[0] <= 1.3
        # the optimum localized by the independent grid oracle agrees
        assert abs(t.lambdas_[0] - grid_search_lambda(col)) <= 0.1

    def test_compresses_right_tail_of_exponential(self):
        rng = np.random.default_rng(7)
        col = rng.exponential(1.0, 10_000)
        t = PowerTransform().fit(col.reshape(-1, 1))
        assert t.lambdas_[0] < 0.8
        assert abs(t.lambdas_[0] - grid_search_lambda(col)) <= 0.1

    def test_fit_beats_or_matches_grid_likelihood(self):
        rng = np.random.default_rng(3)
        for col in (rng.standard_normal(500), rng.exponential(2.0, 500), -rng.gamma(3.0, 1.0, 500)):
            t = PowerTransform().fit(col.reshape(-1, 1))
            grid_best = grid_search_lambda(col)
            assert yeojohnson_llf(t.lambdas_[0], col) >= yeojohnson_llf(grid_best, col) - 1e-6

    def test_constant_column_is_clamped(self):
        X = np.full((10, 1), 5.0)
        with pytest.warns(UserWarning, match="constant"):
            t = PowerTransform().fit(X)
        assert t.lambdas_[0] == 1.0
        assert t.means_[0] == 5.0
        assert t.stds_[0] == 1e-12
        np.testing.assert_array_equal(t.transform(X), np.zeros((10, 1)))

    def test_requires_two_rows(self):
        with pytest.raises(ValueError, match="at least 2 rows"):
            PowerTransform().fit(np.array([[1.0, 2.0]]))


class TestApply:
    def test_standardizes_training_data(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((400, 4)) * [1.0, 4.0, 0.3, 10.0] + [0.0, -2.0, 5.0, 1.0]
        t = PowerTransform().fit(X)
        Z = t.transform(X)
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-9)

    def test_identity_configuration(self):
        t = PowerTransform()
        t.lambdas_ = np.array([1.0])
        t.means_ = np.array([0.0])
        t.stds_ = np.array([1.0])
        t.n_features_ = 1
        np.testing.assert_array_equal(t.transform([[7.0]]), [[7.0]])

    def test_log_configuration(self):
        t = PowerTransform()
        t.lambdas_ = np.array([0.0])
        t.means_ = np.array([1.0])
        t.stds_ = np.array([2.0])
        t.n_features_ = 1
        # (ln(e) - 1) / 2 = 0
        np.testing.assert_allclose(t.transform([[math.e - 1.0]]), [[0.0]], atol=1e-15)

    def test_column_count_mismatch(self):
        rng = np.random.default_rng(0)
        t = PowerTransform().fit(rng.standard_normal((20, 3)))
        with pytest.raises(ValueError, match="columns"):
            t.transform(rng.standard_normal((5, 4)))

    def test_vector_path_matches_matrix_path(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((30, 6)) * 3.0 + 1.0
        t = PowerTransform().fit(X)
        Z = t.transform(X)
        for i in range(X.shape[0]):
            np.testing.assert_array_equal(t.transform_vector(X[i]), Z[i])

    def test_inverse_transform_roundtrips(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(-50, 50, (50, 3))
        t = PowerTransform().fit(X)
        back = t.inverse_transform(t.transform(X))
        np.testing.assert_allclose(back, X, rtol=1e-9, atol=1e-9)

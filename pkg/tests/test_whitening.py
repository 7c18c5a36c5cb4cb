"""Whitening transform: identity covariance, determinism, clamping.

The reconstruction-error oracle recomputes eigenvalues with an
independent eigendecomposition and checks the dropped-eigenvalue
identity directly.
"""

import numpy as np
import pytest

from scriptoria.exceptions import ClampedEigenvalueWarning, NotFittedError
from scriptoria.whitening import PCAWhitener


def _random_correlated(rng, n, d):
    mixing = rng.standard_normal((d, d))
    return rng.standard_normal((n, d)) @ mixing + rng.uniform(-3, 3, size=d)


class TestFit:
    def test_diagonal_covariance_becomes_identity(self):
        rng = np.random.default_rng(42)
        X = rng.standard_normal((4000, 2)) * np.array([2.0, 1.0])
        Z = PCAWhitener(n_components=2).fit(X).transform(X)
        cov = np.cov(Z, rowvar=False)
        np.testing.assert_allclose(cov, np.eye(2), atol=1e-4)

    def test_already_white_data_keeps_unit_scale(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((20000, 3))
        w = PCAWhitener(n_components=3).fit(X)
        np.testing.assert_allclose(w.scale_, np.ones(3), atol=0.05)
        # basis is orthonormal
        np.testing.assert_allclose(w.components_.T @ w.components_,
                                   np.eye(3), atol=1e-6)

    def test_duplicated_column_clamps_and_flags(self):
        rng = np.random.default_rng(2)
        base = rng.standard_normal((200, 3))
        X = np.column_stack([base, base[:, 0]])
        with pytest.warns(ClampedEigenvalueWarning):
            w = PCAWhitener(n_components=4).fit(X)
        assert w.clamped_.any()
        assert np.all(np.isfinite(w.scale_)) and np.all(w.scale_ > 0)

    def test_too_few_rows_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError):
            PCAWhitener(n_components=5).fit(rng.standard_normal((5, 5)))

    def test_non_finite_rejected(self):
        X = np.ones((10, 2))
        X[3, 1] = np.nan
        with pytest.raises(ValueError):
            PCAWhitener(n_components=2).fit(X)

    def test_identity_covariance_within_tolerance_random_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            n = int(rng.integers(200, 400))
            d = int(rng.integers(3, 12))
            m = int(rng.integers(1, d + 1))
            X = _random_correlated(rng, n, d)
            w = PCAWhitener(n_components=m).fit(X)
            Z = w.transform(X)
            keep = ~w.clamped_
            cov = np.cov(Z[:, keep], rowvar=False).reshape(keep.sum(),
                                                           keep.sum())
            frob = np.linalg.norm(cov - np.eye(keep.sum()))
            assert frob < 1e-4, f"covariance off identity by {frob}"


class TestTransform:
    def test_mean_maps_to_zero(self):
        rng = np.random.default_rng(4)
        X = _random_correlated(rng, 300, 5)
        w = PCAWhitener(n_components=5).fit(X)
        np.testing.assert_allclose(w.transform(w.mean_), np.zeros(5),
                                   atol=1e-9)

    def test_unit_variance_per_output_coordinate(self):
        rng = np.random.default_rng(5)
        X = _random_correlated(rng, 500, 6)
        Z = PCAWhitener(n_components=4).fit(X).transform(X)
        np.testing.assert_allclose(Z.var(axis=0, ddof=1), np.ones(4),
                                   atol=1e-4)

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(6)
        w = PCAWhitener(n_components=2).fit(rng.standard_normal((50, 4)))
        with pytest.raises(ValueError):
            w.transform(np.ones(3))

    def test_requires_fit(self):
        with pytest.raises(NotFittedError):
            PCAWhitener(n_components=2).transform(np.ones(2))

    def test_reconstruction_error_matches_dropped_eigenvalue_sum(self):
        """Independent eigendecomposition oracle: the average squared
        error of a rank-m reconstruction equals the summed trailing
        eigenvalues of the data covariance."""
        rng = np.random.default_rng(7)
        X = _random_correlated(rng, 400, 8)
        m = 3
        w = PCAWhitener(n_components=m).fit(X)
        recon = w.reconstruct(w.project(X))
        err = np.sum((X - recon) ** 2) / (X.shape[0] - 1)

        eigvals = np.linalg.eigvalsh(np.cov(X, rowvar=False))[::-1]
        np.testing.assert_allclose(err, eigvals[m:].sum(), atol=1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(8)
        X = _random_correlated(rng, 300, 4)
        shift = rng.uniform(-10, 10, size=4)
        Z1 = PCAWhitener(n_components=4).fit(X).transform(X)
        Z2 = PCAWhitener(n_components=4).fit(X + shift).transform(X + shift)
        np.testing.assert_allclose(Z1, Z2, atol=1e-8)


class TestDeterminism:
    def test_same_input_same_transform(self):
        rng = np.random.default_rng(9)
        X = _random_correlated(rng, 250, 6)
        w1 = PCAWhitener(n_components=6).fit(X)
        w2 = PCAWhitener(n_components=6).fit(X.copy())
        np.testing.assert_array_equal(w1.components_, w2.components_)
        np.testing.assert_array_equal(w1.scale_, w2.scale_)

    def test_sign_convention(self):
        """First nonzero coordinate of every basis column is positive."""
        rng = np.random.default_rng(10)
        X = _random_correlated(rng, 250, 6)
        w = PCAWhitener(n_components=6).fit(X)
        for col in w.components_.T:
            first = col[np.abs(col) > 1e-12][0]
            assert first > 0


class TestWideData:
    def test_more_dimensions_than_rows(self):
        """When d > n the fit goes through the Gram matrix; results must
        match the covariance route computed directly."""
        rng = np.random.default_rng(11)
        X = rng.standard_normal((40, 120))
        m = 10
        w = PCAWhitener(n_components=m).fit(X)
        Z = w.transform(X)
        cov = np.cov(Z, rowvar=False)
        np.testing.assert_allclose(cov, np.eye(m), atol=1e-6)

        # oracle: dense covariance eigendecomposition
        dense = np.cov(X, rowvar=False)
        eigvals = np.linalg.eigvalsh(dense)[::-1]
        np.testing.assert_allclose(1.0 / w.scale_ ** 2, eigvals[:m],
                                   rtol=1e-8)

"""PCA dimensionality reduction and whitening.

Used in three places: reducing 128-D local descriptors to 32-D before
clustering, jointly decorrelating concatenated multi-codebook encodings,
and whitening final global descriptors.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ClampedEigenvalueWarning
from .validation import check_fitted, check_matrix


def _fix_eigenvector_signs(basis, tol=1e-12):
    """Flip each column so its first non-negligible coordinate is positive.

    eigh is deterministic up to sign; this pins the sign so fitted
    transforms are reproducible across runs and platforms.
    """
    for j in range(basis.shape[1]):
        col = basis[:, j]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            basis[:, j] = -col
    return basis


class PCAWhitener(BaseEstimator, TransformerMixin):
    """Whitening transform x -> scale * basis.T @ (x - mean).

    Eigendecomposition of the sample covariance (ddof=1), eigenvalues in
    descending order. Eigenvalues below ``epsilon * largest`` are clamped
    to that floor before inversion so the output dimensionality stays
    fixed even for rank-deficient input; clamped dimensions are flagged
    in ``clamped_`` and trigger a ClampedEigenvalueWarning.

    Parameters
    ----------
    n_components : int or None
        Output dimensionality m. None keeps all d input dimensions.
    epsilon : float
        Relative eigenvalue floor.

    Attributes
    ----------
    mean_ : (d,) training mean
    components_ : (d, m) orthonormal principal directions, sign-fixed
    eigenvalues_ : (m,) retained (unclamped) eigenvalues, descending
    scale_ : (m,) inverse square roots of the clamped eigenvalues
    clamped_ : (m,) bool mask of clamped dimensions
    """

    def __init__(self, n_components=None, epsilon=1e-9):
        self.n_components = n_components
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = check_matrix(X, "X", min_rows=2)
        n, d = X.shape
        m = d if self.n_components is None else int(self.n_components)
        if not 1 <= m <= d:
            raise ValueError(f"n_components must be in [1, {d}], got {m}")
        if n <= m:
            raise ValueError(
                f"need more samples than output dimensions: n={n}, m={m}")

        mean = X.mean(axis=0)
        Xc = X - mean

        if d <= n:
            cov = (Xc.T @ Xc) / (n - 1)
            eigval, eigvec = np.linalg.eigh(cov)
        else:
            # d > n: identical eigenpairs via the n x n Gram matrix,
            # avoiding the d x d covariance entirely.
            gram = (Xc @ Xc.T) / (n - 1)
            gval, gvec = np.linalg.eigh(gram)
            keep = gval > max(gval[-1], 0) * 1e-15
            gval, gvec = gval[keep], gvec[:, keep]
            eigvec = (Xc.T @ gvec) / np.sqrt(np.maximum(gval, 1e-300) * (n - 1))
            eigval = gval

        order = np.argsort(eigval)[::-1][:m]
        if order.size < m:
            raise ValueError(
                f"covariance rank {order.size} below requested {m} components")
        eigval = eigval[order]
        basis = _fix_eigenvector_signs(eigvec[:, order].copy())

        floor = max(eigval[0], 0.0) * self.epsilon
        clamped = eigval < floor
        if eigval[0] <= 0:
            clamped = np.ones(m, dtype=bool)
            floor = self.epsilon
        if clamped.any():
            warnings.warn(
                f"{int(clamped.sum())} of {m} eigenvalues clamped to "
                f"{floor:.3e}", ClampedEigenvalueWarning, stacklevel=2)

        self.in_dim_ = d
        self.out_dim_ = m
        self.mean_ = mean
        self.components_ = basis
        self.eigenvalues_ = eigval
        self.clamped_ = clamped
        self.scale_ = 1.0 / np.sqrt(np.where(clamped, floor, eigval))
        return self

    def transform(self, X):
        check_fitted(self, "components_")
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.in_dim_:
            raise ValueError(
                f"input has dimension {X.shape[1]}, transform expects "
                f"{self.in_dim_}")
        out = (X - self.mean_) @ self.components_ * self.scale_
        return out[0] if single else out

    def project(self, X):
        """Dimensionality reduction without variance rescaling."""
        check_fitted(self, "components_")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return (X - self.mean_) @ self.components_

    def reconstruct(self, Z):
        """Map reduced (unwhitened) coordinates back to input space."""
        check_fitted(self, "components_")
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        return Z @ self.components_.T + self.mean_

"""Input validation helpers shared by the estimators and encoders."""

from __future__ import annotations

import numpy as np


def check_matrix(X, name="X", min_rows=0, dtype=np.float64):
    """Coerce to a finite 2-D float array with at least `min_rows` rows."""
    X = np.asarray(X, dtype=dtype)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} rows, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_vector(v, name="v", dtype=np.float64):
    """Coerce to a finite 1-D float array."""
    v = np.asarray(v, dtype=dtype)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def check_dim(actual, expected, name="input"):
    if actual != expected:
        raise ValueError(f"{name} has dimension {actual}, expected {expected}")


def check_image(img, name="image", min_side=1):
    """Coerce to a 2-D float array of intensities; reject degenerate shapes."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {img.shape}")
    h, w = img.shape
    if h < min_side or w < min_side:
        raise ValueError(f"{name} must be at least {min_side}x{min_side}, got {h}x{w}")
    return img


def check_fitted(estimator, attribute):
    from .exceptions import NotFittedError

    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )

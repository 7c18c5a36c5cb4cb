"""Vector normalizations used throughout the pipeline.

Three schemes appear at different stages: Hellinger normalization of raw
SIFT descriptors before clustering, signed power normalization of encoded
global descriptors, and plain L2 normalization as the final step before
cosine comparison.
"""

from __future__ import annotations

import warnings

import numpy as np

from .exceptions import DegenerateInputWarning


def hellinger_normalize(v, order="sqrt-l1"):
    """Hellinger-kernel normalization of a non-negative descriptor.

    Parameters
    ----------
    v : array-like, non-negative
        Descriptor (1-D) or row-wise stack of descriptors (2-D).
    order : {"sqrt-l1", "l1-sqrt"}
        "sqrt-l1" takes the element-wise square root and then divides by
        the L1 norm. "l1-sqrt" divides by the L1 norm first and takes the
        square root afterwards (the RootSIFT variant, which lands on the
        unit L2 sphere instead of the L1 simplex).

    Zero vectors are returned unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("hellinger_normalize requires non-negative entries")
    if order not in ("sqrt-l1", "l1-sqrt"):
        raise ValueError(f"unknown hellinger order: {order!r}")

    axis = v.ndim - 1
    if order == "sqrt-l1":
        out = np.sqrt(v)
        norm = np.sum(out, axis=axis, keepdims=True)
        norm = np.where(norm == 0, 1.0, norm)
        return out / norm
    norm = np.sum(v, axis=axis, keepdims=True)
    norm = np.where(norm == 0, 1.0, norm)
    return np.sqrt(v / norm)


def power_normalize(v, exponent=0.5):
    """Signed element-wise power transform: sign(x) * |x| ** exponent.

    Suppresses bursty coordinates; exponent must lie in (0, 1], and
    exponent = 1 is the identity.
    """
    if not 0 < exponent <= 1:
        raise ValueError(f"power exponent must be in (0, 1], got {exponent}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.power(np.abs(v), exponent)


def l2_normalize(v, warn_on_zero=True):
    """Scale to unit L2 norm; a zero vector stays zero (flagged by warning)."""
    v = np.asarray(v, dtype=np.float64)
    axis = v.ndim - 1
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    zero = norm == 0
    if np.any(zero) and warn_on_zero:
        warnings.warn("l2_normalize: zero-norm vector left as zeros",
                      DegenerateInputWarning, stacklevel=2)
    return v / np.where(zero, 1.0, norm)


def power_l2(v, exponent=0.5, warn_on_zero=True):
    """Power normalization followed by L2 normalization (the encoding
    post-processing pair, always applied in this order)."""
    return l2_normalize(power_normalize(v, exponent), warn_on_zero=warn_on_zero)


def cosine_similarity_matrix(A, B):
    """Pairwise cosine similarity between rows of A and rows of B.

    Zero-norm rows yield similarity 0 against everything.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    na = np.linalg.norm(A, axis=1, keepdims=True)
    nb = np.linalg.norm(B, axis=1, keepdims=True)
    na = np.where(na == 0, 1.0, na)
    nb = np.where(nb == 0, 1.0, nb)
    return (A / na) @ (B / nb).T


__all__ = [
    "hellinger_normalize",
    "power_normalize",
    "l2_normalize",
    "power_l2",
    "cosine_similarity_matrix",
]

"""Image loading, Otsu binarization, and patch standardization.

Images are handled as float64 arrays in [0, 1], row-major. Binary images
use 0 for ink and 1 for background so that script is dark-on-bright,
which is what the minima-only keypoint detector expects.
"""

from __future__ import annotations

import warnings

import numpy as np
from PIL import Image

from .exceptions import DegenerateInputWarning
from .validation import check_image


def load_image(path):
    """Load an 8-bit grayscale PNG/PGM as float64 in [0, 1]."""
    with Image.open(path) as img:
        gray = img.convert("L")
        arr = np.asarray(gray, dtype=np.float64)
    return arr / 255.0


def save_image(path, img):
    """Write a [0, 1] float image as 8-bit grayscale PNG/PGM."""
    img = np.asarray(img, dtype=np.float64)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def otsu_threshold(img):
    """Otsu's threshold over the 256-bin intensity histogram.

    Returns an integer bin index t in [0, 256]; pixels whose 8-bit level
    is < t are ink. The lowest maximizer wins so the result is unique.
    A constant image returns t = 0 (everything background).
    """
    img = check_image(img, "img", min_side=1)
    levels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.intp)
    hist = np.bincount(levels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    if np.count_nonzero(hist) < 2:
        warnings.warn("constant image, no threshold separates it",
                      DegenerateInputWarning)
        return 0
    # between-class variance for every cut t: classes [0,t) and [t,256)
    p = hist / total
    omega = np.cumsum(p)
    mu = np.cumsum(p * np.arange(256))
    mu_total = mu[-1]
    # cut index t corresponds to omega/mu prefix of length t
    w0 = omega[:-1]
    m0 = mu[:-1]
    valid = (w0 > 0) & (w0 < 1)
    sigma_b = np.zeros(255)
    sigma_b[valid] = (mu_total * w0[valid] - m0[valid]) ** 2 / (
        w0[valid] * (1.0 - w0[valid]))
    best = int(np.argmax(sigma_b)) + 1
    return best


def binarize_otsu(img):
    """Binarize with Otsu's rule: pixels below threshold become ink (0)."""
    img = check_image(img, "img", min_side=1)
    t = otsu_threshold(img)
    levels = np.clip(np.rint(img * 255.0), 0, 255)
    return np.where(levels < t, 0.0, 1.0)


def standardize_patch(patch):
    """Shift to zero mean and scale to unit standard deviation.

    A constant patch has no scale; it comes back all-zero with a warning
    so pipeline bookkeeping keeps its slot.
    """
    patch = np.asarray(patch, dtype=np.float64)
    mean = patch.mean()
    std = patch.std()
    if std == 0.0:
        warnings.warn("constant patch standardized to all-zero",
                      DegenerateInputWarning)
        return np.zeros_like(patch)
    return (patch - mean) / std

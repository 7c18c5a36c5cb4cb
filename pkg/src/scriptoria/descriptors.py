"""SIFT descriptors and fixed-size patch extraction at keypoints.

Descriptors and patches are produced as one stream: a keypoint whose
descriptor window or patch window leaves the image is dropped from both,
so row i of the descriptor matrix always corresponds to patch i. That
pairing is what lets cluster labels computed from descriptors be used as
training targets for the patches.

Gradients are taken on the original-resolution image with all windows
scaled by the keypoint's sigma.
"""

from __future__ import annotations

import warnings

import numpy as np

from .exceptions import DegenerateInputWarning
from .validation import check_image

PATCH_SIDE = 32
_DESCR_WIDTH = 4
_DESCR_BINS = 8
_DESCR_SCALE_FACTOR = 3.0
_DESCR_CLIP = 0.2
_ORI_BINS = 36
_ORI_SIGMA_FACTOR = 1.5
_ORI_RADIUS_FACTOR = 3.0


def _gradients(img, ys, xs):
    dx = img[ys, xs + 1] - img[ys, xs - 1]
    dy = img[ys + 1, xs] - img[ys - 1, xs]
    magnitude = np.hypot(dx, dy)
    angle = np.mod(np.arctan2(dy, dx), 2.0 * np.pi)
    return magnitude, angle


def _smooth_circular(hist, passes=2):
    out = hist.astype(np.float64)
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    for _ in range(passes):
        padded = np.concatenate([out[-2:], out, out[:2]])
        out = np.convolve(padded, kernel, mode="valid")
    return out


def compute_orientation(img, kp):
    """Dominant gradient direction around a keypoint, radians [0, 2pi).

    Uses a 36-bin magnitude-weighted histogram over a Gaussian window of
    1.5 sigma, smoothed, with a parabolic fit around the single highest
    bin. Returns None when the window has no gradient energy.
    """
    img = np.asarray(img, dtype=np.float64)
    sigma = _ORI_SIGMA_FACTOR * kp.scale_sigma
    radius = max(1, int(round(_ORI_RADIUS_FACTOR * sigma)))
    cx, cy = int(round(kp.x)), int(round(kp.y))
    y0, y1 = max(1, cy - radius), min(img.shape[0] - 1, cy + radius + 1)
    x0, x1 = max(1, cx - radius), min(img.shape[1] - 1, cx + radius + 1)
    if y0 >= y1 or x0 >= x1:
        return None
    ys, xs = np.mgrid[y0:y1, x0:x1]
    magnitude, angle = _gradients(img, ys, xs)
    weight = np.exp(-((ys - kp.y) ** 2 + (xs - kp.x) ** 2)
                    / (2.0 * sigma * sigma))
    bins = np.floor(angle / (2.0 * np.pi) * _ORI_BINS).astype(int) % _ORI_BINS
    hist = np.bincount(bins.ravel(), weights=(weight * magnitude).ravel(),
                       minlength=_ORI_BINS)
    if hist.max() <= 0:
        return None
    hist = _smooth_circular(hist)
    peak = int(np.argmax(hist))
    left = hist[(peak - 1) % _ORI_BINS]
    right = hist[(peak + 1) % _ORI_BINS]
    denom = left - 2.0 * hist[peak] + right
    shift = 0.0 if denom == 0 else 0.5 * (left - right) / denom
    center = (peak + 0.5 + shift) % _ORI_BINS
    return center * 2.0 * np.pi / _ORI_BINS


def descriptor_radius(kp):
    hist_width = _DESCR_SCALE_FACTOR * kp.scale_sigma
    return int(round(hist_width * np.sqrt(2.0) * (_DESCR_WIDTH + 1) * 0.5))


def descriptor_window_fits(img_shape, kp):
    r = descriptor_radius(kp)
    cx, cy = int(round(kp.x)), int(round(kp.y))
    return (cx - r >= 1 and cx + r <= img_shape[1] - 2
            and cy - r >= 1 and cy + r <= img_shape[0] - 2)


def compute_sift_descriptor(img, kp):
    """128-D gradient histogram descriptor, unit L2 norm.

    4x4 spatial cells x 8 orientation bins over a Gaussian-weighted
    window rotated into the keypoint's orientation frame; trilinear
    accumulation; entries clipped at 0.2 of the norm and renormalized.
    Returns None when the window does not fit; an all-zero vector (with a
    warning) when the window is gradient-free.
    """
    img = np.asarray(img, dtype=np.float64)
    if not descriptor_window_fits(img.shape, kp):
        return None
    d, n_bins = _DESCR_WIDTH, _DESCR_BINS
    hist_width = _DESCR_SCALE_FACTOR * kp.scale_sigma
    radius = descriptor_radius(kp)
    cx, cy = int(round(kp.x)), int(round(kp.y))
    cos_a = np.cos(kp.orientation)
    sin_a = np.sin(kp.orientation)

    # Sample in the frame rotated back by the keypoint orientation so a
    # rotated image (whose dominant orientation rotates with it) yields
    # the same descriptor: v = R(-theta) u for pixel offset u.
    rows, cols = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    row_rot = rows * cos_a - cols * sin_a
    col_rot = cols * cos_a + rows * sin_a
    row_bin = row_rot / hist_width + 0.5 * d - 0.5
    col_bin = col_rot / hist_width + 0.5 * d - 0.5
    inside = (row_bin > -1) & (row_bin < d) & (col_bin > -1) & (col_bin < d)

    ys = (cy + rows)[inside]
    xs = (cx + cols)[inside]
    magnitude, angle = _gradients(img, ys, xs)
    weight = np.exp(-(row_rot[inside] ** 2 + col_rot[inside] ** 2)
                    / (2.0 * (0.5 * d * hist_width) ** 2))
    magnitude = magnitude * weight
    ori_bin = (angle - kp.orientation) / (2.0 * np.pi) * n_bins

    tensor = np.zeros((d + 2, d + 2, n_bins))
    rb, cb, ob = row_bin[inside], col_bin[inside], ori_bin
    rf = np.floor(rb).astype(int)
    cf = np.floor(cb).astype(int)
    of = np.floor(ob).astype(int)
    dr, dc, do = rb - rf, cb - cf, ob - of
    of_mod = of % n_bins
    for bit_r in (0, 1):
        wr = magnitude * (dr if bit_r else 1 - dr)
        for bit_c in (0, 1):
            wc = wr * (dc if bit_c else 1 - dc)
            for bit_o in (0, 1):
                wo = wc * (do if bit_o else 1 - do)
                np.add.at(tensor,
                          (rf + 1 + bit_r, cf + 1 + bit_c,
                           (of_mod + bit_o) % n_bins),
                          wo)
    vec = tensor[1:-1, 1:-1, :].ravel()
    norm = np.linalg.norm(vec)
    if norm == 0:
        warnings.warn("gradient-free descriptor window, zero descriptor",
                      DegenerateInputWarning)
        return vec
    vec = np.minimum(vec, _DESCR_CLIP * norm)
    vec /= np.linalg.norm(vec)
    return vec


def extract_patch(img, kp, side=PATCH_SIDE):
    """Axis-aligned side x side pixel copy centered at the rounded
    location, or None when it would cross the image border."""
    img = np.asarray(img)
    half = side // 2
    cx, cy = int(round(kp.x)), int(round(kp.y))
    y0, x0 = cy - half, cx - half
    if y0 < 0 or x0 < 0 or y0 + side > img.shape[0] \
            or x0 + side > img.shape[1]:
        return None
    return img[y0:y0 + side, x0:x0 + side].copy()


def extract_features(img, keypoints, patch_img=None, patch_side=PATCH_SIDE):
    """Descriptor matrix, patch stack, and surviving keypoints, aligned.

    `patch_img` lets patches come from a different rendering of the same
    page (e.g. the binarized copy) than the gradients do; it defaults to
    `img`. Keypoints whose descriptor window or patch window leaves
    either image are dropped from all three outputs.
    """
    img = check_image(img, "img")
    patch_source = img if patch_img is None else np.asarray(patch_img)
    if patch_source.shape != img.shape:
        raise ValueError("patch_img shape differs from img")
    descriptors, patches, kept = [], [], []
    for kp in keypoints:
        patch = extract_patch(patch_source, kp, side=patch_side)
        if patch is None or not descriptor_window_fits(img.shape, kp):
            continue
        orientation = compute_orientation(img, kp)
        kp.orientation = 0.0 if orientation is None else orientation
        vec = compute_sift_descriptor(img, kp)
        if vec is None:
            continue
        descriptors.append(vec)
        patches.append(patch)
        kept.append(kp)
    if descriptors:
        return (np.asarray(descriptors), np.asarray(patches), kept)
    return (np.zeros((0, _DESCR_WIDTH * _DESCR_WIDTH * _DESCR_BINS)),
            np.zeros((0, patch_side, patch_side)), [])

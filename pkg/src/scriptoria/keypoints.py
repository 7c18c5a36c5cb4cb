"""Difference-of-Gaussian keypoint detection.

The scale space stacks progressively blurred copies of the image; each
DoG level is the less-blurred copy minus the more-blurred one, so a dark
blob on a bright background shows up as a local minimum. Restricted mode
keeps only those minima, which suits script (dark ink, bright page);
full mode keeps minima and maxima.

Coordinates are (x, y) with x the column, sub-pixel, in original-image
pixels regardless of the octave a point was found in.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .validation import check_image

_MIN_OCTAVE_SIDE = 16


@dataclass
class DetectorParams:
    """Scale-space settings. octaves=0 grows octaves until the image
    side would drop below 16 pixels."""

    octaves: int = 0
    scales_per_octave: int = 3
    base_sigma: float = 1.6
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0
    mode: str = "restricted"

    def __post_init__(self):
        if self.scales_per_octave < 2:
            raise ValueError("scales_per_octave must be >= 2")
        if self.base_sigma <= 0 or self.contrast_threshold <= 0 \
                or self.edge_ratio <= 0:
            raise ValueError("detector parameters must be positive")
        if self.mode not in ("full", "restricted"):
            raise ValueError(f"unknown detector mode {self.mode!r}")
        if self.octaves < 0:
            raise ValueError("octaves must be >= 0")


@dataclass
class KeypointRecord:
    """One scale-space extremum."""

    x: float
    y: float
    octave: int
    scale_sigma: float
    polarity: str
    response: float
    orientation: float = 0.0

    def rounded(self):
        return (int(round(self.x)), int(round(self.y)))


def _n_octaves(shape, requested):
    limit = max(1, int(math.floor(
        math.log2(min(shape) / _MIN_OCTAVE_SIDE))) + 1)
    if requested and requested > 0:
        return min(requested, limit)
    return limit


def build_gaussian_pyramid(img, params):
    """List of octaves, each an array (levels, h, w) of blurred images.

    Per octave there are scales_per_octave + 3 levels with sigma
    base_sigma * 2^(i / scales_per_octave) relative to the octave base.
    The next octave starts from the level holding twice the base sigma,
    subsampled by two.
    """
    s = params.scales_per_octave
    k = 2.0 ** (1.0 / s)
    sigmas = params.base_sigma * k ** np.arange(s + 3)
    increments = [sigmas[0]] + [
        math.sqrt(sigmas[i] ** 2 - sigmas[i - 1] ** 2)
        for i in range(1, s + 3)
    ]
    octaves = []
    base = np.asarray(img, dtype=np.float64)
    for _ in range(_n_octaves(img.shape, params.octaves)):
        levels = [ndimage.gaussian_filter(base, increments[0],
                                          mode="nearest")]
        for inc in increments[1:]:
            levels.append(ndimage.gaussian_filter(levels[-1], inc,
                                                  mode="nearest"))
        octaves.append(np.stack(levels))
        base = levels[s][::2, ::2]
    return octaves


def dog_stack(gaussian_octave):
    """DoG levels: each is the sharper image minus the next-blurrier."""
    return gaussian_octave[:-1] - gaussian_octave[1:]


def _extrema_mask(D, level, want_min):
    """Strict 26-neighbor extremum mask for one middle DoG level."""
    center = D[level, 1:-1, 1:-1]
    mask = np.ones(center.shape, dtype=bool)
    for ds in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if ds == 0 and dy == 0 and dx == 0:
                    continue
                neighbor = D[level + ds,
                             1 + dy:D.shape[1] - 1 + dy,
                             1 + dx:D.shape[2] - 1 + dx]
                if want_min:
                    mask &= center < neighbor
                else:
                    mask &= center > neighbor
    return mask


def _refine(D, level, y, x, max_steps=5):
    """Quadratic sub-pixel fit. Returns (level_off, y_off, x_off, value,
    level, y, x) or None when the fit runs off the grid or stays unstable.
    """
    n_levels, h, w = D.shape
    for _ in range(max_steps):
        cube = D[level - 1:level + 2, y - 1:y + 2, x - 1:x + 2]
        ds = 0.5 * (cube[2, 1, 1] - cube[0, 1, 1])
        dy = 0.5 * (cube[1, 2, 1] - cube[1, 0, 1])
        dx = 0.5 * (cube[1, 1, 2] - cube[1, 1, 0])
        dss = cube[2, 1, 1] - 2 * cube[1, 1, 1] + cube[0, 1, 1]
        dyy = cube[1, 2, 1] - 2 * cube[1, 1, 1] + cube[1, 0, 1]
        dxx = cube[1, 1, 2] - 2 * cube[1, 1, 1] + cube[1, 1, 0]
        dsy = 0.25 * (cube[2, 2, 1] - cube[2, 0, 1]
                      - cube[0, 2, 1] + cube[0, 0, 1])
        dsx = 0.25 * (cube[2, 1, 2] - cube[2, 1, 0]
                      - cube[0, 1, 2] + cube[0, 1, 0])
        dyx = 0.25 * (cube[1, 2, 2] - cube[1, 2, 0]
                      - cube[1, 0, 2] + cube[1, 0, 0])
        grad = np.array([ds, dy, dx])
        hess = np.array([[dss, dsy, dsx],
                         [dsy, dyy, dyx],
                         [dsx, dyx, dxx]])
        try:
            offset = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) <= 0.5):
            value = cube[1, 1, 1] + 0.5 * float(grad @ offset)
            return offset[0], offset[1], offset[2], value, level, y, x
        level += int(round(np.clip(offset[0], -1, 1)))
        y += int(round(np.clip(offset[1], -1, 1)))
        x += int(round(np.clip(offset[2], -1, 1)))
        if not (1 <= level < n_levels - 1 and 1 <= y < h - 1
                and 1 <= x < w - 1):
            return None
    return None


def _edge_like(D, level, y, x, edge_ratio):
    """Reject elongated responses: spatial-Hessian trace^2/det test."""
    dxx = D[level, y, x + 1] - 2 * D[level, y, x] + D[level, y, x - 1]
    dyy = D[level, y + 1, x] - 2 * D[level, y, x] + D[level, y - 1, x]
    dxy = 0.25 * (D[level, y + 1, x + 1] - D[level, y + 1, x - 1]
                  - D[level, y - 1, x + 1] + D[level, y - 1, x - 1])
    trace = dxx + dyy
    det = dxx * dyy - dxy * dxy
    if det <= 0:
        return True
    return trace * trace / det >= (edge_ratio + 1) ** 2 / edge_ratio


def detect_keypoints(img, params=None):
    """All surviving scale-space extrema of one image.

    Candidates must be strict 26-neighbor extrema, survive sub-pixel
    refinement (at most 5 re-centering steps), pass the contrast test on
    the interpolated value, and pass the edge-ratio test. A blank image
    yields an empty list.
    """
    if params is None:
        params = DetectorParams()
    img = check_image(img, "img", min_side=_MIN_OCTAVE_SIDE)
    s = params.scales_per_octave
    k = 2.0 ** (1.0 / s)
    prefilter = 0.5 * params.contrast_threshold
    keypoints = []
    for octave_index, gauss in enumerate(build_gaussian_pyramid(img, params)):
        D = dog_stack(gauss)
        factor = 2.0 ** octave_index
        h, w = D.shape[1], D.shape[2]
        for level in range(1, s + 1):
            for want_min in ((True,) if params.mode == "restricted"
                             else (True, False)):
                mask = _extrema_mask(D, level, want_min)
                mask &= np.abs(D[level, 1:-1, 1:-1]) >= prefilter
                for y, x in np.argwhere(mask) + 1:
                    fit = _refine(D, level, int(y), int(x))
                    if fit is None:
                        continue
                    ds, dy, dx, value, lvl, yy, xx = fit
                    if abs(value) < params.contrast_threshold:
                        continue
                    if (value < 0) != want_min:
                        continue
                    if _edge_like(D, lvl, yy, xx, params.edge_ratio):
                        continue
                    px = (xx + dx) * factor
                    py = (yy + dy) * factor
                    if not (0 <= px < img.shape[1]
                            and 0 <= py < img.shape[0]):
                        continue
                    sigma = params.base_sigma * k ** (lvl + ds) * factor
                    keypoints.append(KeypointRecord(
                        x=float(px), y=float(py), octave=octave_index,
                        scale_sigma=float(sigma),
                        polarity="min" if want_min else "max",
                        response=float(value)))
    return keypoints


def dedupe_keypoints(keypoints):
    """Collapse keypoints sharing a rounded (x, y) location.

    The collider with the largest absolute response wins; earlier wins on
    an exact response tie. Survivors keep their input order.
    """
    best = {}
    for i, kp in enumerate(keypoints):
        key = kp.rounded()
        if key not in best or abs(kp.response) > abs(
                keypoints[best[key]].response):
            best[key] = i
    winners = set(best.values())
    return [kp for i, kp in enumerate(keypoints) if i in winners]


def write_keypoints(path, keypoints, config_hash=None):
    from .fileio import atomic_write

    with atomic_write(path) as fh:
        lines = ["x,y,sigma,polarity,response,orientation"]
        for kp in keypoints:
            lines.append(
                f"{kp.x!r},{kp.y!r},{kp.scale_sigma!r},{kp.polarity},"
                f"{kp.response!r},{kp.orientation!r}")
        if config_hash is not None:
            lines.append(f"# config_hash={int(config_hash):016x}")
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))


def read_keypoints(path):
    keypoints = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header != ["x", "y", "sigma", "polarity", "response",
                      "orientation"]:
            raise ValueError(f"{path}: unexpected keypoint header")
        for row in reader:
            keypoints.append(KeypointRecord(
                x=float(row[0]), y=float(row[1]), octave=0,
                scale_sigma=float(row[2]), polarity=row[3],
                response=float(row[4]), orientation=float(row[5])))
    return keypoints

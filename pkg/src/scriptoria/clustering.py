"""Mini-batch k-means and surrogate-class construction.

Surrogate classes turn unlabeled local descriptors into a supervised
training set: descriptors are clustered, each cluster id becomes a class
label, and descriptors whose two nearest centers are nearly equidistant
are dropped as ambiguous. The surviving (patch, label) pairs are what a
downstream classifier trains on.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import ConvergenceWarning
from .validation import check_fitted, check_matrix

import warnings


def pairwise_sq_dists(X, C):
    """Squared Euclidean distances (n, k), clipped at zero."""
    x2 = np.einsum("ij,ij->i", X, X)[:, None]
    c2 = np.einsum("ij,ij->i", C, C)[None, :]
    d2 = x2 + c2 - 2.0 * (X @ C.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def kmeans_plus_plus(X, n_clusters, rng):
    """D^2-weighted seeding. Returns (n_clusters, d) initial centers."""
    n = X.shape[0]
    centers = np.empty((n_clusters, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = X[first]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for i in range(1, n_clusters):
        total = closest.sum()
        if total <= 0:
            # all points coincide with chosen centers; fall back to uniform
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[i] = X[idx]
        np.minimum(closest, np.sum((X - centers[i]) ** 2, axis=1),
                   out=closest)
    return centers


@dataclass
class Assignment:
    """Nearest and second-nearest center for one descriptor."""

    nearest: int
    second: int
    dist_nearest: float
    dist_second: float

    @property
    def ratio(self):
        """Ambiguity ratio d1/d2; zero when a second center is absent."""
        if self.second < 0 or self.dist_second == 0.0:
            return 0.0 if self.dist_nearest == 0.0 else np.inf
        return self.dist_nearest / self.dist_second


def assign_nearest(x, centers):
    """Exhaustive nearest/second-nearest scan for a single descriptor."""
    x = np.asarray(x, dtype=np.float64)
    dists = np.linalg.norm(centers - x[None, :], axis=1)
    if dists.shape[0] == 1:
        return Assignment(0, -1, float(dists[0]), np.inf)
    order = np.argsort(dists, kind="stable")
    i1, i2 = int(order[0]), int(order[1])
    return Assignment(i1, i2, float(dists[i1]), float(dists[i2]))


def assign_nearest_batch(X, centers):
    """Vectorized scan. Returns (idx1, idx2, d1, d2) arrays.

    Ties break toward the lower center index. With a single center the
    second index is -1 and d2 is +inf.
    """
    X = np.asarray(X, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    d2 = pairwise_sq_dists(X, centers)
    idx1 = np.argmin(d2, axis=1)
    d1 = np.sqrt(d2[np.arange(X.shape[0]), idx1])
    if centers.shape[0] == 1:
        return (idx1, np.full(X.shape[0], -1),
                d1, np.full(X.shape[0], np.inf))
    masked = d2.copy()
    masked[np.arange(X.shape[0]), idx1] = np.inf
    idx2 = np.argmin(masked, axis=1)
    dist2 = np.sqrt(masked[np.arange(X.shape[0]), idx2])
    return idx1, idx2, d1, dist2


def ambiguity_ratio(d1, d2):
    """d1/d2 elementwise; 0 where both are 0, +inf where only d2 is 0."""
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = np.asarray(d2, dtype=np.float64)
    out = np.empty_like(d1)
    both_zero = (d1 == 0.0) & (d2 == 0.0)
    second_inf = np.isinf(d2)
    ok = ~both_zero & ~second_inf & (d2 != 0.0)
    out[ok] = d1[ok] / d2[ok]
    out[both_zero | second_inf] = 0.0
    out[~ok & ~both_zero & ~second_inf] = np.inf
    return out


def ratio_filter(ratios, ratio_max=0.9):
    """Keep mask: descriptor is unambiguous iff ratio <= ratio_max."""
    if not 0.0 < ratio_max <= 1.0:
        raise ValueError(f"ratio_max must be in (0, 1], got {ratio_max}")
    return np.asarray(ratios, dtype=np.float64) <= ratio_max


class MiniBatchKMeans(BaseEstimator):
    """Mini-batch k-means with per-center counts as learning rates.

    Each epoch shuffles the (sub)sample and sweeps it in batches. For a
    batch, every member is assigned to its nearest center and each center
    moves to the count-weighted mean of its old position and its new
    members, which equals applying the per-assignment rule 1/count member
    by member. Centers that stay empty through an epoch are reseeded from
    random sample points. Training stops early once the largest center
    movement over an epoch drops below `tol`.

    Fitting is reproducible to the bit for a fixed seed and input order.
    """

    def __init__(self, n_clusters=5000, batch_size=1024, n_epochs=25,
                 sample_size=500_000, tol=1e-4, seed=0):
        self.n_clusters = n_clusters
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.sample_size = sample_size
        self.tol = tol
        self.seed = seed

    def fit(self, X, y=None):
        X = check_matrix(X, "X", min_rows=1)
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be positive")
        if X.shape[0] < self.n_clusters:
            raise ValueError(
                f"need at least n_clusters={self.n_clusters} rows, "
                f"got {X.shape[0]}")
        rng = np.random.default_rng(self.seed)

        if self.sample_size is not None and X.shape[0] > self.sample_size:
            pick = rng.choice(X.shape[0], size=self.sample_size,
                              replace=False)
            sample = X[np.sort(pick)]
        else:
            sample = X
        n = sample.shape[0]

        init_size = min(n, max(3 * self.n_clusters, 2 * self.batch_size))
        init_idx = rng.choice(n, size=init_size, replace=False)
        centers = kmeans_plus_plus(sample[init_idx], self.n_clusters, rng)
        self.init_centers_ = centers.copy()
        counts = np.zeros(self.n_clusters, dtype=np.int64)

        converged = False
        epochs_run = 0
        for _ in range(self.n_epochs):
            epochs_run += 1
            prev = centers.copy()
            perm = rng.permutation(n)
            touched = np.zeros(self.n_clusters, dtype=bool)
            for start in range(0, n, self.batch_size):
                batch = sample[perm[start:start + self.batch_size]]
                idx1 = np.argmin(pairwise_sq_dists(batch, centers), axis=1)
                uniq = np.unique(idx1)
                sums = np.zeros((uniq.shape[0], X.shape[1]))
                np.add.at(sums, np.searchsorted(uniq, idx1), batch)
                members = np.bincount(
                    np.searchsorted(uniq, idx1), minlength=uniq.shape[0])
                old = counts[uniq].astype(np.float64)
                centers[uniq] = (
                    old[:, None] * centers[uniq] + sums
                ) / (old + members)[:, None]
                counts[uniq] += members
                touched[uniq] = True
            empty = ~touched & (counts == 0)
            if empty.any():
                refill = rng.choice(n, size=int(empty.sum()), replace=False)
                centers[empty] = sample[refill]
            movement = np.linalg.norm(centers - prev, axis=1).max()
            if movement < self.tol:
                converged = True
                break

        if not converged and self.n_epochs > 1:
            warnings.warn(
                f"k-means did not converge within {self.n_epochs} epochs "
                f"(last movement {movement:.3g})", ConvergenceWarning)
        self.cluster_centers_ = centers
        self.counts_ = counts
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = epochs_run
        return self

    def predict(self, X):
        check_fitted(self, "cluster_centers_")
        X = check_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} columns, codebook expects "
                f"{self.n_features_in_}")
        return np.argmin(pairwise_sq_dists(X, self.cluster_centers_), axis=1)

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)


@dataclass
class SurrogateDataset:
    """Patches with cluster-id labels, ready for classifier training.

    Patches are stored as 8-bit grayscale (0..255). `meta` holds one
    (image_id, keypoint_index) pair per row. `kept` maps rows back to
    positions in the pre-filter descriptor order.
    """

    patches: np.ndarray
    labels: np.ndarray
    meta: list = field(default_factory=list)
    kept: np.ndarray | None = None

    def __post_init__(self):
        if self.patches.shape[0] != self.labels.shape[0]:
            raise ValueError("patches and labels must align")
        if self.meta and len(self.meta) != self.patches.shape[0]:
            raise ValueError("meta and patches must align")

    def __len__(self):
        return self.patches.shape[0]

    def class_histogram(self, n_classes=None):
        if n_classes is None:
            n_classes = int(self.labels.max()) + 1 if len(self) else 0
        return np.bincount(self.labels, minlength=n_classes)

    def to_directory(self, directory, config_hash=None):
        """Write patches.sptc, labels.slbl and meta.csv."""
        from .fileio import atomic_write, write_slbl, write_sptc

        os.makedirs(directory, exist_ok=True)
        write_sptc(os.path.join(directory, "patches.sptc"),
                   self.patches, config_hash)
        write_slbl(os.path.join(directory, "labels.slbl"),
                   self.labels, config_hash)
        meta_path = os.path.join(directory, "meta.csv")
        with atomic_write(meta_path) as fh:
            lines = ["image_id,keypoint_index,label"]
            for (image_id, kp_index), label in zip(self.meta, self.labels):
                lines.append(f"{image_id},{kp_index},{int(label)}")
            if config_hash is not None:
                lines.append(f"# config_hash={int(config_hash):016x}")
            fh.write(("\n".join(lines) + "\n").encode("utf-8"))

    @classmethod
    def from_directory(cls, directory):
        from .fileio import read_slbl, read_sptc

        patches, _ = read_sptc(os.path.join(directory, "patches.sptc"))
        labels, _ = read_slbl(os.path.join(directory, "labels.slbl"))
        meta = []
        meta_path = os.path.join(directory, "meta.csv")
        if os.path.exists(meta_path):
            with open(meta_path, newline="") as fh:
                reader = csv.reader(
                    row for row in fh if not row.startswith("#"))
                header = next(reader, None)
                if header != ["image_id", "keypoint_index", "label"]:
                    raise ValueError(f"{meta_path}: unexpected header")
                meta = [(row[0], int(row[1])) for row in reader]
        return cls(patches=patches, labels=labels, meta=meta)


def build_surrogate_dataset(patches, descriptors, centers, ratio_max=0.9,
                            meta=None):
    """Assign descriptors to clusters and drop ambiguous ones.

    `patches` is (n, side, side) in [0, 1] or already uint8; `descriptors`
    is the aligned (n, d) matrix in codebook space. Returns a
    SurrogateDataset over the retained rows.
    """
    descriptors = check_matrix(descriptors, "descriptors")
    patches = np.asarray(patches)
    if patches.shape[0] != descriptors.shape[0]:
        raise ValueError("patches and descriptors must align")
    idx1, _, d1, dist2 = assign_nearest_batch(descriptors, centers)
    keep = ratio_filter(ambiguity_ratio(d1, dist2), ratio_max)
    kept = np.flatnonzero(keep)
    if patches.dtype != np.uint8:
        quantized = np.clip(np.rint(patches * 255.0), 0, 255).astype(np.uint8)
    else:
        quantized = patches
    kept_meta = [meta[i] for i in kept] if meta is not None else []
    return SurrogateDataset(
        patches=quantized[kept],
        labels=idx1[kept].astype(np.int64),
        meta=kept_meta,
        kept=kept,
    )

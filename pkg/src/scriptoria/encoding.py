"""Global image encodings from sets of local descriptors.

Three encoders, all producing one L2-normalized vector per image:

- sum pooling: per-dimension sum (weak baseline, order/count sensitive);
- VLAD: per-codebook-center sums of residuals to the nearest center,
  concatenated, power-normalized, L2-normalized;
- multi-codebook VLAD: several VLADs from codebooks trained on disjoint
  descriptor subsamples, concatenated and jointly PCA-whitened.

Estimators take a list of per-image descriptor matrices (images own
different numbers of descriptors, so a single rectangular array cannot
represent a batch).
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator

from .clustering import MiniBatchKMeans, pairwise_sq_dists
from .exceptions import DegenerateInputWarning
from .normalize import l2_normalize, power_normalize
from .validation import check_fitted, check_matrix
from .whitening import PCAWhitener


def vlad_accumulate(X, centers):
    """Raw VLAD: residual sums per nearest center, concatenated (K*d,).

    A center with no assigned descriptors contributes an all-zero block.
    Zero descriptors yield the all-zero vector.
    """
    centers = np.asarray(centers, dtype=np.float64)
    K, d = centers.shape
    X = check_matrix(X, "descriptors")
    if X.shape[0] == 0:
        return np.zeros(K * d)
    if X.shape[1] != d:
        raise ValueError(
            f"descriptors have dim {X.shape[1]}, codebook has {d}")
    # canonical row order makes the float sums independent of input order
    X = X[np.lexsort(X.T)]
    nearest = np.argmin(pairwise_sq_dists(X, centers), axis=1)
    acc = np.zeros((K, d))
    np.add.at(acc, nearest, X)
    counts = np.bincount(nearest, minlength=K)
    acc -= counts[:, None] * centers
    return acc.ravel()


def vlad_encode(X, centers, power_exponent=0.5):
    """Normalized VLAD: accumulate, power-normalize, L2-normalize."""
    v = vlad_accumulate(X, centers)
    if not v.any():
        warnings.warn("all-zero VLAD encoding", DegenerateInputWarning)
        return v
    return l2_normalize(power_normalize(v, power_exponent),
                        warn_on_zero=False)


def sum_pool(X):
    """Per-dimension sum of descriptors, L2-normalized."""
    X = check_matrix(X, "descriptors", min_rows=1)
    total = X.sum(axis=0)
    if not total.any():
        warnings.warn("descriptors cancel to zero in sum pooling",
                      DegenerateInputWarning)
    return l2_normalize(total, warn_on_zero=False)


def _as_groups(groups):
    if isinstance(groups, np.ndarray) and groups.ndim == 2:
        return [groups]
    return list(groups)


class SumEncoder(BaseEstimator):
    """Sum-pooling baseline; fit only records the descriptor dimension."""

    def fit(self, groups, y=None):
        groups = _as_groups(groups)
        if not groups:
            raise ValueError("need at least one descriptor set")
        self.dim_ = check_matrix(groups[0], "descriptors").shape[1]
        return self

    def encode_one(self, X):
        check_fitted(self, "dim_")
        return sum_pool(X)

    def transform(self, groups):
        check_fitted(self, "dim_")
        return np.vstack([self.encode_one(g) for g in _as_groups(groups)])

    @property
    def out_dim_(self):
        check_fitted(self, "dim_")
        return self.dim_


class VladEncoder(BaseEstimator):
    """Single-codebook VLAD encoder."""

    def __init__(self, n_clusters=100, power_exponent=0.5, seed=0,
                 batch_size=1024, n_epochs=25, sample_size=None):
        self.n_clusters = n_clusters
        self.power_exponent = power_exponent
        self.seed = seed
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.sample_size = sample_size

    def fit(self, groups, y=None):
        X = np.vstack([check_matrix(g, "descriptors")
                       for g in _as_groups(groups)])
        self.kmeans_ = MiniBatchKMeans(
            n_clusters=self.n_clusters, batch_size=self.batch_size,
            n_epochs=self.n_epochs, sample_size=self.sample_size,
            seed=self.seed).fit(X)
        self.dim_ = X.shape[1]
        return self

    def encode_one(self, X):
        check_fitted(self, "kmeans_")
        return vlad_encode(X, self.kmeans_.cluster_centers_,
                           self.power_exponent)

    def transform(self, groups):
        check_fitted(self, "kmeans_")
        return np.vstack([self.encode_one(g) for g in _as_groups(groups)])

    @property
    def out_dim_(self):
        check_fitted(self, "kmeans_")
        return self.n_clusters * self.dim_


class MVladEncoder(BaseEstimator):
    """Multi-codebook VLAD with joint decorrelation.

    Codebooks are fit on disjoint slices of a shuffled pool of all
    training descriptors, each with its own seed. The concatenation of
    the per-codebook VLADs of the training images is then PCA-whitened;
    pca_dim=0 keeps the maximum usable dimension. The whitening output
    can never exceed (training images - 1), the rank of their centered
    encodings, so requested dimensions are capped there.
    """

    def __init__(self, n_codebooks=5, n_clusters=100, power_exponent=0.5,
                 whiten=True, pca_dim=0, epsilon=1e-9, seed=0,
                 batch_size=1024, n_epochs=25, sample_size=None):
        self.n_codebooks = n_codebooks
        self.n_clusters = n_clusters
        self.power_exponent = power_exponent
        self.whiten = whiten
        self.pca_dim = pca_dim
        self.epsilon = epsilon
        self.seed = seed
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.sample_size = sample_size

    def fit(self, groups, y=None):
        groups = _as_groups(groups)
        if not groups:
            raise ValueError("need at least one descriptor set")
        X = np.vstack([check_matrix(g, "descriptors") for g in groups])
        if X.shape[0] < self.n_codebooks * self.n_clusters:
            raise ValueError(
                f"{X.shape[0]} descriptors cannot fill {self.n_codebooks} "
                f"disjoint codebooks of {self.n_clusters} clusters")
        rng = np.random.default_rng(self.seed)
        chunks = np.array_split(rng.permutation(X.shape[0]),
                                self.n_codebooks)
        self.codebooks_ = [
            MiniBatchKMeans(
                n_clusters=self.n_clusters, batch_size=self.batch_size,
                n_epochs=self.n_epochs, sample_size=self.sample_size,
                seed=self.seed + i).fit(X[np.sort(chunk)])
            for i, chunk in enumerate(chunks)
        ]
        self.dim_ = X.shape[1]

        if self.whiten:
            raw = np.vstack([self._encode_raw(g) for g in groups])
            max_dim = raw.shape[0] - 1
            wanted = self.pca_dim if self.pca_dim > 0 else raw.shape[1]
            out_dim = min(wanted, max_dim, raw.shape[1])
            if 0 < self.pca_dim != out_dim:
                warnings.warn(
                    f"whitening output capped at {out_dim} "
                    f"(requested {self.pca_dim}, rank limit {max_dim})")
            if out_dim < 1:
                raise ValueError("too few training images for whitening")
            self.whitener_ = PCAWhitener(
                n_components=out_dim, epsilon=self.epsilon).fit(raw)
        else:
            self.whitener_ = None
        return self

    def _encode_raw(self, X):
        return np.concatenate([
            vlad_encode(X, km.cluster_centers_, self.power_exponent)
            for km in self.codebooks_
        ])

    def encode_one(self, X):
        check_fitted(self, "codebooks_")
        raw = self._encode_raw(X)
        if self.whitener_ is not None:
            raw = self.whitener_.transform(raw)
        return l2_normalize(raw)

    def transform(self, groups):
        check_fitted(self, "codebooks_")
        return np.vstack([self.encode_one(g) for g in _as_groups(groups)])

    @property
    def out_dim_(self):
        check_fitted(self, "codebooks_")
        if self.whitener_ is not None:
            return self.whitener_.out_dim_
        return self.n_codebooks * self.n_clusters * self.dim_


def make_encoder(kind, **kwargs):
    """Encoder factory for the pipeline: sum, vlad, or mvlad."""
    if kind == "sum":
        return SumEncoder()
    if kind == "vlad":
        allowed = ("n_clusters", "power_exponent", "seed", "batch_size",
                   "n_epochs", "sample_size")
        return VladEncoder(**{k: v for k, v in kwargs.items()
                              if k in allowed})
    if kind == "mvlad":
        return MVladEncoder(**kwargs)
    raise ValueError(f"unknown encoder kind {kind!r}")

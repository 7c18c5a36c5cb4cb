"""Linear SVMs with squared hinge loss, trained by full-batch descent.

The objective for weights w (no bias) is

    f(w) = 0.5 ||w||^2 + c_p * sum_p h(w.x_p) + c_n * sum_n h(-w.x_n)

with h(t) = max(0, 1 - t)^2. It is smooth and strongly convex, so plain
gradient descent with a line search converges to the unique minimum and
does so deterministically, which matters more here than raw speed: the
solver output is itself used as a feature.

Exemplar re-encoding trains one such SVM per query with the query as the
only positive and a fixed pool as negatives, then uses w / ||w||_2 as
the query's new representation. Cost weights are tied to one free
parameter C, scaled inversely to class sizes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import ConvergenceWarning
from .normalize import l2_normalize
from .validation import check_fitted, check_matrix

DEFAULT_C_GRID = tuple(10.0 ** e for e in range(-5, 5))


def class_costs(C, n_pos, n_neg):
    """Per-class cost weights, inversely proportional to class size."""
    if n_pos < 1 or n_neg < 1:
        raise ValueError("need at least one sample per class")
    total = n_pos + n_neg
    return C * total / (2.0 * n_pos), C * total / (2.0 * n_neg)


def svm_objective(w, pos, neg, c_p, c_n):
    """Value of the squared-hinge objective."""
    margin_p = 1.0 - pos @ w
    margin_n = 1.0 + neg @ w
    return (0.5 * float(w @ w)
            + c_p * float(np.sum(np.maximum(margin_p, 0.0) ** 2))
            + c_n * float(np.sum(np.maximum(margin_n, 0.0) ** 2)))


def svm_gradient(w, pos, neg, c_p, c_n):
    """Analytic gradient of the squared-hinge objective."""
    margin_p = np.maximum(1.0 - pos @ w, 0.0)
    margin_n = np.maximum(1.0 + neg @ w, 0.0)
    return (w
            - 2.0 * c_p * (margin_p @ pos)
            + 2.0 * c_n * (margin_n @ neg))


@dataclass
class SvmModel:
    w: np.ndarray
    C: float
    c_p: float
    c_n: float
    objective_value: float
    n_iterations: int = 0
    converged: bool = True

    def decision(self, X):
        return np.asarray(X, dtype=np.float64) @ self.w


def train_linear_svm(pos, neg, C=1.0, c_p=None, c_n=None,
                     tolerance=1e-6, max_iterations=1000, warn=True):
    """Minimize the squared-hinge objective to gradient norm <= tolerance.

    `c_p` / `c_n` default to the size-balanced weights derived from C;
    passing them explicitly overrides that coupling. Descent directions
    use spectral (previous-step) step sizes guarded by an Armijo
    backtracking line search, starting from w = 0.
    """
    pos = check_matrix(np.atleast_2d(np.asarray(pos, dtype=np.float64)),
                       "positives", min_rows=1)
    neg = check_matrix(np.atleast_2d(np.asarray(neg, dtype=np.float64)),
                       "negatives", min_rows=1)
    if pos.shape[1] != neg.shape[1]:
        raise ValueError("positive and negative dimensions differ")
    if C <= 0:
        raise ValueError("C must be positive")
    auto_p, auto_n = class_costs(C, pos.shape[0], neg.shape[0])
    c_p = auto_p if c_p is None else float(c_p)
    c_n = auto_n if c_n is None else float(c_n)

    w = np.zeros(pos.shape[1])
    grad = svm_gradient(w, pos, neg, c_p, c_n)
    value = svm_objective(w, pos, neg, c_p, c_n)
    step = 1.0 / (1.0 + 2.0 * (c_p * pos.shape[0] + c_n * neg.shape[0]))
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        gnorm2 = float(grad @ grad)
        if np.sqrt(gnorm2) <= tolerance:
            converged = True
            iterations -= 1
            break
        # Armijo backtracking from the spectral step estimate
        t = step
        for _ in range(60):
            w_new = w - t * grad
            value_new = svm_objective(w_new, pos, neg, c_p, c_n)
            if value_new <= value - 0.25 * t * gnorm2:
                break
            t *= 0.5
        grad_new = svm_gradient(w_new, pos, neg, c_p, c_n)
        dw = w_new - w
        dg = grad_new - grad
        denom = float(dw @ dg)
        step = float(dw @ dw) / denom if denom > 0 else t * 2.0
        w, grad, value = w_new, grad_new, value_new
    else:
        converged = np.linalg.norm(grad) <= tolerance
    if not converged and warn:
        warnings.warn(
            f"SVM solver stopped at {iterations} iterations with "
            f"gradient norm {np.linalg.norm(grad):.3g}", ConvergenceWarning)
    return SvmModel(w=w, C=C, c_p=c_p, c_n=c_n,
                    objective_value=svm_objective(w, pos, neg, c_p, c_n),
                    n_iterations=iterations, converged=converged)


def esvm_feature(query, negatives, C=1.0, tolerance=1e-6,
                 max_iterations=1000):
    """Query re-encoding: the unit-norm weight vector of an SVM trained
    with the query as its only positive."""
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1:
        raise ValueError("query must be a single vector")
    if not query.any():
        raise ValueError("cannot re-encode an all-zero query")
    model = train_linear_svm(query[None, :], negatives, C=C,
                             tolerance=tolerance,
                             max_iterations=max_iterations, warn=False)
    return l2_normalize(model.w)


class EsvmReencoder(BaseEstimator):
    """Re-encodes vectors against a fixed negative pool.

    fit() stores the pool; transform() maps each row to its exemplar-SVM
    feature. Rows are independent solves, so a transform is trivially
    parallel; it is kept sequential for determinism.
    """

    def __init__(self, C=1.0, tolerance=1e-6, max_iterations=1000):
        self.C = C
        self.tolerance = tolerance
        self.max_iterations = max_iterations

    def fit(self, negatives, y=None):
        self.negatives_ = check_matrix(negatives, "negatives", min_rows=1)
        return self

    def transform(self, X):
        check_fitted(self, "negatives_")
        X = check_matrix(np.atleast_2d(np.asarray(X, dtype=np.float64)), "X")
        if X.shape[1] != self.negatives_.shape[1]:
            raise ValueError(
                f"queries have dim {X.shape[1]}, negatives have "
                f"{self.negatives_.shape[1]}")
        return np.vstack([
            esvm_feature(row, self.negatives_, C=self.C,
                         tolerance=self.tolerance,
                         max_iterations=self.max_iterations)
            for row in X
        ])


class MulticlassSvm(BaseEstimator):
    """One-vs-rest squared-hinge classifier over global encodings."""

    def __init__(self, C=1.0, tolerance=1e-6, max_iterations=1000):
        self.C = C
        self.tolerance = tolerance
        self.max_iterations = max_iterations

    def fit(self, X, y):
        X = check_matrix(X, "X", min_rows=2)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least 2 classes")
        self.models_ = []
        for cls in self.classes_:
            mask = y == cls
            if not mask.any() or mask.all():
                raise ValueError(f"class {cls!r} has a degenerate split")
            self.models_.append(train_linear_svm(
                X[mask], X[~mask], C=self.C, tolerance=self.tolerance,
                max_iterations=self.max_iterations, warn=False))
        return self

    def decision_function(self, X):
        check_fitted(self, "models_")
        X = check_matrix(np.atleast_2d(np.asarray(X, dtype=np.float64)), "X")
        return np.column_stack([m.decision(X) for m in self.models_])

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))


def _writer_disjoint_folds(labels, n_folds, seed=0):
    """Partition label values (not rows) into n_folds groups."""
    writers = np.unique(labels)
    if writers.shape[0] < n_folds:
        raise ValueError(
            f"{writers.shape[0]} distinct labels cannot form "
            f"{n_folds} writer-disjoint folds")
    rng = np.random.default_rng(seed)
    shuffled = writers[rng.permutation(writers.shape[0])]
    return np.array_split(shuffled, n_folds)


def _stratified_folds(labels, n_folds, seed=0):
    """Per-class round-robin row assignment to n_folds groups."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(n_folds)]
    for cls in np.unique(labels):
        rows = np.flatnonzero(labels == cls)
        rows = rows[rng.permutation(rows.shape[0])]
        for i, row in enumerate(rows):
            folds[i % n_folds].append(int(row))
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def select_c(encodings, labels, mode="retrieval", grid=DEFAULT_C_GRID,
             n_folds=None, seed=0, tolerance=1e-6, max_iterations=1000):
    """Pick C from a grid by cross-validated mAP or accuracy.

    Retrieval mode re-encodes each held-out writer group against the
    remaining writers' encodings and scores leave-one-out mAP inside the
    group. Classification mode trains one-vs-rest on the remaining rows
    and scores held-out accuracy. Ties go to the smaller C.
    """
    from .retrieval import leave_one_out_eval

    X = check_matrix(encodings, "encodings", min_rows=2)
    labels = np.asarray(labels)
    if np.unique(labels).shape[0] < 2:
        raise ValueError("need at least 2 distinct labels")
    grid = sorted(float(c) for c in grid)
    if not grid:
        raise ValueError("empty C grid")
    if mode not in ("retrieval", "classification"):
        raise ValueError(f"unknown mode {mode!r}")
    if n_folds is None:
        n_folds = 2 if mode == "retrieval" else 5
    scores = []
    if mode == "retrieval":
        folds = _writer_disjoint_folds(labels, n_folds, seed=seed)
        for C in grid:
            fold_scores = []
            for held_writers in folds:
                held = np.isin(labels, held_writers)
                if held.sum() < 2 or (~held).sum() < 1:
                    continue
                features = np.vstack([
                    esvm_feature(row, X[~held], C=C, tolerance=tolerance,
                                 max_iterations=max_iterations)
                    for row in X[held]
                ])
                report = leave_one_out_eval(features, labels[held])
                fold_scores.append(report.map)
            scores.append(float(np.mean(fold_scores)))
    else:
        max_folds = int(np.min(np.bincount(
            np.unique(labels, return_inverse=True)[1])))
        if max_folds < n_folds:
            warnings.warn(
                f"smallest class supports only {max_folds} folds, "
                f"reducing from {n_folds}")
            n_folds = max(2, max_folds)
        folds = _stratified_folds(labels, n_folds, seed=seed)
        for C in grid:
            fold_scores = []
            for held in folds:
                mask = np.zeros(X.shape[0], dtype=bool)
                mask[held] = True
                if np.unique(labels[~mask]).shape[0] < 2:
                    continue
                clf = MulticlassSvm(C=C, tolerance=tolerance,
                                    max_iterations=max_iterations)
                clf.fit(X[~mask], labels[~mask])
                fold_scores.append(clf.score(X[mask], labels[mask]))
            scores.append(float(np.mean(fold_scores)))
    best = int(np.argmax(scores))
    return grid[best], dict(zip(grid, scores))

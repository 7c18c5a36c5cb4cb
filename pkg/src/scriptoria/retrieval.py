"""Cosine ranking and ranked-retrieval metrics.

The evaluation protocol is leave-one-image-out: every image queries the
remaining images, a ranked list is formed by cosine similarity, and an
item is relevant when it shares the query's label. Metrics per query:

- precision@N: fraction of the top N that is relevant;
- Soft-N: 1 if anything in the top N is relevant;
- Hard-N: 1 if everything in the top N is relevant;
- average precision: mean of precision@k over the ranks k that hold a
  relevant item.

Aggregates are means over queries. Top-1 equals Hard-1, Soft-1 and p@1,
so it is reported once.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInputWarning, TruncatedListWarning
from .validation import check_matrix

TABLE_COLUMNS = ("top1", "hard2", "hard3", "hard4", "soft5", "soft10",
                 "p@2", "p@3", "p@4", "mAP")
DEFAULT_NS = tuple(range(1, 11))


@dataclass
class RankedList:
    """One query's ranking of the gallery.

    `ranked` pairs gallery ids with cosine similarities in non-increasing
    order; ties break lexicographically by id. Zero-norm gallery vectors
    get similarity -1.0 so they land at the bottom. `relevance` holds a
    0/1 flag per ranked entry.
    """

    query_id: str
    ranked: list = field(default_factory=list)
    relevance: list = field(default_factory=list)


def cosine_rank(query, gallery, gallery_ids):
    """Indices, similarities of gallery rows, best first."""
    gallery = check_matrix(gallery, "gallery", min_rows=1)
    query = np.asarray(query, dtype=np.float64)
    ids = np.asarray(gallery_ids, dtype=str)
    if ids.shape[0] != gallery.shape[0]:
        raise ValueError("gallery ids and rows must align")
    qnorm = np.linalg.norm(query)
    gnorms = np.linalg.norm(gallery, axis=1)
    sims = np.zeros(gallery.shape[0])
    if qnorm == 0:
        warnings.warn("zero-norm query vector", DegenerateInputWarning)
    else:
        nz = gnorms > 0
        sims[nz] = (gallery[nz] @ query) / (gnorms[nz] * qnorm)
    if (gnorms == 0).any():
        warnings.warn("zero-norm gallery vectors ranked last",
                      DegenerateInputWarning)
        sims[gnorms == 0] = -1.0
    order = np.lexsort((ids, -sims))
    return order, sims[order]


def rank(query, query_id, gallery, gallery_ids, gallery_labels=None,
         query_label=None):
    """Build a RankedList for one query against a gallery."""
    order, sims = cosine_rank(query, gallery, gallery_ids)
    ids = [gallery_ids[i] for i in order]
    if query_id in ids:
        raise ValueError(f"query id {query_id!r} is present in the gallery")
    ranked = list(zip(ids, sims.tolist()))
    relevance = []
    if gallery_labels is not None and query_label is not None:
        relevance = [int(gallery_labels[i] == query_label) for i in order]
    return RankedList(query_id=query_id, ranked=ranked, relevance=relevance)


def average_precision(rel):
    """Mean of precision@k over the positions k of relevant items.

    Zero relevant items is a degenerate query: AP is 0 with a warning.
    """
    rel = np.asarray(rel, dtype=np.int64)
    if rel.size == 0 or rel.sum() == 0:
        warnings.warn("query with no relevant items scores AP 0",
                      DegenerateInputWarning)
        return 0.0
    cum = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    return float(np.mean(cum[ranks - 1] / ranks))


def _effective_prefix(rel, n):
    if n < 1:
        raise ValueError("N must be >= 1")
    rel = np.asarray(rel, dtype=np.int64)
    if rel.size < n:
        warnings.warn(f"ranked list of {rel.size} truncated below N={n}",
                      TruncatedListWarning)
        n = rel.size
    return rel[:n], n


def precision_at_n(rel, n):
    prefix, n = _effective_prefix(rel, n)
    return float(prefix.sum() / n) if n else 0.0


def soft_n(rel, n):
    prefix, n = _effective_prefix(rel, n)
    return int(prefix.any()) if n else 0


def hard_n(rel, n):
    prefix, n = _effective_prefix(rel, n)
    return int(prefix.all()) if n else 0


@dataclass
class EvalReport:
    top1: float
    hard: dict
    soft: dict
    p_at: dict
    map: float
    per_query_ap: list
    query_ids: list = field(default_factory=list)
    n_queries: int = 0
    n_flagged: int = 0

    def to_json_dict(self, config_hash=None):
        out = {
            "top1": self.top1,
            "hard": {str(k): v for k, v in self.hard.items()},
            "soft": {str(k): v for k, v in self.soft.items()},
            "p_at": {str(k): v for k, v in self.p_at.items()},
            "map": self.map,
            "per_query": [
                {"id": q, "ap": ap}
                for q, ap in zip(self.query_ids, self.per_query_ap)
            ],
            "n_queries": self.n_queries,
            "n_flagged": self.n_flagged,
        }
        if config_hash is not None:
            out["config_hash"] = f"{int(config_hash):016x}"
        return out

    def to_json(self, config_hash=None):
        return json.dumps(self.to_json_dict(config_hash), indent=2,
                          sort_keys=True)

    def format_table(self):
        """Plain-text summary over the standard column set."""
        values = [self.top1,
                  self.hard.get(2, float("nan")),
                  self.hard.get(3, float("nan")),
                  self.hard.get(4, float("nan")),
                  self.soft.get(5, float("nan")),
                  self.soft.get(10, float("nan")),
                  self.p_at.get(2, float("nan")),
                  self.p_at.get(3, float("nan")),
                  self.p_at.get(4, float("nan")),
                  self.map]
        header = "  ".join(f"{c:>7}" for c in TABLE_COLUMNS)
        row = "  ".join(f"{v:7.4f}" for v in values)
        return header + "\n" + row


def leave_one_out_eval(encodings, labels, ids=None, ns=DEFAULT_NS):
    """Every image queries all the others; metrics are averaged.

    A query whose label appears on no other image has no relevant items;
    its AP counts as 0 (flagged), matching the definition.
    """
    X = check_matrix(encodings, "encodings", min_rows=2)
    labels = [str(v) for v in np.asarray(labels)]
    if len(labels) != X.shape[0]:
        raise ValueError("labels and encodings must align")
    if ids is None:
        width = len(str(X.shape[0] - 1))
        ids = [f"q{idx:0{width}d}" for idx in range(X.shape[0])]
    ids = [str(i) for i in ids]

    norms = np.linalg.norm(X, axis=1)
    unit = np.divide(X, norms[:, None], out=np.zeros_like(X),
                     where=norms[:, None] > 0)
    sims_all = unit @ unit.T
    id_arr = np.asarray(ids, dtype=str)
    label_arr = np.asarray(labels, dtype=str)

    aps, hard_acc, soft_acc, p_acc = [], {}, {}, {}
    flagged = 0
    for n in ns:
        hard_acc[n], soft_acc[n], p_acc[n] = [], [], []
    for i in range(X.shape[0]):
        keep = np.ones(X.shape[0], dtype=bool)
        keep[i] = False
        sims = sims_all[i, keep].copy()
        if norms[i] == 0:
            warnings.warn("zero-norm query vector", DegenerateInputWarning)
        zero_gallery = norms[keep] == 0
        if zero_gallery.any():
            sims[zero_gallery] = -1.0
        order = np.lexsort((id_arr[keep], -sims))
        rel = (label_arr[keep][order] == labels[i]).astype(np.int64)
        if rel.sum() == 0:
            flagged += 1
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateInputWarning)
                aps.append(average_precision(rel))
        else:
            aps.append(average_precision(rel))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncatedListWarning)
            for n in ns:
                hard_acc[n].append(hard_n(rel, n))
                soft_acc[n].append(soft_n(rel, n))
                p_acc[n].append(precision_at_n(rel, n))
    if flagged:
        warnings.warn(
            f"{flagged} queries had no relevant gallery items (AP 0)",
            DegenerateInputWarning)
    hard = {n: float(np.mean(hard_acc[n])) for n in ns}
    soft = {n: float(np.mean(soft_acc[n])) for n in ns}
    p_at = {n: float(np.mean(p_acc[n])) for n in ns}
    return EvalReport(
        top1=p_at.get(1, hard.get(1, 0.0)),
        hard=hard, soft=soft, p_at=p_at,
        map=float(np.mean(aps)), per_query_ap=aps, query_ids=ids,
        n_queries=X.shape[0], n_flagged=flagged)

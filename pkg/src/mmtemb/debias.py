"""Localized centering, All-but-the-Top, and k-occurrence hubness statistics.

Every function accepts an :class:`EmbeddingTable`, :class:`PretrainedEmbeddings`
or a bare 2-D array and returns the same kind of object. For tables the four
special tokens are excluded from neighbour candidates and from the global
statistics; they are still transformed, except PAD which stays zero.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .embedding_io import PAD_ID, EmbeddingTable, PretrainedEmbeddings
from .numerics.linalg import pca_top_components

METRICS = ("cosine", "euclidean")
DEFAULT_K = 10
DEFAULT_D = 3
_BLOCK = 256


@dataclass(frozen=True)
class DebiasMethod:
    kind: str = "none"
    k: int = DEFAULT_K
    d: int = DEFAULT_D

    def __post_init__(self):
        if self.kind not in ("none", "localized_centering", "all_but_the_top"):
            raise ValueError(f"unknown debias method {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.d < 0:
            raise ValueError("D must be >= 0")

    def apply(self, emb, metric="cosine"):
        if self.kind == "localized_centering":
            return localized_centering(emb, self.k, metric)
        if self.kind == "all_but_the_top":
            return all_but_the_top(emb, self.d)
        return emb


def _unpack(emb):
    """(matrix, active-row mask, labels, rebuild) for any supported input."""
    if isinstance(emb, EmbeddingTable):
        x = np.asarray(emb.matrix, dtype=np.float64)
        active = np.ones(len(x), dtype=bool)
        active[:4] = False
        return x, active, list(emb.vocab.tokens), emb.replace_matrix, True
    if isinstance(emb, PretrainedEmbeddings):
        x = emb.vectors
        return x, np.ones(len(x), dtype=bool), list(emb.words), emb.replace_vectors, False
    x = np.asarray(emb, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D embedding matrix, got shape {x.shape}")
    return x, np.ones(len(x), dtype=bool), [str(i) for i in range(len(x))], lambda m: m, False


def _threads():
    try:
        return max(1, int(os.environ.get("MMT_THREADS", "1")))
    except ValueError:
        return 1


def _similarity_block(x, normed, rows, candidates, metric):
    if metric == "cosine":
        return normed[rows] @ normed[candidates].T
    sq = np.sum(x[candidates] ** 2, axis=1)
    q = x[rows]
    d2 = np.sum(q * q, axis=1)[:, None] + sq[None, :] - 2.0 * q @ x[candidates].T
    return -np.maximum(d2, 0.0)


def _normalized(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms == 0, 1.0, norms)


def _top_k(sim_row, candidates, k):
    """k best candidates by (similarity desc, id asc)."""
    if k < len(sim_row):
        kth = np.partition(sim_row, len(sim_row) - k)[len(sim_row) - k]
        keep = np.flatnonzero(sim_row >= kth)
    else:
        keep = np.arange(len(sim_row))
    order = np.lexsort((candidates[keep], -sim_row[keep]))[:k]
    return candidates[keep[order]]


def _all_neighbors(x, active, k, metric, queries=None):
    """kNN lists (candidate ids) for every row in ``queries`` (default: all)."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    candidates = np.flatnonzero(active)
    if k < 1 or k >= len(candidates):
        raise ValueError(f"k={k} needs more than k candidate words ({len(candidates)} available)")
    queries = np.arange(len(x)) if queries is None else np.asarray(queries)
    normed = _normalized(x) if metric == "cosine" else None
    position = np.full(len(x), -1)
    position[candidates] = np.arange(len(candidates))

    def run(block):
        sims = _similarity_block(x, normed, block, candidates, metric)
        out = np.empty((len(block), k), dtype=np.int64)
        for r, q in enumerate(block):
            row = sims[r]
            if position[q] >= 0:
                row = row.copy()
                row[position[q]] = -np.inf
            out[r] = _top_k(row, candidates, k)
        return out

    blocks = [queries[i:i + _BLOCK] for i in range(0, len(queries), _BLOCK)]
    if not blocks:
        return np.zeros((0, k), dtype=np.int64)
    workers = _threads()
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return np.concatenate(parts)


def k_nearest_neighbors(emb, word_id, k, metric="cosine"):
    """Ids of the ``k`` most similar other words, best first; ties by lower id."""
    x, active, *_ = _unpack(emb)
    return [int(i) for i in _all_neighbors(x, active, k, metric, queries=[word_id])[0]]


def localized_centering(emb, k=DEFAULT_K, metric="cosine"):
    """Subtract from each vector the mean of its k nearest neighbours.

    All centroids come from the input table, so the result does not depend
    on processing order.
    """
    x, active, _, rebuild, is_table = _unpack(emb)
    nn = _all_neighbors(x, active, k, metric)
    out = x - x[nn].mean(axis=1)
    if is_table:
        out[PAD_ID] = 0.0
    return rebuild(out)


def all_but_the_top(emb, d=DEFAULT_D):
    """Remove the vocabulary mean, then the projections on the top ``d``
    principal directions of the centered vectors."""
    x, active, _, rebuild, is_table = _unpack(emb)
    if d < 0 or d > x.shape[1]:
        raise ValueError(f"D={d} must lie in [0, {x.shape[1]}]")
    centered = x - x[active].mean(axis=0)
    rows = centered[active]
    d = min(d, min(rows.shape))
    basis = pca_top_components(rows, d)
    u = basis.components
    out = centered - (centered @ u.T) @ u
    if is_table:
        out[PAD_ID] = 0.0
    return rebuild(out)


@dataclass
class HubnessReport:
    k: int
    metric: str
    words: list
    n_k: np.ndarray
    skewness: float
    skewness_defined: bool = True

    def top_hubs(self, n=10):
        order = np.lexsort((np.arange(len(self.n_k)), -self.n_k))[:n]
        return [(self.words[i], int(self.n_k[i])) for i in order]

    def to_json(self, top=10):
        doc = {
            "k": self.k,
            "skewness": self.skewness,
            "top_hubs": [{"word": w, "n_k": n} for w, n in self.top_hubs(top)],
        }
        if not self.skewness_defined:
            doc["skewness_defined"] = False
        return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def skewness(values):
    """Population third standardized moment; 0 for a constant sample."""
    v = np.asarray(values, dtype=np.float64)
    centered = v - v.mean()
    var = np.mean(centered ** 2)
    if var == 0:
        return 0.0
    return float(np.mean(centered ** 3) / var ** 1.5)


def hubness_report(emb, k=DEFAULT_K, metric="cosine"):
    """k-occurrence counts over the non-special words and their skewness."""
    x, active, labels, _, _ = _unpack(emb)
    ids = np.flatnonzero(active)
    nn = _all_neighbors(x, active, k, metric, queries=ids)
    counts = np.bincount(nn.reshape(-1), minlength=len(x))[ids]
    defined = len(ids) >= 3
    skew = skewness(counts) if defined else 0.0
    return HubnessReport(k, metric, [labels[i] for i in ids], counts, skew, defined)

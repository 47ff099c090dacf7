"""Feature similarity, heterophilic-edge removal and kNN graph construction."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import CONTINUOUS, DISCRETE, FeatureMatrix, Graph

JACCARD = "jaccard"
COSINE = "cosine"

_MODE_KIND = {JACCARD: DISCRETE, COSINE: CONTINUOUS}


def resolve_mode(features: FeatureMatrix, mode: str | None = None) -> str:
    """Return the similarity mode for ``features``; ``None``/"auto" picks by kind."""
    if mode in (None, "auto"):
        return JACCARD if features.feature_kind == DISCRETE else COSINE
    if mode not in _MODE_KIND:
        raise ValueError(f"unknown similarity mode {mode!r}")
    if _MODE_KIND[mode] != features.feature_kind:
        raise ValueError(
            f"{mode} similarity requires {_MODE_KIND[mode]} features, "
            f"got {features.feature_kind}"
        )
    return mode


@dataclass(frozen=True)
class PurifyConfig:
    t1: float = 0.0
    mode: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.t1 <= 1.0:
            raise ValueError("t1 must lie in [0, 1]")
        if self.t1 > 0.5:
            warnings.warn(f"t1={self.t1} is outside the usual [0, 0.5] grid", stacklevel=3)


def _support(features: FeatureMatrix) -> sp.csr_matrix:
    s = features.sparse.copy()
    s.data = (s.data != 0).astype(np.float64)
    s.eliminate_zeros()
    return s


def _row_norms(x: sp.csr_matrix) -> np.ndarray:
    return np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())


def _divide(num, den):
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def pair_similarities(features: FeatureMatrix, rows, cols, mode: str) -> np.ndarray:
    """Similarity for each ``(rows[i], cols[i])`` pair, vectorized.

    No kind check is done here; callers go through :func:`resolve_mode`
    where the feature kind matters.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if mode == JACCARD:
        s = _support(features)
        inter = np.asarray(s[rows].multiply(s[cols]).sum(axis=1)).ravel()
        size = np.asarray(s.sum(axis=1)).ravel()
        return _divide(inter, size[rows] + size[cols] - inter)
    if mode == COSINE:
        x = features.sparse
        dots = np.asarray(x[rows].multiply(x[cols]).sum(axis=1)).ravel()
        norm = _row_norms(x)
        return _divide(dots, norm[rows] * norm[cols])
    raise ValueError(f"unknown similarity mode {mode!r}")


def edge_similarity(features: FeatureMatrix, i: int, j: int, mode: str | None = None) -> float:
    mode = resolve_mode(features, mode)
    return float(pair_similarities(features, [i], [j], mode)[0])


def similarity_block(features: FeatureMatrix, rows, mode: str) -> np.ndarray:
    """Dense ``len(rows) x n`` block of pairwise similarities."""
    rows = np.asarray(rows, dtype=np.int64)
    if mode == JACCARD:
        s = _support(features)
        inter = (s[rows] @ s.T).toarray()
        size = np.asarray(s.sum(axis=1)).ravel()
        return _divide(inter, size[rows, None] + size[None, :] - inter)
    if mode == COSINE:
        x = features.sparse
        dots = (x[rows] @ x.T).toarray()
        norm = _row_norms(x)
        return _divide(dots, norm[rows, None] * norm[None, :])
    raise ValueError(f"unknown similarity mode {mode!r}")


def remove_heterophilic(graph: Graph, features: FeatureMatrix, config: PurifyConfig):
    """Drop every edge whose endpoint similarity is not strictly above ``t1``.

    Returns the purified graph and the removed edges (``u < v``, sorted).
    """
    mode = resolve_mode(features, config.mode)
    edges = graph.edges
    if len(edges) == 0:
        return graph, edges.copy()
    sim = pair_similarities(features, edges[:, 0], edges[:, 1], mode)
    keep = sim > config.t1
    return Graph.from_edges(graph.num_nodes, edges[keep]), edges[~keep].copy()


def knn_picks(features: FeatureMatrix, k: int, mode: str = COSINE,
              chunk: int = 2048) -> np.ndarray:
    """Directed top-``k`` picks per node, ``(n, k)``; ties go to the smaller id."""
    n = features.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    picks = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        sim = similarity_block(features, rows, mode)
        sim[np.arange(len(rows)), rows] = -np.inf
        picks[rows] = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    return picks


def build_knn_graph(features: FeatureMatrix, k: int, mode: str = COSINE) -> Graph:
    """Symmetric union of each node's ``k`` most similar nodes."""
    picks = knn_picks(features, k, mode)
    src = np.repeat(np.arange(features.shape[0]), k)
    return Graph.from_edges(features.shape[0], np.stack([src, picks.ravel()], axis=1))

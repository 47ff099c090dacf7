"""Homophilic edge addition for low-degree nodes, guided by a surrogate GCN."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .gcn import GCN, TrainConfig, normalized_adjacency, softmax, train
from .graph import Dataset, Graph, tail_nodes


@dataclass(frozen=True)
class AugmentConfig:
    t2: float = 0.8
    p: int = 3
    tail_bound: int = 5

    def __post_init__(self):
        if not 0 < self.t2 < 1:
            raise ValueError("t2 must lie in (0, 1)")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be >= 0")
        if not 0.5 <= self.t2 <= 0.9:
            warnings.warn(f"t2={self.t2} is outside the usual [0.5, 0.9] grid", stacklevel=3)


@dataclass(frozen=True, eq=False)
class SurrogateOutput:
    probs: np.ndarray

    @property
    def predicted(self) -> np.ndarray:
        return self.probs.argmax(axis=1)


def train_surrogate(graph: Graph, dataset: Dataset, config: TrainConfig) -> SurrogateOutput:
    """Fit a GCN on ``graph`` and return its full-graph probabilities (dropout off)."""
    adj = normalized_adjacency(graph)
    X = dataset.features.sparse
    params, _ = train(adj, X, dataset.labels, dataset.train, dataset.val, config,
                      num_classes=dataset.num_classes)
    return SurrogateOutput(softmax(GCN(adj, X).logits(params)))


@dataclass(frozen=True, eq=False)
class Addition:
    """Audit trail of one augmentation pass: one row per pick."""
    source: np.ndarray   # tail node v
    target: np.ndarray   # chosen candidate q
    score: np.ndarray    # surrogate probability of q for v's class

    def __len__(self):
        return len(self.source)

    @property
    def edges(self) -> np.ndarray:
        return np.stack([self.source, self.target], axis=1)


def add_homophilic_links(graph: Graph, surrogate: SurrogateOutput, config: AugmentConfig,
                         tail=None, known_labels: dict | None = None):
    """Connect confident tail nodes to the top-``p`` candidates of their class.

    ``tail`` defaults to the low-degree nodes of ``graph`` itself; the pipeline
    passes the tail set of its input graph instead. ``known_labels`` maps node
    id to true label and overrides the surrogate's class for those nodes.
    Candidates exclude ``v`` and its neighbours in ``graph``; every selection
    is made against the unmodified ``graph``, so the result does not depend on
    the processing order.
    """
    probs = surrogate.probs
    n = graph.num_nodes
    if probs.shape[0] != n:
        raise ValueError("surrogate output does not cover every node")
    if tail is None:
        tail = tail_nodes(graph, config.tail_bound)
    conf = probs.max(axis=1)
    cls = probs.argmax(axis=1)
    if known_labels:
        ids = np.fromiter(known_labels.keys(), dtype=np.int64)
        cls[ids] = np.fromiter(known_labels.values(), dtype=np.int64)
    # per class: node ids by descending probability, smaller id first on ties
    ranking = {}
    src, dst, score = [], [], []
    for v in np.sort(np.asarray(tail, dtype=np.int64)):
        if conf[v] <= config.t2:
            continue
        c = cls[v]
        if c not in ranking:
            ranking[c] = np.argsort(-probs[:, c], kind="stable")
        blocked = set(graph.neighbors(v).tolist())
        blocked.add(int(v))
        picked = 0
        for q in ranking[c]:
            if q in blocked:
                continue
            src.append(v)
            dst.append(q)
            score.append(probs[q, c])
            picked += 1
            if picked == config.p:
                break
    audit = Addition(np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                     np.array(score, dtype=np.float64))
    if not len(audit):
        return graph, audit
    return Graph.from_edges(n, np.concatenate([graph.edges, audit.edges])), audit

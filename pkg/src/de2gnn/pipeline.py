"""Purify -> augment -> kNN -> train, for the full model, its ablations and the baselines."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .augment import Addition, AugmentConfig, add_homophilic_links, train_surrogate
from .config import VARIANTS, PipelineConfig
from .fusion import ConcatModel, De2Model, train_de2
from .gcn import GCN, normalized_adjacency, softmax, train
from .graph import Dataset, Graph, tail_nodes
from .purify import JACCARD, PurifyConfig, build_knn_graph, remove_heterophilic, resolve_mode

log = logging.getLogger(__name__)

_EMPTY_ADDITION = Addition(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))


def surrogate_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class Views:
    tail: np.ndarray
    degrees: np.ndarray
    g_hetero: Graph
    removed: np.ndarray
    g_homo: Graph
    added: Addition
    g_knn: Graph | None


@dataclass(frozen=True, eq=False)
class RunResult:
    variant: str
    seed: int
    probs: np.ndarray
    attention: np.ndarray | None
    params: dict
    curve: object
    views: Views

    @property
    def predictions(self) -> np.ndarray:
        return self.probs.argmax(axis=1)


class Pipeline:
    """One dataset plus one (possibly perturbed) input graph.

    Seed-independent stages (purification, the kNN graph) are computed once
    and reused across repeated runs.
    """

    def __init__(self, dataset: Dataset, graph: Graph | None, config: PipelineConfig):
        self.dataset = dataset
        self.graph = dataset.graph if graph is None else graph
        if self.graph.num_nodes != dataset.num_nodes:
            raise ValueError("input graph and dataset disagree on node count")
        self.config = config

    @cached_property
    def purified(self):
        cfg = PurifyConfig(self.config.t1, self.config.similarity)
        return remove_heterophilic(self.graph, self.dataset.features, cfg)

    @cached_property
    def knn(self) -> Graph:
        mode = self.config.knn_similarity
        if mode == JACCARD:
            resolve_mode(self.dataset.features, mode)
        return build_knn_graph(self.dataset.features, self.config.k, mode)

    @cached_property
    def reference_graph(self) -> Graph:
        if self.config.tail_reference == "purified":
            return self.purified[0]
        return self.graph

    @cached_property
    def tail(self) -> np.ndarray:
        return tail_nodes(self.reference_graph, self.config.tail_bound)

    def _augment(self, base: Graph, seed: int):
        cfg = self.config
        sur = train_surrogate(base, self.dataset, cfg.surrogate.with_seed(surrogate_seed(seed)))
        known = dict(zip(self.dataset.train.tolist(),
                         self.dataset.labels[self.dataset.train].tolist()))
        return add_homophilic_links(base, sur, AugmentConfig(cfg.t2, cfg.p, cfg.tail_bound),
                                    tail=self.tail, known_labels=known)

    def views(self, variant: str, seed: int) -> Views:
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        no_removal = np.zeros((0, 2), np.int64)
        if variant in ("gcn", "no_hetero"):
            base, removed = self.graph, no_removal
        else:
            base, removed = self.purified
        if variant in ("gcn", "jaccard", "no_homo"):
            homo, added = base, _EMPTY_ADDITION
        else:
            homo, added = self._augment(base, seed)
        knn = self.knn if variant in ("full", "no_hetero", "no_homo", "no_attn") else None
        return Views(self.tail, self.reference_graph.degrees, base, removed, homo, added, knn)

    def run(self, variant: str | None = None, seed: int | None = None) -> RunResult:
        variant = variant or self.config.variant
        seed = self.config.seed if seed is None else seed
        v = self.views(variant, seed)
        ds = self.dataset
        tc = self.config.train.with_seed(seed)
        attention = None
        if v.g_knn is None:
            adj = normalized_adjacency(v.g_homo)
            X = ds.features.sparse
            params, curve = train(adj, X, ds.labels, ds.train, ds.val, tc,
                                  num_classes=ds.num_classes)
            logits = GCN(adj, X).logits(params)
        else:
            model_cls = ConcatModel if variant == "no_attn" else De2Model
            params, curve, model = train_de2(ds, v.g_homo, v.g_knn, tc, model_cls)
            if model_cls is De2Model:
                cache = model.forward(params)
                logits, attention = cache["y"], cache["alpha"]
            else:
                logits = model.logits(params)
        log.debug("%s seed=%d: %d epochs, best %d", variant, seed, len(curve.epochs),
                  curve.best_epoch)
        return RunResult(variant, seed, softmax(logits), attention, params, curve, v)

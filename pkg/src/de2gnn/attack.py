"""Perturbed-graph ingestion, a label-aware edge-injection attack, budget accounting."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gcn import TrainConfig
from .graph import Dataset, Graph, canonical_edges, read_edges, with_edges_added
from .purify import pair_similarities, resolve_mode, similarity_block

EXTERNAL = "external_file"
HEURISTIC = "heuristic"


@dataclass(frozen=True)
class AttackBudget:
    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError("attack rate must be >= 0")

    def count(self, num_edges: int) -> int:
        """Perturbation count, rounding half away from zero."""
        return int(math.floor(self.rate * num_edges + 0.5))


@dataclass(frozen=True, eq=False)
class PerturbationRecord:
    added: np.ndarray
    removed: np.ndarray
    rate: float
    source: str

    def __len__(self):
        return len(self.added) + len(self.removed)

    def to_json(self) -> dict:
        return {
            "added": self.added.tolist(),
            "removed": self.removed.tolist(),
            "rate": self.rate,
            "source": self.source,
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def read(cls, path) -> PerturbationRecord:
        raw = json.loads(Path(path).read_text())
        return cls(canonical_edges(raw["added"]), canonical_edges(raw["removed"]),
                   float(raw["rate"]), raw["source"])


def _diff(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """Rows of ``a`` not in ``b`` (both canonical edge arrays)."""
    keys_b = b[:, 0] * n + b[:, 1]
    return a[~np.isin(a[:, 0] * n + a[:, 1], keys_b)]


def record_between(clean: Graph, perturbed: Graph, source: str) -> PerturbationRecord:
    n = clean.num_nodes
    added = _diff(perturbed.edges, clean.edges, n)
    removed = _diff(clean.edges, perturbed.edges, n)
    rate = (len(added) + len(removed)) / clean.num_edges if clean.num_edges else 0.0
    return PerturbationRecord(added, removed, rate, source)


def load_perturbed_graph(dataset: Dataset, path):
    """Read a perturbed edge file over the dataset's node set."""
    graph = Graph.from_edges(dataset.num_nodes, read_edges(path, dataset.num_nodes))
    record = record_between(dataset.graph, graph, EXTERNAL)
    if len(record) == 0:
        warnings.warn(f"{path}: perturbed graph is identical to the clean graph", stacklevel=2)
    return graph, record


def _attacker_labels(dataset: Dataset, seed: int, train_config: TrainConfig | None):
    """True labels on train nodes, a clean-graph GCN's predictions elsewhere."""
    from .augment import train_surrogate

    config = (train_config or TrainConfig()).with_seed(seed)
    labels = train_surrogate(dataset.graph, dataset, config).predicted.copy()
    labels[dataset.train] = dataset.labels[dataset.train]
    return labels


def candidate_pool(dataset: Dataset, labels: np.ndarray, threshold: float, mode: str,
                   chunk: int = 1024) -> np.ndarray:
    """All non-adjacent pairs ``u < v`` with different labels and similarity < ``threshold``."""
    n = dataset.num_nodes
    adj = dataset.graph.to_scipy()
    out = []
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        sim = similarity_block(dataset.features, rows, mode)
        ok = sim < threshold
        ok &= labels[rows, None] != labels[None, :]
        ok &= np.arange(n)[None, :] > rows[:, None]
        ok &= ~adj[rows].toarray().astype(bool)
        r, c = np.nonzero(ok)
        out.append(np.stack([rows[r], c], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)


def heuristic_attack(dataset: Dataset, budget: AttackBudget, seed: int = 0,
                     train_config: TrainConfig | None = None, labels=None):
    """Inject ``budget.count(|E|)`` heterophilic edges.

    Each injected edge joins two nodes with different (true-or-predicted)
    labels whose feature similarity is below the median similarity of the
    clean edges. Edges are drawn uniformly without replacement from that pool.
    ``labels`` skips the surrogate and uses the given label estimate directly.
    """
    graph = dataset.graph
    delta = budget.count(graph.num_edges)
    if delta == 0:
        return graph, PerturbationRecord(np.zeros((0, 2), np.int64), np.zeros((0, 2), np.int64),
                                         0.0, HEURISTIC)
    mode = resolve_mode(dataset.features)
    edges = graph.edges
    threshold = float(np.median(pair_similarities(dataset.features, edges[:, 0], edges[:, 1], mode)))
    if labels is None:
        labels = _attacker_labels(dataset, seed, train_config)
    pool = candidate_pool(dataset, np.asarray(labels), threshold, mode)
    if len(pool) < delta:
        raise ValueError(f"only {len(pool)} qualifying pairs for a budget of {delta}")
    rng = np.random.default_rng([seed, 7])
    chosen = canonical_edges(pool[rng.choice(len(pool), size=delta, replace=False)])
    attacked = with_edges_added(graph, chosen)
    return attacked, PerturbationRecord(chosen, np.zeros((0, 2), np.int64),
                                        delta / graph.num_edges, HEURISTIC)

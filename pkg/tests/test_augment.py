import numpy as np
import pytest

import oracles
from conftest import random_edges
from de2gnn.augment import AugmentConfig, SurrogateOutput, add_homophilic_links, train_surrogate
from de2gnn.gcn import TrainConfig
from de2gnn.graph import DISCRETE, Dataset, FeatureMatrix, Graph, degree, tail_nodes


def separable_dataset(n_per=6, C=3):
    n = n_per * C
    labels = np.repeat(np.arange(C), n_per)
    X = np.zeros((n, C + 2))
    X[np.arange(n), labels] = 1
    X[:, C] = np.arange(n) % 2  # label-independent noise column
    X[:, C + 1] = 1
    edges = [(i, i + 1) for i in range(n - 1) if labels[i] == labels[i + 1]]
    train = np.arange(0, n, 2)
    rest = np.arange(1, n, 2)
    return Dataset(Graph.from_edges(n, edges), FeatureMatrix(X, DISCRETE), labels, C,
                   train, rest[:len(rest) // 2], rest[len(rest) // 2:], "separable")


def test_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(p=0)
    with pytest.raises(ValueError):
        AugmentConfig(t2=1.0)
    with pytest.warns(UserWarning):
        AugmentConfig(t2=0.95)


def test_surrogate_fits_separable_toy():
    ds = separable_dataset()
    cfg = TrainConfig(seed=1, max_epochs=100, patience=100)
    a = train_surrogate(ds.graph, ds, cfg)
    b = train_surrogate(ds.graph, ds, cfg)
    assert (a.predicted[ds.train] == ds.labels[ds.train]).all()
    np.testing.assert_allclose(a.probs.sum(axis=1), 1.0, rtol=0, atol=1e-9)
    assert a.probs.tobytes() == b.probs.tobytes()


def _example_probs():
    col1 = np.array([0.95, 0.9, 0.4, 0.8, 0.7])
    return SurrogateOutput(np.column_stack([1 - col1, col1]))


def test_top_p_non_adjacent_candidates():
    g = Graph.from_edges(5, [(0, 1)])
    out, audit = add_homophilic_links(g, _example_probs(), AugmentConfig(0.8, 2), tail=[0])
    assert audit.edges.tolist() == [[0, 3], [0, 4]]
    np.testing.assert_allclose(audit.score, [0.8, 0.7])
    assert out.edges.tolist() == [[0, 1], [0, 3], [0, 4]]


def test_below_threshold_adds_nothing():
    probs = SurrogateOutput(np.array([[0.3, 0.7], [0.1, 0.9], [0.5, 0.5]]))
    g = Graph.from_edges(3, [(1, 2)])
    out, audit = add_homophilic_links(g, probs, AugmentConfig(0.8, 2), tail=[0])
    assert len(audit) == 0 and out == g


def test_threshold_is_strict():
    probs = SurrogateOutput(np.array([[0.2, 0.8], [0.1, 0.9], [0.5, 0.5]]))
    _, audit = add_homophilic_links(Graph.empty(3), probs, AugmentConfig(0.8, 1), tail=[0])
    assert len(audit) == 0


def test_p_larger_than_pool():
    g = Graph.from_edges(5, [(0, 1)])
    _, audit = add_homophilic_links(g, _example_probs(), AugmentConfig(0.8, 10), tail=[0])
    assert sorted(audit.target.tolist()) == [2, 3, 4]


def test_no_tail_nodes_identity():
    k4 = Graph.from_edges(4, [(u, v) for u in range(4) for v in range(u + 1, 4)])
    probs = SurrogateOutput(np.tile([0.05, 0.95], (4, 1)))
    out, audit = add_homophilic_links(k4, probs, AugmentConfig(0.8, 2, tail_bound=2))
    assert out == k4 and len(audit) == 0


def test_known_label_overrides_prediction():
    probs = SurrogateOutput(np.array([[0.1, 0.9], [0.8, 0.2], [0.3, 0.7], [0.6, 0.4]]))
    _, audit = add_homophilic_links(Graph.empty(4), probs, AugmentConfig(0.8, 1), tail=[0],
                                    known_labels={0: 0})
    assert audit.edges.tolist() == [[0, 1]]


def test_snapshot_is_order_independent():
    # node 1's pick must not see the edge just added for node 0
    probs = SurrogateOutput(np.array([[0.05, 0.95], [0.05, 0.95], [0.5, 0.5], [0.4, 0.6]]))
    _, audit = add_homophilic_links(Graph.empty(4), probs, AugmentConfig(0.8, 1), tail=[0, 1])
    assert audit.edges.tolist() == [[0, 1], [1, 0]]


def test_ties_go_to_smaller_id():
    probs = SurrogateOutput(np.array([[0.1, 0.9], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]))
    _, audit = add_homophilic_links(Graph.empty(4), probs, AugmentConfig(0.8, 2), tail=[0])
    assert audit.target.tolist() == [1, 2]


def _random_case(rng):
    n = int(rng.integers(2, 51))
    C = int(rng.integers(2, 5))
    g = Graph.from_edges(n, random_edges(rng, n, rng.random() * 0.3))
    logits = rng.normal(size=(n, C)) * 3
    if rng.random() < 0.5:
        logits = np.round(logits)  # plenty of exact ties
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    cfg = AugmentConfig(float(rng.choice([0.5, 0.6, 0.7, 0.8, 0.9])), int(rng.integers(1, 6)),
                        int(rng.integers(0, 6)))
    known = {int(v): int(rng.integers(0, C)) for v in rng.choice(n, size=n // 4, replace=False)}
    return g, probs, cfg, known


def test_matches_full_sort_oracle():
    rng = np.random.default_rng(99)
    for _ in range(100):
        g, probs, cfg, known = _random_case(rng)
        tail = tail_nodes(g, cfg.tail_bound)
        _, audit = add_homophilic_links(g, SurrogateOutput(probs), cfg, tail=tail,
                                        known_labels=known)
        expect = oracles.homophilic_additions(g.num_nodes, g.edges.tolist(), probs.tolist(),
                                              tail.tolist(), cfg.t2, cfg.p, known)
        assert [tuple(e) for e in audit.edges.tolist()] == expect


def test_post_hoc_audit():
    rng = np.random.default_rng(5)
    for _ in range(30):
        g, probs, cfg, _ = _random_case(rng)
        out, audit = add_homophilic_links(g, SurrogateOutput(probs), cfg)
        assert all(degree(out, u) >= degree(g, u) for u in range(g.num_nodes))
        for v in np.unique(audit.source):
            picks = audit.target[audit.source == v]
            assert len(picks) <= cfg.p
            assert degree(g, v) <= cfg.tail_bound
            assert probs[v].max() > cfg.t2
            c = probs[v].argmax()
            candidates = [q for q in range(g.num_nodes) if q != v and not g.has_edge(v, q)]
            ranked = sorted(candidates, key=lambda q: (-probs[q, c], q))
            assert picks.tolist() == ranked[:cfg.p]
            np.testing.assert_array_equal(audit.score[audit.source == v], probs[picks, c])

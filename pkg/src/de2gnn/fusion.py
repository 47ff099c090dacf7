"""Two GCN towers fused per node by a softmax attention over the two views.

Tower outputs are combined at the logit level::

    scores = tanh([H1, H2] @ W_attn)          # n x 2
    alpha  = softmax(scores)                   # row-wise
    Y      = alpha[:, :1] * H1 + alpha[:, 1:] * H2
"""
from __future__ import annotations

import numpy as np

from .gcn import (GCN, Params, TrainConfig, _ce_from_logits, _indices, add_weight_decay,
                  fit, glorot, init_gcn_params, normalized_adjacency, seeded_rng, softmax)
from .graph import Dataset, Graph

T1, T2 = "tower1.", "tower2."


def init_de2_params(rng, in_dim, hidden_dim, num_classes) -> Params:
    params = {}
    for prefix in (T1, T2):
        for k, w in init_gcn_params(rng, in_dim, hidden_dim, num_classes).items():
            params[prefix + k] = w
    params["attn"] = np.zeros((2 * num_classes, 2))
    return params


def tower_params(params: Params, prefix: str) -> Params:
    return {k[len(prefix):]: w for k, w in params.items() if k.startswith(prefix)}


class De2Model:
    def __init__(self, adj_homo, adj_knn, X):
        if adj_homo.shape != adj_knn.shape:
            raise ValueError("the two views must cover the same node set")
        self.towers = (GCN(adj_homo, X, T1), GCN(adj_knn, X, T2))

    def forward(self, params: Params, dropout_rate=0.0, rng=None) -> dict:
        c1 = self.towers[0].forward(params, dropout_rate, rng)
        c2 = self.towers[1].forward(params, dropout_rate, rng)
        h1, h2 = c1["logits"], c2["logits"]
        if h1.shape != h2.shape:
            raise ValueError("tower outputs disagree in shape")
        w = params["attn"]
        if w.shape != (2 * h1.shape[1], 2):
            raise ValueError(f"attention weight must be {(2 * h1.shape[1], 2)}, got {w.shape}")
        cat = np.hstack([h1, h2])
        scores = np.tanh(cat @ w)
        alpha = softmax(scores)
        y = alpha[:, :1] * h1 + alpha[:, 1:] * h2
        return {"towers": (c1, c2), "cat": cat, "scores": scores, "alpha": alpha, "y": y}

    def backward(self, params: Params, cache: dict, dy: np.ndarray) -> Params:
        c1, c2 = cache["towers"]
        h1, h2 = c1["logits"], c2["logits"]
        alpha = cache["alpha"]
        dh1 = alpha[:, :1] * dy
        dh2 = alpha[:, 1:] * dy
        dalpha = np.stack([(dy * h1).sum(axis=1), (dy * h2).sum(axis=1)], axis=1)
        dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        dpre = dscores * (1.0 - cache["scores"] ** 2)
        grads = {"attn": cache["cat"].T @ dpre}
        dcat = dpre @ params["attn"].T
        C = h1.shape[1]
        dh1 = dh1 + dcat[:, :C]
        dh2 = dh2 + dcat[:, C:]
        grads.update(self.towers[0].backward(params, c1, dh1))
        grads.update(self.towers[1].backward(params, c2, dh2))
        return grads

    def logits(self, params: Params) -> np.ndarray:
        return self.forward(params)["y"]

    def attention(self, params: Params) -> np.ndarray:
        return self.forward(params)["alpha"]

    def loss_and_grads(self, params, labels, idx, weight_decay=0.0, dropout_rate=0.0, rng=None):
        cache = self.forward(params, dropout_rate, rng)
        loss, dy = _ce_from_logits(cache["y"], labels, idx)
        return loss, add_weight_decay(self.backward(params, cache, dy), params, weight_decay)


class ConcatModel:
    """Attention replaced by ``relu([H1, H2] @ M1) @ M2`` (no bias terms)."""

    def __init__(self, adj_homo, adj_knn, X):
        self.towers = (GCN(adj_homo, X, T1), GCN(adj_knn, X, T2))

    @staticmethod
    def init_params(rng, in_dim, hidden_dim, num_classes) -> Params:
        params = init_de2_params(rng, in_dim, hidden_dim, num_classes)
        del params["attn"]
        params["head.M1"] = glorot(rng, 2 * num_classes, hidden_dim)
        params["head.M2"] = glorot(rng, hidden_dim, num_classes)
        return params

    def forward(self, params, dropout_rate=0.0, rng=None):
        c1 = self.towers[0].forward(params, dropout_rate, rng)
        c2 = self.towers[1].forward(params, dropout_rate, rng)
        cat = np.hstack([c1["logits"], c2["logits"]])
        pre = cat @ params["head.M1"]
        hid = np.maximum(pre, 0.0)
        return {"towers": (c1, c2), "cat": cat, "pre": pre, "hid": hid,
                "y": hid @ params["head.M2"]}

    def backward(self, params, cache, dy):
        grads = {"head.M2": cache["hid"].T @ dy}
        dpre = (dy @ params["head.M2"].T) * (cache["pre"] > 0)
        grads["head.M1"] = cache["cat"].T @ dpre
        dcat = dpre @ params["head.M1"].T
        C = dcat.shape[1] // 2
        c1, c2 = cache["towers"]
        grads.update(self.towers[0].backward(params, c1, dcat[:, :C]))
        grads.update(self.towers[1].backward(params, c2, dcat[:, C:]))
        return grads

    def logits(self, params):
        return self.forward(params)["y"]

    def loss_and_grads(self, params, labels, idx, weight_decay=0.0, dropout_rate=0.0, rng=None):
        cache = self.forward(params, dropout_rate, rng)
        loss, dy = _ce_from_logits(cache["y"], labels, idx)
        return loss, add_weight_decay(self.backward(params, cache, dy), params, weight_decay)


def de2_forward(params: Params, adj_homo, adj_knn, X):
    """Return ``(H1, H2, alpha, Y_final)`` with dropout off."""
    cache = De2Model(adj_homo, adj_knn, X).forward(params)
    c1, c2 = cache["towers"]
    return c1["logits"], c2["logits"], cache["alpha"], cache["y"]


def de2_backward(params: Params, adj_homo, adj_knn, X, labels, mask, weight_decay=0.0) -> Params:
    """Gradients of the summed cross-entropy on softmax(Y_final) for all three blocks."""
    idx = _indices(mask, X.shape[0])
    if len(idx) == 0:
        raise ValueError("empty mask")
    return De2Model(adj_homo, adj_knn, X).loss_and_grads(params, labels, idx, weight_decay)[1]


def train_de2(dataset: Dataset, g_homo: Graph, g_knn: Graph, config: TrainConfig,
              model_cls=De2Model):
    """Jointly train both towers and the fusion head from scratch.

    Returns ``(params, curve, model)``; ``model`` keeps the normalized views so
    callers can evaluate without rebuilding them.
    """
    X = dataset.features.sparse
    model = model_cls(normalized_adjacency(g_homo), normalized_adjacency(g_knn), X)
    rng = seeded_rng(config.seed)
    init = ConcatModel.init_params if model_cls is ConcatModel else init_de2_params
    params = init(rng, X.shape[1], config.hidden_dim, dataset.num_classes)
    params, curve = fit(model, params, dataset.labels, dataset.train, dataset.val, config, rng)
    return params, curve, model

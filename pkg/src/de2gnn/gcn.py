"""Two-layer GCN with hand-written gradients, Adam and early-stopped training.

Parameters are plain ``dict[str, ndarray]`` so the optimizer and the
training loop can be shared with the fused two-tower model.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph

Params = dict


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 200
    patience: int = 30
    dropout_rate: float = 0.5
    hidden_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.max_epochs < 1 or not 0 <= self.patience <= self.max_epochs:
            raise ValueError("need max_epochs >= 1 and 0 <= patience <= max_epochs")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")

    def with_seed(self, seed: int) -> TrainConfig:
        return replace(self, seed=seed)


# ---------------------------------------------------------------- kernels

def normalized_adjacency(graph: Graph) -> sp.csr_matrix:
    """Self-looped adjacency with weights ``1/sqrt(|N(u)| |N(v)|)``, |N| = degree + 1."""
    n = graph.num_nodes
    size = graph.degrees.astype(np.float64) + 1.0
    rows = np.concatenate([np.repeat(np.arange(n), graph.degrees), np.arange(n)])
    cols = np.concatenate([graph.col_indices, np.arange(n)])
    vals = 1.0 / np.sqrt(size[rows] * size[cols])
    adj = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    adj.sort_indices()
    return adj


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def masked_cross_entropy(Z: np.ndarray, labels, mask) -> float:
    """Summed negative log-likelihood of the true labels over ``mask``."""
    idx = _indices(mask, len(Z))
    if len(idx) == 0:
        raise ValueError("empty mask")
    with np.errstate(divide="ignore"):
        return float(-np.log(Z[idx, np.asarray(labels)[idx]]).sum())


def _indices(mask, n):
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if len(mask) != n:
            raise ValueError("mask length does not match number of nodes")
        return np.flatnonzero(mask)
    return mask.astype(np.int64)


def _ce_from_logits(logits, labels, idx):
    """Summed CE over ``idx`` and its gradient w.r.t. ``logits``."""
    logp = log_softmax(logits[idx])
    t = np.asarray(labels)[idx]
    loss = -logp[np.arange(len(idx)), t].sum()
    grad = np.zeros_like(logits)
    g = np.exp(logp)
    g[np.arange(len(idx)), t] -= 1.0
    grad[idx] = g
    return float(loss), grad


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=(fan_in, fan_out))


def init_gcn_params(rng, in_dim: int, hidden_dim: int, num_classes: int) -> Params:
    return {"W1": glorot(rng, in_dim, hidden_dim), "W2": glorot(rng, hidden_dim, num_classes)}


def _check_shapes(params, n_features, prefix=""):
    w1, w2 = params[prefix + "W1"], params[prefix + "W2"]
    if w1.shape[0] != n_features or w1.shape[1] != w2.shape[0]:
        raise ValueError(
            f"shape mismatch: X has {n_features} columns, W1 {w1.shape}, W2 {w2.shape}"
        )


# ---------------------------------------------------------------- model

class GCN:
    """Fixed (adjacency, features) pair; the propagated features are cached."""

    def __init__(self, adj: sp.csr_matrix, X, prefix: str = ""):
        if adj.shape[0] != X.shape[0]:
            raise ValueError("adjacency and feature matrix disagree on node count")
        self.adj = adj
        self.ax = adj @ X
        self.n_features = X.shape[1]
        self.prefix = prefix

    def forward(self, params: Params, dropout_rate: float = 0.0, rng=None) -> dict:
        p = self.prefix
        _check_shapes(params, self.n_features, p)
        pre = np.asarray(self.ax @ params[p + "W1"])
        hidden = np.maximum(pre, 0.0)
        keep = None
        if dropout_rate > 0:
            keep = (rng.random(hidden.shape) >= dropout_rate) / (1.0 - dropout_rate)
            hidden_d = hidden * keep
        else:
            hidden_d = hidden
        logits = self.adj @ (hidden_d @ params[p + "W2"])
        return {"pre": pre, "hidden": hidden, "hidden_d": hidden_d, "keep": keep,
                "logits": logits}

    def backward(self, params: Params, cache: dict, dlogits: np.ndarray) -> Params:
        """Gradients of a scalar loss given its gradient w.r.t. the logits.

        Uses the symmetry of the normalized adjacency (its transpose is itself).
        """
        p = self.prefix
        a_dlogits = self.adj @ dlogits
        g_w2 = cache["hidden_d"].T @ a_dlogits
        g_hidden = a_dlogits @ params[p + "W2"].T
        if cache["keep"] is not None:
            g_hidden = g_hidden * cache["keep"]
        g_pre = g_hidden * (cache["pre"] > 0)
        g_w1 = np.asarray(self.ax.T @ g_pre)
        return {p + "W1": g_w1, p + "W2": g_w2}

    def logits(self, params: Params) -> np.ndarray:
        return self.forward(params)["logits"]

    def loss_and_grads(self, params, labels, idx, weight_decay=0.0,
                       dropout_rate=0.0, rng=None):
        cache = self.forward(params, dropout_rate, rng)
        loss, dlogits = _ce_from_logits(cache["logits"], labels, idx)
        grads = self.backward(params, cache, dlogits)
        return loss, add_weight_decay(grads, params, weight_decay)


def add_weight_decay(grads: Params, params: Params, weight_decay: float) -> Params:
    if weight_decay:
        return {k: g + weight_decay * params[k] for k, g in grads.items()}
    return grads


def gcn_forward(params: Params, adj, X, dropout_rate: float = 0.0, rng=None):
    """Return ``(hidden, logits, probabilities)``."""
    cache = GCN(adj, X).forward(params, dropout_rate, rng)
    return cache["hidden_d"], cache["logits"], softmax(cache["logits"])


def gcn_backward(params: Params, adj, X, labels, mask, weight_decay: float = 0.0) -> Params:
    """Gradients of the summed cross-entropy (plus ``weight_decay/2 * ||W||^2``)."""
    idx = _indices(mask, X.shape[0])
    if len(idx) == 0:
        raise ValueError("empty mask")
    return GCN(adj, X).loss_and_grads(params, labels, idx, weight_decay)[1]


def predict(params: Params, adj, X):
    """Class probabilities and argmax labels (ties go to the smaller class id)."""
    _, _, Z = gcn_forward(params, adj, X)
    return Z, Z.argmax(axis=1)


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: Params, **kw) -> AdamState:
        return cls({k: np.zeros_like(w) for k, w in params.items()},
                   {k: np.zeros_like(w) for k, w in params.items()}, **kw)


def adam_step(params: Params, grads: Params, state: AdamState, learning_rate: float):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {k}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = {k: b1 * state.m[k] + (1 - b1) * g for k, g in grads.items()}
    v = {k: b2 * state.v[k] + (1 - b2) * g * g for k, g in grads.items()}
    bc1, bc2 = 1 - b1 ** t, 1 - b2 ** t
    new = {
        k: w - learning_rate * (m[k] / bc1) / (np.sqrt(v[k] / bc2) + state.eps)
        for k, w in params.items()
    }
    return new, AdamState(m, v, t, b1, b2, state.eps)


# ---------------------------------------------------------------- training

@dataclass
class TrainingCurve:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = -1

    def append(self, epoch, loss, acc):
        self.epochs.append(epoch)
        self.train_loss.append(loss)
        self.val_acc.append(acc)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_acc"]
        lines += [f"{e},{l!r},{a!r}" for e, l, a in zip(self.epochs, self.train_loss, self.val_acc)]
        return "\n".join(lines) + "\n"


def fit(model, params: Params, labels, train_idx, val_idx, config: TrainConfig,
        rng: np.random.Generator):
    """Adam on the summed training loss with early stopping on validation accuracy.

    ``model`` needs ``loss_and_grads`` and ``logits``. Returns the parameters
    of the best-validation epoch (earliest on ties) and the curve.
    """
    labels = np.asarray(labels)
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx) if len(val_idx) else train_idx
    state = AdamState.zeros(params)
    curve = TrainingCurve()
    best_acc, best_params, since = -1.0, params, 0
    for epoch in range(config.max_epochs):
        loss, grads = model.loss_and_grads(
            params, labels, train_idx, config.weight_decay, config.dropout_rate, rng
        )
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at epoch {epoch}")
        params, state = adam_step(params, grads, state, config.learning_rate)
        pred = model.logits(params)[val_idx].argmax(axis=1)
        acc = float(np.mean(pred == labels[val_idx]))
        curve.append(epoch, loss / len(train_idx), acc)
        if acc > best_acc:
            best_acc, best_params, since = acc, params, 0
            curve.best_epoch = epoch
        else:
            since += 1
            if since >= config.patience:
                break
    return best_params, curve


def seeded_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def train(adj, X, labels, train_idx, val_idx, config: TrainConfig, num_classes=None):
    """Train a 2-layer GCN. ``adj`` may be a :class:`Graph` or a normalized matrix."""
    if isinstance(adj, Graph):
        adj = normalized_adjacency(adj)
    labels = np.asarray(labels)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    rng = seeded_rng(config.seed)
    params = init_gcn_params(rng, X.shape[1], config.hidden_dim, num_classes)
    return fit(GCN(adj, X), params, labels, train_idx, val_idx, config, rng)


# ---------------------------------------------------------------- checkpoints

MAGIC = b"DE2G"
VERSION = 1


def save_checkpoint(path, params: Params):
    """Write ``params`` in the flat ``DE2G`` binary layout (see docs/checkpoint.md)."""
    out = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, w in params.items():
        w = np.asarray(w, dtype="<f8")
        if w.ndim != 2:
            raise ValueError(f"{name}: only 2-D matrices can be stored")
        raw = name.encode()
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<II", *w.shape))
        out.append(np.ascontiguousarray(w).tobytes())
    Path(path).write_bytes(b"".join(out))


def load_checkpoint(path) -> Params:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not a DE2G checkpoint")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos, params = 12, {}
    for _ in range(count):
        (length,) = struct.unpack_from("<I", buf, pos)
        name = buf[pos + 4:pos + 4 + length].decode()
        rows, cols = struct.unpack_from("<II", buf, pos + 4 + length)
        pos += 12 + length
        params[name] = np.frombuffer(buf, dtype="<f8", count=rows * cols,
                                     offset=pos).reshape(rows, cols).copy()
        pos += 8 * rows * cols
    return params

# %% [markdown]
# # A two-layer GCN with hand-written gradients
#
# Build a tiny graph, check the backward pass against finite differences,
# then train on Cora and look at the learning curve.

# %%
import numpy as np

from de2gnn.gcn import GCN, TrainConfig, normalized_adjacency, train
from de2gnn.graph import Graph, load_manifest

rng = np.random.default_rng(0)
g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
A = normalized_adjacency(g)
print(np.round(A.toarray(), 3))

# %% gradient check on a path graph
X = rng.normal(size=(5, 4))
labels = np.array([0, 0, 1, 1, 1])
params = {"W1": rng.normal(size=(4, 3)), "W2": rng.normal(size=(3, 2))}
model = GCN(A, X)
loss, grads = model.loss_and_grads(params, labels, np.arange(5))

eps = 1e-5
worst = 0.0
for key, w in params.items():
    for idx in np.ndindex(w.shape):
        bumped = {k: v.copy() for k, v in params.items()}
        bumped[key][idx] += eps
        up = model.loss_and_grads(bumped, labels, np.arange(5))[0]
        bumped[key][idx] -= 2 * eps
        down = model.loss_and_grads(bumped, labels, np.arange(5))[0]
        num = (up - down) / (2 * eps)
        worst = max(worst, abs(num - grads[key][idx]) / max(1e-8, abs(num)))
print(f"loss {loss:.4f}, worst relative gradient error {worst:.1e}")

# %% [markdown]
# ## Cora
# Largest connected component, 10% train, 10% validation, 80% test.

# %%
cora = load_manifest("data/cora/dataset.json")
adj = normalized_adjacency(cora.graph)
X = cora.features.sparse
params, curve = train(adj, X, cora.labels, cora.train, cora.val, TrainConfig(seed=0),
                      num_classes=cora.num_classes)
pred = GCN(adj, X).logits(params).argmax(axis=1)
print(f"stopped after {len(curve.epochs)} epochs, best epoch {curve.best_epoch}")
print("test accuracy", np.mean(pred[cora.test] == cora.labels[cora.test]))

# %% degree vs accuracy: low-degree nodes do worse
deg = cora.graph.degrees[cora.test]
ok = pred[cora.test] == cora.labels[cora.test]
for lo, hi in [(0, 1), (2, 3), (4, 5), (6, 10**6)]:
    sel = (deg >= lo) & (deg <= hi)
    print(f"degree {lo}-{hi if hi < 10**6 else 'inf'}: n={sel.sum():4d} acc={ok[sel].mean():.3f}")

"""Build the bundled Cora / Citeseer benchmark files under data/.

The raw citation data is taken from the ``pgl`` wheel on PyPI, which ships
the LINQS Cora files and the Planetoid Citeseer pickles. Both graphs are
reduced to their largest connected component (after dropping Planetoid's
feature-less padding nodes), which gives the usual adversarial-robustness
variants: Cora 2485 nodes / 5069 edges, Citeseer 2110 nodes / 3668 edges.

    python tools/build_benchmarks.py [--wheel path/to/pgl.whl] [--out data]

Without ``--wheel`` the script runs ``pip download pgl==2.2.6 --no-deps``.
"""
import argparse
import gzip
import io
import json
import pickle
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

PGL_VERSION = "2.2.6"
SPLIT_SEED = 15


def fetch_wheel(dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", f"pgl=={PGL_VERSION}",
         "--no-deps", "-q", "-d", str(dest)],
        check=True,
    )
    return next(dest.glob("pgl-*.whl"))


def read_cora(z: zipfile.ZipFile):
    ids, rows, labels = [], [], []
    for line in z.read("pgl/data/cora/cora.content").decode().splitlines():
        parts = line.split()
        ids.append(parts[0])
        rows.append([int(v) for v in parts[1:-1]])
        labels.append(parts[-1])
    index = {k: i for i, k in enumerate(ids)}
    src, dst = [], []
    for line in z.read("pgl/data/cora/cora.cites").decode().splitlines():
        a, b = line.split()
        src.append(index[a])
        dst.append(index[b])
    classes = sorted(set(labels))
    y = np.array([classes.index(c) for c in labels])
    n = len(ids)
    adj = sp.csr_matrix((np.ones(len(src)), (src, dst)), shape=(n, n))
    return adj, sp.csr_matrix(np.array(rows, dtype=np.float64)), y


def read_citeseer(z: zipfile.ZipFile):
    def load(part):
        raw = z.read(f"pgl/data/citeseer/ind.citeseer.{part}")
        return pickle.load(io.BytesIO(raw), encoding="latin1")

    tx, ty, allx, ally, graph = (load(p) for p in ("tx", "ty", "allx", "ally", "graph"))
    test_idx = np.array(
        [int(v) for v in z.read("pgl/data/citeseer/ind.citeseer.test.index").decode().split()]
    )
    test_sorted = np.sort(test_idx)
    # some test ids are missing from tx/ty; pad them with empty rows
    span = test_sorted[-1] - test_sorted[0] + 1
    tx_full = sp.lil_matrix((span, tx.shape[1]))
    tx_full[test_sorted - test_sorted[0]] = tx
    ty_full = np.zeros((span, ty.shape[1]))
    ty_full[test_sorted - test_sorted[0]] = ty

    feats = sp.vstack((allx, tx_full)).tolil()
    feats[test_idx] = feats[test_sorted]
    onehot = np.vstack((ally, ty_full))
    onehot[test_idx] = onehot[test_sorted]

    n = feats.shape[0]
    src = [u for u, vs in graph.items() for _ in vs]
    dst = [v for vs in graph.values() for v in vs]
    adj = sp.csr_matrix((np.ones(len(src)), (src, dst)), shape=(n, n))
    feats = feats.tocsr()

    keep = np.flatnonzero((onehot.sum(1) > 0) & (np.asarray(feats.sum(1)).ravel() > 0))
    return adj[keep][:, keep], feats[keep], onehot[keep].argmax(1)


def largest_component(adj, feats, y):
    adj = ((adj + adj.T) > 0).astype(np.int8).tolil()
    adj.setdiag(0)
    adj = adj.tocsr()
    adj.eliminate_zeros()
    _, comp = connected_components(adj, directed=False)
    keep = np.flatnonzero(comp == np.bincount(comp).argmax())
    return adj[keep][:, keep], feats[keep], y[keep]


def random_split(y, seed, train=0.1, val=0.1):
    rng = np.random.default_rng(seed)
    n = len(y)
    n_train, n_val = int(round(train * n)), int(round(val * n))
    while True:
        perm = rng.permutation(n)
        tr = np.sort(perm[:n_train])
        if len(np.unique(y[tr])) == y.max() + 1:
            break
    return {
        "train": tr.tolist(),
        "val": np.sort(perm[n_train:n_train + n_val]).tolist(),
        "test": np.sort(perm[n_train + n_val:]).tolist(),
    }


def write_dataset(out: Path, name, adj, feats, y):
    out.mkdir(parents=True, exist_ok=True)
    upper = sp.triu(adj, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(out / "edges.tsv", "w") as fh:
        fh.write(f"# {name}: largest connected component, {adj.shape[0]} nodes\n")
        for u, v in zip(upper.row[order], upper.col[order]):
            fh.write(f"{u}\t{v}\n")
    dense = feats.toarray().astype(np.int64)
    with gzip.GzipFile(out / "features.tsv.gz", "wb", mtime=0) as fh:
        for row in dense:
            fh.write((" ".join(map(str, row)) + "\n").encode())
    (out / "labels.tsv").write_text("".join(f"{c}\n" for c in y))
    (out / "splits.json").write_text(json.dumps(random_split(y, SPLIT_SEED)) + "\n")
    manifest = {
        "name": name,
        "edges": "edges.tsv",
        "features": "features.tsv.gz",
        "labels": "labels.tsv",
        "splits": "splits.json",
        "feature_kind": "discrete",
    }
    (out / "dataset.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"{name}: n={adj.shape[0]} |E|={upper.nnz} d={feats.shape[1]} C={y.max() + 1}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel", type=Path)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(Path(tmp))
        with zipfile.ZipFile(wheel) as z:
            for name, reader in (("cora", read_cora), ("citeseer", read_citeseer)):
                adj, feats, y = largest_component(*reader(z))
                write_dataset(args.out / name, name, adj, feats, y)


if __name__ == "__main__":
    main()

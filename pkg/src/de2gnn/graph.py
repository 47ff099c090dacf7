"""Undirected graph in CSR form, dataset loading and structural edits."""
from __future__ import annotations

import gzip
import json
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

DISCRETE = "discrete"
CONTINUOUS = "continuous"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class ZeroFeatureRowError(DataError):
    """A discrete feature row has no nonzero entry (Jaccard is undefined)."""


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def canonical_edges(edges, num_nodes=None) -> np.ndarray:
    """Return edges as a sorted, deduplicated ``(m, 2)`` array with ``u < v``.

    Self-loops are rejected, as are ids outside ``[0, num_nodes)`` when
    ``num_nodes`` is given.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if np.any(e[:, 0] == e[:, 1]):
        u = int(e[e[:, 0] == e[:, 1]][0, 0])
        raise ValueError(f"self-loop ({u}, {u}) in edge list")
    if num_nodes is not None and (e.min() < 0 or e.max() >= num_nodes):
        raise ValueError(f"node id out of range [0, {num_nodes})")
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(self.row_offsets, np.int64))
        object.__setattr__(self, "col_indices", _frozen(self.col_indices, np.int64))
        if len(self.row_offsets) != self.num_nodes + 1:
            raise ValueError("row_offsets must have num_nodes + 1 entries")

    @classmethod
    def from_edges(cls, num_nodes: int, edges) -> Graph:
        e = canonical_edges(edges, num_nodes)
        both = np.concatenate([e, e[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(both[:, 0], minlength=num_nodes), out=offsets[1:])
        return cls(num_nodes, offsets, both[:, 1])

    @classmethod
    def empty(cls, num_nodes: int) -> Graph:
        return cls.from_edges(num_nodes, [])

    @property
    def num_edges(self) -> int:
        return len(self.col_indices) // 2

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[u]:self.row_offsets[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.row_offsets[u + 1] - self.row_offsets[u])

    @cached_property
    def degrees(self) -> np.ndarray:
        return _frozen(np.diff(self.row_offsets), np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    @cached_property
    def edges(self) -> np.ndarray:
        """Undirected edges as a sorted ``(num_edges, 2)`` array with ``u < v``."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = rows < self.col_indices
        return _frozen(np.stack([rows[keep], self.col_indices[keep]], axis=1), np.int64)

    def to_scipy(self) -> sp.csr_matrix:
        data = np.ones(len(self.col_indices))
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets), shape=(self.num_nodes,) * 2
        )

    def is_connected(self) -> bool:
        if self.num_nodes == 0:
            return True
        n_comp, _ = connected_components(self.to_scipy(), directed=False)
        return n_comp == 1

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    __hash__ = None

    def __repr__(self):
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


def degree(graph: Graph, u: int) -> int:
    if not 0 <= u < graph.num_nodes:
        raise IndexError(f"node {u} out of range")
    return graph.degree(u)


def tail_nodes(graph: Graph, bound: int) -> np.ndarray:
    """Ids of nodes whose degree is at most ``bound``, ascending."""
    if bound < 0:
        raise ValueError("bound must be >= 0")
    return np.flatnonzero(graph.degrees <= bound)


def with_edges_removed(graph: Graph, edges) -> Graph:
    e = canonical_edges(edges, graph.num_nodes)
    if len(e) == 0:
        return graph
    current = graph.edges
    # row-wise membership via structured view
    present = _edge_keys(current, graph.num_nodes)
    drop = _edge_keys(e, graph.num_nodes)
    missing = ~np.isin(drop, present)
    if missing.any():
        u, v = e[np.argmax(missing)]
        raise ValueError(f"cannot remove non-existent edge ({u}, {v})")
    return Graph.from_edges(graph.num_nodes, current[~np.isin(present, drop)])


def with_edges_added(graph: Graph, edges) -> Graph:
    e = canonical_edges(edges, graph.num_nodes)
    if len(e) == 0:
        return graph
    return Graph.from_edges(graph.num_nodes, np.concatenate([graph.edges, e]))


def _edge_keys(edges: np.ndarray, n: int) -> np.ndarray:
    return edges[:, 0] * n + edges[:, 1]


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    feature_kind: str = DISCRETE

    def __post_init__(self):
        v = _frozen(self.values, np.float64)
        if v.ndim != 2:
            raise DataError("feature matrix must be 2-D")
        if not np.all(np.isfinite(v)):
            raise DataError("feature matrix has non-finite entries")
        if self.feature_kind not in (DISCRETE, CONTINUOUS):
            raise DataError(f"unknown feature_kind {self.feature_kind!r}")
        if self.feature_kind == DISCRETE:
            if not np.all((v == 0) | (v == 1)):
                raise DataError("discrete features must be 0/1")
            empty = np.flatnonzero(~v.any(axis=1))
            if len(empty):
                raise ZeroFeatureRowError(
                    f"all-zero discrete feature row for node {empty[0]} "
                    f"({len(empty)} such rows)"
                )
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.values)


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: Graph
    features: FeatureMatrix
    labels: np.ndarray
    num_classes: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        n = self.graph.num_nodes
        if self.features.shape[0] != n:
            raise DataError(
                f"features have {self.features.shape[0]} rows but graph has {n} nodes"
            )
        labels = _frozen(self.labels, np.int64)
        if len(labels) != n:
            raise DataError(f"{len(labels)} labels for {n} nodes")
        if labels.min(initial=0) < 0 or labels.max(initial=-1) >= self.num_classes:
            raise DataError(f"label out of range [0, {self.num_classes})")
        object.__setattr__(self, "labels", labels)
        splits = {}
        for key in ("train", "val", "test"):
            ids = np.unique(np.asarray(getattr(self, key), dtype=np.int64))
            if len(ids) != len(getattr(self, key)):
                raise DataError(f"duplicate ids in {key} split")
            if len(ids) and (ids[0] < 0 or ids[-1] >= n):
                raise DataError(f"{key} split has node id out of range")
            splits[key] = _frozen(ids, np.int64)
            object.__setattr__(self, key, splits[key])
        if len(splits["train"]) == 0:
            raise DataError("train split is empty")
        for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
            if np.intersect1d(splits[a], splits[b]).size:
                raise DataError(f"{a} and {b} splits overlap")
        missing = np.setdiff1d(np.arange(self.num_classes), labels[splits["train"]])
        if missing.size:
            raise DataError(f"class {missing[0]} absent from training split")

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    def mask(self, split: str) -> np.ndarray:
        m = np.zeros(self.num_nodes, dtype=bool)
        m[getattr(self, split)] = True
        return m

    def with_graph(self, graph: Graph) -> Dataset:
        return Dataset(graph, self.features, self.labels, self.num_classes,
                       self.train, self.val, self.test, self.name)


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt")
    return open(path)


def _data_lines(path):
    """Yield ``(line_number, stripped_line)`` skipping blanks and comments."""
    with _open_text(path) as fh:
        for no, line in enumerate(fh, 1):
            s = line.strip()
            if s and not s.startswith("#"):
                yield no, s


def read_edges(path, num_nodes: int | None = None) -> np.ndarray:
    """Parse an edge file: one tab-separated pair of 0-based ids per line."""
    pairs = []
    for no, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) < 2:
            raise DataError(f"{path}:{no}: expected two tab-separated node ids")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"{path}:{no}: malformed node id") from None
        if u < 0 or v < 0 or (num_nodes is not None and max(u, v) >= num_nodes):
            raise DataError(f"{path}:{no}: node id out of range [0, {num_nodes})")
        if u == v:
            raise DataError(f"{path}:{no}: self-loop ({u}, {u})")
        pairs.append((u, v))
    return canonical_edges(pairs)


def write_edges(path, edges, scores=None, header: str | None = None):
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for i, (u, v) in enumerate(np.asarray(edges).reshape(-1, 2)):
            if scores is None:
                fh.write(f"{u}\t{v}\n")
            else:
                fh.write(f"{u}\t{v}\t{scores[i]:.6f}\n")


def read_features(path) -> np.ndarray:
    rows, width = [], None
    for no, line in _data_lines(path):
        try:
            row = np.array(line.split(), dtype=np.float64)
        except ValueError:
            raise DataError(f"{path}:{no}: malformed number") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}:{no}: expected {width} values, got {len(row)}")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no feature rows")
    return np.vstack(rows)


def read_labels(path) -> np.ndarray:
    out = []
    for no, line in _data_lines(path):
        try:
            out.append(int(line))
        except ValueError:
            raise DataError(f"{path}:{no}: malformed label") from None
    return np.array(out, dtype=np.int64)


def read_splits(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
        return {k: [int(i) for i in raw[k]] for k in ("train", "val", "test")}
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed splits file ({exc})") from None


def load_dataset(edge_path, feature_path, label_path, split_path,
                 feature_kind: str = DISCRETE, name: str | None = None) -> Dataset:
    """Load and validate a dataset from the four plain-text files.

    The node count is taken from the feature file; edges are deduplicated
    and symmetrized. A disconnected graph only triggers a warning.
    """
    features = FeatureMatrix(read_features(feature_path), feature_kind)
    n = features.shape[0]
    labels = read_labels(label_path)
    if len(labels) != n:
        raise DataError(f"{label_path}: {len(labels)} labels but {n} feature rows")
    if labels.min() < 0:
        raise DataError(f"{label_path}: negative label")
    graph = Graph.from_edges(n, read_edges(edge_path, n))
    splits = read_splits(split_path)
    ds = Dataset(graph, features, labels, int(labels.max()) + 1,
                 splits["train"], splits["val"], splits["test"],
                 name or Path(edge_path).parent.name)
    if not graph.is_connected():
        warnings.warn(f"{ds.name}: graph is not connected", stacklevel=2)
    return ds


def load_manifest(path) -> Dataset:
    """Load a dataset described by a ``dataset.json`` manifest.

    Paths inside the manifest are resolved relative to the manifest file.
    """
    path = Path(path)
    try:
        m = json.loads(path.read_text())
        files = [path.parent / m[k] for k in ("edges", "features", "labels", "splits")]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed manifest ({exc})") from None
    return load_dataset(*files, feature_kind=m.get("feature_kind", DISCRETE),
                        name=m.get("name", path.parent.name))

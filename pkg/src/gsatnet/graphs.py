"""Graph data model, dataset ingestion, random walks, and neighborhoods.

Graphs are simple (no self-loops, no multi-edges), undirected, node-labeled,
and immutable once constructed; they are safe to share across threads.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    IntegrityError,
    IsolatedNodeError,
    ParseError,
    SchemaError,
)

logger = logging.getLogger(__name__)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Graph:
    """Undirected node-labeled graph with optional features and target.

    ``edges`` holds each undirected edge once as a canonical (u, v) pair
    with u < v. Use :meth:`build` rather than the raw constructor; it
    canonicalizes edge lists (dedup, drop self-loops) before validation.
    """

    node_count: int
    edges: np.ndarray  # (m, 2) int32, u < v, lexicographically sorted
    node_labels: np.ndarray  # (n,) int32
    node_features: np.ndarray | None = None  # (n, d_in) float64
    target: int | np.ndarray | None = None

    def __post_init__(self):
        n, e = self.node_count, self.edges
        if n < 0:
            raise IntegrityError("negative node count")
        if e.ndim != 2 or (len(e) and e.shape[1] != 2):
            raise IntegrityError("edge array must have shape (m, 2)")
        if len(e):
            if e.min() < 0 or e.max() >= n:
                raise IntegrityError("edge endpoint out of range")
            if (e[:, 0] >= e[:, 1]).any():
                raise IntegrityError("edges must be canonical (u < v)")
        if len(self.node_labels) != n:
            raise IntegrityError("node_labels length mismatch")
        if self.node_features is not None and len(self.node_features) != n:
            raise IntegrityError("node_features row count mismatch")

    @classmethod
    def build(
        cls,
        node_count: int,
        edges: Iterable[tuple[int, int]],
        node_labels: Sequence[int] | None = None,
        node_features: np.ndarray | None = None,
        target=None,
    ) -> "Graph":
        """Construct a graph from an arbitrary edge list.

        Self-loops are dropped and duplicate/reversed pairs collapsed to a
        single undirected edge.
        """
        pairs = {(min(u, v), max(u, v)) for u, v in edges if u != v}
        arr = np.array(sorted(pairs), dtype=np.int32).reshape(-1, 2)
        labels = (
            np.zeros(node_count, dtype=np.int32)
            if node_labels is None
            else np.asarray(node_labels, dtype=np.int32)
        )
        feats = None
        if node_features is not None:
            feats = _frozen(np.ascontiguousarray(node_features, dtype=np.float64))
        return cls(node_count, _frozen(arr), _frozen(labels), feats, target)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) adjacency in CSR form, both edge directions."""
        n = self.node_count
        if len(self.edges) == 0:
            return np.zeros(n + 1, dtype=np.int64), np.empty(0, dtype=np.int32)
        both = np.concatenate([self.edges, self.edges[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, np.ascontiguousarray(both[:, 1], dtype=np.int32)

    @cached_property
    def degrees(self) -> np.ndarray:
        indptr, _ = self.csr
        return np.diff(indptr)

    def neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self.csr
        return indices[indptr[v] : indptr[v + 1]]

    @property
    def edge_count(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class Walk:
    """A random walk: an ordered node sequence whose consecutive pairs
    are edges of the source graph."""

    nodes: tuple[int, ...]

    def __len__(self):
        return len(self.nodes)

    def is_valid_on(self, g: Graph) -> bool:
        return all(
            v in g.neighbors(u) for u, v in zip(self.nodes, self.nodes[1:])
        ) and all(0 <= v < g.node_count for v in self.nodes)


@dataclass(frozen=True)
class Subgraph:
    """An induced r-hop neighborhood, stored as a standalone graph.

    ``nodes`` maps local indices back to the parent graph (ascending
    parent order), ``center_local`` locates the BFS center.
    """

    center: int
    radius: int
    nodes: np.ndarray  # parent node ids, ascending
    graph: Graph
    center_local: int


@dataclass(frozen=True)
class DatasetSplit:
    train: list[int]
    valid: list[int]
    test: list[int]
    seed: int
    stratified: bool = True

    def parts(self):
        return {"train": self.train, "valid": self.valid, "test": self.test}


def sample_walk(g: Graph, start: int, steps: int, rng: np.random.Generator) -> Walk:
    """Sample a uniform random walk of ``steps`` transitions from ``start``.

    Raises :class:`IsolatedNodeError` when the start node has no
    neighbors; callers substitute the degenerate single-node walk.
    """
    if not 0 <= start < g.node_count:
        raise ConfigError(f"start node {start} out of range")
    if steps < 1:
        raise ConfigError("walk must take at least one step")
    indptr, indices = g.csr
    if indptr[start + 1] == indptr[start]:
        raise IsolatedNodeError(f"node {start} has no neighbors")
    nodes = [start]
    v = start
    for _ in range(steps):
        lo, hi = indptr[v], indptr[v + 1]
        v = int(indices[lo + rng.integers(hi - lo)])
        nodes.append(v)
    return Walk(tuple(nodes))


def extract_r_hop(g: Graph, v: int, r: int) -> Subgraph:
    """Induced subgraph on every node within BFS distance ``r`` of ``v``."""
    if not 0 <= v < g.node_count:
        raise ConfigError(f"node {v} out of range")
    if r < 0:
        raise ConfigError("radius must be non-negative")
    indptr, indices = g.csr
    dist = {v: 0}
    frontier = [v]
    for depth in range(1, r + 1):
        nxt = []
        for u in frontier:
            for w in indices[indptr[u] : indptr[u + 1]]:
                w = int(w)
                if w not in dist:
                    dist[w] = depth
                    nxt.append(w)
        if not nxt:
            break
        frontier = nxt
    kept = np.array(sorted(dist), dtype=np.int64)
    local = {int(p): i for i, p in enumerate(kept)}
    kept_set = set(local)
    sub_edges = [
        (local[int(a)], local[int(b)])
        for a, b in g.edges
        if int(a) in kept_set and int(b) in kept_set
    ]
    feats = g.node_features[kept] if g.node_features is not None else None
    sub = Graph.build(
        len(kept), sub_edges, node_labels=g.node_labels[kept], node_features=feats
    )
    return Subgraph(
        center=v,
        radius=r,
        nodes=_frozen(kept),
        graph=sub,
        center_local=local[v],
    )


def make_splits(
    graphs: Sequence[Graph],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    stratified: bool = True,
) -> DatasetSplit:
    """Disjoint, exhaustive train/valid/test split over graph indices.

    Stratified splits keep each part's class counts within one graph of
    the proportional target; classes with fewer than 3 members trigger a
    warning and an unstratified fallback.
    """
    n = len(graphs)
    if n < 10:
        raise ConfigError(f"need at least 10 graphs to split, got {n}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("split ratios must sum to 1")
    rng = np.random.default_rng(seed)

    targets = [int(np.floor(n * r)) for r in ratios]
    for i in range(n - sum(targets)):
        targets[i % 3] += 1

    labels = None
    if stratified:
        labels = [g.target for g in graphs]
        if any(l is None or isinstance(l, np.ndarray) for l in labels):
            stratified = False
            labels = None
        else:
            counts = {}
            for l in labels:
                counts[l] = counts.get(l, 0) + 1
            if min(counts.values()) < 3:
                logger.warning(
                    "class with fewer than 3 graphs; falling back to "
                    "unstratified split"
                )
                stratified = False
                labels = None

    parts: list[list[int]] = [[], [], []]
    if not stratified:
        perm = rng.permutation(n)
        lo = 0
        for p, size in enumerate(targets):
            parts[p] = sorted(int(i) for i in perm[lo : lo + size])
            lo += size
        return DatasetSplit(parts[0], parts[1], parts[2], seed, stratified=False)

    by_class: dict[int, list[int]] = {}
    for idx, l in enumerate(labels):
        by_class.setdefault(int(l), []).append(idx)
    floors: dict[int, list[int]] = {}
    remainders: list[int] = []
    assigned = [0, 0, 0]
    for c in sorted(by_class):
        members = by_class[c]
        rng.shuffle(members)
        f = [int(np.floor(len(members) * r)) for r in ratios]
        floors[c] = f
        remainders.extend([c] * (len(members) - sum(f)))
        for p in range(3):
            assigned[p] += f[p]
    extra: dict[int, list[int]] = {c: [0, 0, 0] for c in by_class}
    for c in remainders:
        deficits = [targets[p] - assigned[p] for p in range(3)]
        p = int(np.argmax(deficits))
        extra[c][p] += 1
        assigned[p] += 1
    for c in sorted(by_class):
        members = by_class[c]
        lo = 0
        for p in range(3):
            size = floors[c][p] + extra[c][p]
            parts[p].extend(members[lo : lo + size])
            lo += size
    return DatasetSplit(
        sorted(parts[0]), sorted(parts[1]), sorted(parts[2]), seed, stratified=True
    )


# ---------------------------------------------------------------------------
# Dataset ingestion
# ---------------------------------------------------------------------------


def _read_int_lines(path: Path, per_line: int) -> list[tuple[int, ...]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != per_line:
                raise ParseError(
                    f"expected {per_line} comma-separated integers, got {line!r}",
                    path=str(path),
                    line=lineno,
                )
            try:
                rows.append(tuple(int(f) for f in fields))
            except ValueError:
                raise ParseError(
                    f"non-integer field in {line!r}", path=str(path), line=lineno
                ) from None
    return rows


def load_tu_dataset(dir_path, name: str) -> list[Graph]:
    """Load a dataset in the TU text format.

    Expects ``{name}_A.txt``, ``{name}_graph_indicator.txt`` and
    ``{name}_graph_labels.txt`` under ``dir_path``; node labels are read
    from ``{name}_node_labels.txt`` when present, else every node gets
    label 0. File indices are 1-based and converted to 0-based; the
    directed edge pairs the format stores are collapsed to undirected
    edges, and self-loops are dropped with a warning.
    """
    base = Path(dir_path)
    a_path = base / f"{name}_A.txt"
    ind_path = base / f"{name}_graph_indicator.txt"
    glab_path = base / f"{name}_graph_labels.txt"
    for p in (a_path, ind_path, glab_path):
        if not p.exists():
            raise DataError(f"missing dataset file: {p}")

    indicator = [r[0] for r in _read_int_lines(ind_path, 1)]
    n_nodes = len(indicator)
    n_graphs = max(indicator) if indicator else 0
    graph_of = np.asarray(indicator, dtype=np.int64) - 1
    if graph_of.min() < 0:
        raise IntegrityError(f"{ind_path}: graph indicator below 1")

    local_index = np.zeros(n_nodes, dtype=np.int64)
    sizes = np.zeros(n_graphs, dtype=np.int64)
    for i, gidx in enumerate(graph_of):
        local_index[i] = sizes[gidx]
        sizes[gidx] += 1

    raw_labels = [r[0] for r in _read_int_lines(glab_path, 1)]
    if len(raw_labels) != n_graphs:
        raise IntegrityError(
            f"{glab_path}: {len(raw_labels)} labels for {n_graphs} graphs"
        )
    classes = sorted(set(raw_labels))
    class_of = {c: i for i, c in enumerate(classes)}

    nlab_path = base / f"{name}_node_labels.txt"
    if nlab_path.exists():
        node_labels = [r[0] for r in _read_int_lines(nlab_path, 1)]
        if len(node_labels) != n_nodes:
            raise IntegrityError(
                f"{nlab_path}: {len(node_labels)} labels for {n_nodes} nodes"
            )
    else:
        node_labels = [0] * n_nodes

    edge_sets: list[set[tuple[int, int]]] = [set() for _ in range(n_graphs)]
    self_loops = 0
    for u1, v1 in _read_int_lines(a_path, 2):
        u, v = u1 - 1, v1 - 1
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise IntegrityError(f"{a_path}: edge ({u1}, {v1}) references unknown node")
        gu, gv = graph_of[u], graph_of[v]
        if gu != gv:
            raise IntegrityError(
                f"{a_path}: edge ({u1}, {v1}) crosses graphs {gu + 1} and {gv + 1}"
            )
        if u == v:
            self_loops += 1
            continue
        a, b = int(local_index[u]), int(local_index[v])
        edge_sets[gu].add((min(a, b), max(a, b)))
    if self_loops:
        logger.warning("dropped %d self-loop edge entries", self_loops)

    labels_per_graph: list[list[int]] = [[] for _ in range(n_graphs)]
    for i, gidx in enumerate(graph_of):
        labels_per_graph[gidx].append(node_labels[i])

    return [
        Graph.build(
            int(sizes[g]),
            edge_sets[g],
            node_labels=labels_per_graph[g],
            target=class_of[raw_labels[g]],
        )
        for g in range(n_graphs)
    ]


def load_json_molecules(path) -> list[Graph]:
    """Load molecule-style graphs from a JSON file.

    The file holds one top-level array of records
    ``{num_nodes, edges: [[u, v], ...], node_labels: [...], targets: [...]}``
    with categorical atom-type labels and real-valued targets.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            records = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=str(path)) from None
    if not isinstance(records, list):
        raise SchemaError(f"{path}: expected a top-level array of molecule records")
    graphs = []
    for i, rec in enumerate(records):
        where = f"{path}: record {i}"
        if not isinstance(rec, dict):
            raise SchemaError(f"{where}: expected an object")
        missing = {"num_nodes", "edges", "node_labels", "targets"} - rec.keys()
        if missing:
            raise SchemaError(f"{where}: missing keys {sorted(missing)}")
        n = rec["num_nodes"]
        if not isinstance(n, int) or n < 0:
            raise SchemaError(f"{where}: num_nodes must be a non-negative integer")
        if len(rec["node_labels"]) != n:
            raise SchemaError(
                f"{where}: {len(rec['node_labels'])} node_labels for {n} nodes"
            )
        for e in rec["edges"]:
            if len(e) != 2:
                raise SchemaError(f"{where}: edge {e} is not a pair")
            if not (0 <= e[0] < n and 0 <= e[1] < n):
                raise IntegrityError(f"{where}: edge {e} references unknown node")
            if e[0] == e[1]:
                raise IntegrityError(f"{where}: self-loop {e}")
        target = np.asarray(rec["targets"], dtype=np.float64)
        if target.ndim != 1:
            raise SchemaError(f"{where}: targets must be a flat list of numbers")
        graphs.append(
            Graph.build(n, [tuple(e) for e in rec["edges"]],
                        node_labels=rec["node_labels"], target=_frozen(target))
        )
    return graphs

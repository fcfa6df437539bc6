"""Anonymous-walk encoding, skip-gram pretraining, and walk feature maps.

A walk is anonymized by replacing each node with the index of its first
occurrence, e.g. ``[v1, v2, v1] -> (0, 1, 0)``. The resulting patterns
are treated as vocabulary words: walks sampled per node form sentences,
a skip-gram model with negative sampling learns one vector per pattern,
and each node's frozen structural embedding is the mean of its walks'
pattern vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _backend
from .errors import ConfigError, EnumerationLimitError, SchemaError
from .graphs import Graph, Subgraph, Walk

logger = logging.getLogger(__name__)

Pattern = tuple[int, ...]

#: Pattern assigned to the degenerate single-node walk at isolated nodes.
DEGENERATE_PATTERN: Pattern = (0,)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_K_GRAPH = np.uint64(0xD1B54A32D192ED03)
_K_NODE = np.uint64(0x8CB92BA72F3D8DD7)
_K_WALK = np.uint64(0x2545F4914F6CDD1D)


def _mix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


def derive_walk_seeds(root_seed: int, graph_index: int, nodes: np.ndarray,
                      walks_per_node: int) -> np.ndarray:
    """Per-(node, walk-index) RNG seeds, a pure function of the root seed.

    This is what makes corpus construction order-independent and safe to
    parallelize per node.
    """
    root = np.uint64(root_seed & ((1 << 64) - 1))
    with np.errstate(over="ignore"):
        g = _mix64(np.uint64(graph_index) * _K_GRAPH ^ root)
        per_node = _mix64(nodes.astype(np.uint64) * _K_NODE ^ g)
        walk_ids = np.arange(walks_per_node, dtype=np.uint64) * _K_WALK
        return _mix64(per_node[:, None] ^ walk_ids[None, :]).ravel()


def anonymize(walk: Walk | Sequence[int]) -> Pattern:
    """First-occurrence encoding of a walk (0-based)."""
    nodes = walk.nodes if isinstance(walk, Walk) else tuple(walk)
    if not nodes:
        raise ConfigError("cannot anonymize an empty walk")
    seen: dict[int, int] = {}
    code = []
    for v in nodes:
        if v not in seen:
            seen[v] = len(seen)
        code.append(seen[v])
    return tuple(code)


def enumerate_patterns(steps: int) -> list[Pattern]:
    """All anonymous patterns realizable by ``steps``-step walks on simple
    graphs: restricted-growth strings of length ``steps + 1`` starting at 0
    with no two consecutive equal entries, in lexicographic order.

    Brute-force by construction; used as the independent oracle for
    vocabulary contents and as the index set of exact feature maps.
    """
    if steps < 0:
        raise ConfigError("steps must be non-negative")
    results: list[Pattern] = []

    def grow(prefix: list[int], top: int):
        if len(prefix) == steps + 1:
            results.append(tuple(prefix))
            return
        for nxt in range(top + 2):
            if nxt != prefix[-1]:
                grow(prefix + [nxt], max(top, nxt))

    grow([0], 0)
    return results


class PatternVocabulary:
    """Bijection between observed patterns and contiguous ids.

    Ids follow first-seen order, so rebuilding from the same corpus order
    reproduces the same mapping. All patterns must share one walk length;
    the degenerate single-node pattern is the only permitted exception.
    """

    def __init__(self, patterns: Iterable[Pattern] = ()):
        self._patterns: list[Pattern] = []
        self._index: dict[Pattern, int] = {}
        self._length: int | None = None
        for p in patterns:
            self.add(p)

    def add(self, pattern: Pattern) -> int:
        idx = self._index.get(pattern)
        if idx is not None:
            return idx
        if pattern != DEGENERATE_PATTERN:
            if self._length is None:
                self._length = len(pattern)
            elif len(pattern) != self._length:
                raise SchemaError(
                    f"mixed walk lengths in vocabulary: {self._length} vs "
                    f"{len(pattern)} (one vocabulary per walk length)"
                )
        idx = len(self._patterns)
        self._patterns.append(pattern)
        self._index[pattern] = idx
        return idx

    def id_of(self, pattern: Pattern) -> int:
        return self._index[pattern]

    def pattern_of(self, idx: int) -> Pattern:
        return self._patterns[idx]

    def __contains__(self, pattern: Pattern) -> bool:
        return pattern in self._index

    def __len__(self) -> int:
        return len(self._patterns)

    @property
    def patterns(self) -> list[Pattern]:
        return list(self._patterns)


def build_vocabulary(corpus_walks: Iterable[Pattern]) -> PatternVocabulary:
    return PatternVocabulary(corpus_walks)


@dataclass
class WalkCorpus:
    """Per-node sequences of pattern ids, ``walks_per_node`` each, for
    every node of every graph in a collection."""

    sequences: np.ndarray  # (total_nodes, walks_per_node) int32
    graph_offsets: np.ndarray  # (n_graphs + 1,) node row ranges
    walk_length: int
    walks_per_node: int
    window: int = 0

    @property
    def total_nodes(self) -> int:
        return self.sequences.shape[0]


def build_corpus(
    graphs: Sequence[Graph], steps: int, walks_per_node: int, seed: int
) -> tuple[PatternVocabulary, WalkCorpus]:
    """Sample ``walks_per_node`` anonymous walks of ``steps`` steps from
    every node and intern the patterns into a vocabulary.

    Isolated nodes receive ``walks_per_node`` copies of the degenerate
    pattern so every node owns a full sequence. Deterministic for a fixed
    seed regardless of scheduling (per-walk seed streams).
    """
    if steps < 1:
        raise ConfigError("walk length must be at least 1 step")
    if walks_per_node < 1:
        raise ConfigError("need at least one walk per node")
    vocab = PatternVocabulary()
    rows: list[np.ndarray] = []
    offsets = [0]
    for g_idx, g in enumerate(graphs):
        n = g.node_count
        offsets.append(offsets[-1] + n)
        if n == 0:
            continue
        indptr, indices = g.csr
        degrees = np.diff(indptr)
        active = np.flatnonzero(degrees > 0)
        seq = np.empty((n, walks_per_node), dtype=np.int32)
        if len(active):
            starts = np.repeat(active.astype(np.int64), walks_per_node)
            seeds = derive_walk_seeds(seed, g_idx, active, walks_per_node)
            codes = _backend.walk_pattern_codes(
                indptr, indices, starts, steps, seeds
            )
            ids = np.fromiter(
                (vocab.add(tuple(int(c) for c in row)) for row in codes),
                dtype=np.int32,
                count=len(codes),
            )
            seq[active] = ids.reshape(len(active), walks_per_node)
        isolated = np.flatnonzero(degrees == 0)
        if len(isolated):
            seq[isolated] = vocab.add(DEGENERATE_PATTERN)
        rows.append(seq)
    sequences = (
        np.concatenate(rows)
        if rows
        else np.empty((0, walks_per_node), dtype=np.int32)
    )
    corpus = WalkCorpus(
        sequences=sequences,
        graph_offsets=np.asarray(offsets, dtype=np.int64),
        walk_length=steps,
        walks_per_node=walks_per_node,
    )
    return vocab, corpus


@dataclass
class EmbeddingTable:
    """Dense vector per vocabulary pattern, the product of skip-gram
    pretraining."""

    vectors: np.ndarray  # (vocab_size, dim) float64
    epoch_losses: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __post_init__(self):
        if not np.isfinite(self.vectors).all():
            raise ValueError("embedding table contains non-finite entries")


def _window_template(length: int, window: int) -> np.ndarray:
    pairs = []
    for i in range(length):
        for j in range(max(0, i - window), min(length, i + window + 1)):
            if j != i:
                pairs.append((i, j))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def train_skipgram(
    corpus: WalkCorpus,
    vocab: PatternVocabulary,
    dim: int,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.025,
    seed: int = 0,
) -> EmbeddingTable:
    """Skip-gram with negative sampling over the per-node walk sequences.

    Center-context pairs are every ordered pair of positions at distance
    <= ``window`` within each node's sequence (clamped at the sequence
    bounds). One SGD ascent step per pair per epoch, in deterministic
    corpus order; the table is initialized from uniform(-0.5/dim, 0.5/dim).
    """
    if len(vocab) == 0:
        raise ConfigError("empty vocabulary")
    if dim < 1:
        raise ConfigError("embedding dimension must be positive")
    if lr <= 0:
        raise ConfigError("learning rate must be positive")
    if epochs <= 0:
        raise ConfigError("epochs must be positive")
    if window < 1:
        raise ConfigError("window must be at least 1")
    if len(vocab) == 1:
        logger.warning(
            "degenerate single-pattern vocabulary: the pair objective is "
            "constant and training only shifts the lone vector"
        )
    rng = np.random.default_rng(seed)
    table = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(vocab), dim))
    template = _window_template(corpus.walks_per_node, window)
    if len(template) == 0 or corpus.total_nodes == 0:
        return EmbeddingTable(table, np.zeros(epochs))
    pairs = corpus.sequences[:, template].reshape(-1, 2).astype(np.int32)
    sgd_seed = int(_mix64(np.uint64(seed & ((1 << 64) - 1)))[()])
    losses = _backend.skipgram_sgd(
        table,
        np.ascontiguousarray(pairs[:, 0]),
        np.ascontiguousarray(pairs[:, 1]),
        len(vocab),
        negatives,
        epochs,
        lr,
        sgd_seed,
    )
    return EmbeddingTable(table, losses)


def skipgram_pair_objective(
    table: np.ndarray, center: int, context: int, negative_ids: Sequence[int]
) -> float:
    """Objective value for one training pair with fixed negatives.

    Kept separate from the SGD kernels so gradients can be validated
    against finite differences of this function.
    """
    vc = table[center]
    val = -np.logaddexp(0.0, -float(vc @ table[context]))
    for ni in negative_ids:
        val += -np.logaddexp(0.0, float(vc @ table[ni]))
    return float(val)


def skipgram_pair_gradient(
    table: np.ndarray, center: int, context: int, negative_ids: Sequence[int]
) -> dict[int, np.ndarray]:
    """Analytic gradient of :func:`skipgram_pair_objective` per row."""
    grads: dict[int, np.ndarray] = {}

    def bump(row, vec):
        grads[row] = grads.get(row, np.zeros(table.shape[1])) + vec

    vc = table[center].copy()
    s = 1.0 / (1.0 + np.exp(-float(vc @ table[context])))
    bump(center, (1.0 - s) * table[context])
    bump(context, (1.0 - s) * vc)
    for ni in negative_ids:
        sn = 1.0 / (1.0 + np.exp(-float(vc @ table[ni])))
        bump(center, -sn * table[ni])
        bump(ni, -sn * vc)
    return grads


@dataclass
class StructuralEmbedding:
    """Frozen per-node structural vectors for a graph collection."""

    vectors: np.ndarray  # (total_nodes, dim) float64
    graph_offsets: np.ndarray  # (n_graphs + 1,)
    provenance: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_graphs(self) -> int:
        return len(self.graph_offsets) - 1

    def for_graph(self, i: int) -> np.ndarray:
        return self.vectors[self.graph_offsets[i] : self.graph_offsets[i + 1]]


def aggregate_node_embeddings(
    corpus: WalkCorpus, table: EmbeddingTable, provenance: dict | None = None
) -> StructuralEmbedding:
    """Mean of each node's pattern vectors: ``Z_v = (1/r) sum_i phi(w_i)``."""
    if corpus.total_nodes and corpus.sequences.max() >= len(table.vectors):
        raise ConfigError("corpus references pattern ids beyond the table")
    vectors = table.vectors[corpus.sequences].mean(axis=1)
    return StructuralEmbedding(
        vectors=vectors,
        graph_offsets=corpus.graph_offsets.copy(),
        provenance=dict(provenance or {}),
    )


# ---------------------------------------------------------------------------
# Exact anonymous-walk feature maps
# ---------------------------------------------------------------------------


def _count_walks(g: Graph, steps: int) -> float:
    ways = np.ones(g.node_count, dtype=np.float64)
    indptr, indices = g.csr
    for _ in range(steps):
        nxt = np.zeros_like(ways)
        np.add.at(nxt, indices, ways[np.repeat(np.arange(g.node_count),
                                               np.diff(indptr))])
        ways = nxt
    return float(ways.sum())


def awk_feature_map(
    g: Graph | Subgraph, steps: int, max_walks: float = 1e6
) -> dict[Pattern, float]:
    """Exact occurrence distribution of anonymous patterns over all
    ``steps``-step walks started uniformly at the graph's nodes.

    Walks branch with per-step probability 1/deg; full enumeration, so a
    budget guard rejects graphs with more than ``max_walks`` walks
    (fall back to Monte Carlo sampling in that case). Nodes with no
    neighbors contribute their mass to the degenerate pattern.
    """
    graph = g.graph if isinstance(g, Subgraph) else g
    if graph.node_count == 0:
        raise ConfigError("feature map of an empty graph")
    total = _count_walks(graph, steps)
    if total > max_walks:
        raise EnumerationLimitError(
            f"~{total:.3g} walks exceed the enumeration budget of "
            f"{max_walks:.3g}; estimate the distribution by Monte Carlo "
            f"sampling instead"
        )
    indptr, indices = graph.csr
    start_p = 1.0 / graph.node_count
    dist: dict[Pattern, float] = {}

    def walk(v: int, remaining: int, prob: float, nodes: list[int]):
        if remaining == 0:
            pat = anonymize(nodes)
            dist[pat] = dist.get(pat, 0.0) + prob
            return
        lo, hi = int(indptr[v]), int(indptr[v + 1])
        deg = hi - lo
        if deg == 0:
            dist[DEGENERATE_PATTERN] = dist.get(DEGENERATE_PATTERN, 0.0) + prob
            return
        step = prob / deg
        for w in indices[lo:hi]:
            nodes.append(int(w))
            walk(int(w), remaining - 1, step, nodes)
            nodes.pop()

    for v in range(graph.node_count):
        walk(v, steps, start_p, [v])
    return dist


def awk_feature_vector(
    g: Graph | Subgraph, steps: int, patterns: Sequence[Pattern] | None = None
) -> np.ndarray:
    """Dense feature-map vector aligned to ``patterns`` (by default the
    full lexicographic pattern enumeration for this walk length)."""
    if patterns is None:
        patterns = enumerate_patterns(steps)
    dist = awk_feature_map(g, steps)
    return np.array([dist.get(p, 0.0) for p in patterns], dtype=np.float64)


def awk_kernel(a: Graph | Subgraph, b: Graph | Subgraph, steps: int) -> float:
    """Inner product of exact anonymous-walk feature maps."""
    da = awk_feature_map(a, steps)
    db = awk_feature_map(b, steps)
    if len(db) < len(da):
        da, db = db, da
    return sum(p * db.get(k, 0.0) for k, p in da.items())

"""Weisfeiler-Lehman kernel, learnable stochastic structural masks, and
expected-kernel node embeddings.

A structural mask is a small stochastic graph: every candidate edge
carries a Bernoulli logit, every node a categorical label distribution
over the label dictionary. Masks are compared against each node's r-hop
neighborhood through the WL subtree kernel; the per-node vector of
expected kernel responses is the structural embedding. Sampling uses the
binary-concrete / Gumbel-Softmax relaxations: structure is sampled hard,
and the retained soft weights enter the kernel as fractional counts so
the whole response is differentiable in the mask parameters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericError
from .graphs import Graph, Subgraph, extract_r_hop

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# WL refinement and kernel
# ---------------------------------------------------------------------------


class WlRelabeler:
    """Injective compression of (own label, sorted neighbor labels) pairs.

    One instance per session: every graph refined against the same
    relabeler lives in the same compressed-label space, which is what
    makes kernel values comparable across graphs.
    """

    def __init__(self):
        self._table: dict[tuple, int] = {}

    def compress(self, own: int, neighbors: tuple[int, ...]) -> int:
        key = (own, neighbors)
        idx = self._table.get(key)
        if idx is None:
            idx = len(self._table)
            self._table[key] = idx
        return idx

    def __len__(self):
        return len(self._table)


@dataclass
class WlFeature:
    """Per-depth label histograms (and the labels themselves) of one graph."""

    histograms: list[dict[int, float]]  # index = refinement depth
    node_labels: list[np.ndarray]  # per depth, shape (n,)

    @property
    def depth(self) -> int:
        return len(self.histograms) - 1


def wl_refine(g: Graph, depth: int, relabeler: WlRelabeler) -> WlFeature:
    """Iterative label refinement: depth 0 is the raw label histogram,
    each further depth hashes (own, sorted neighbor multiset) through the
    shared relabeler."""
    if depth < 0:
        raise ConfigError("WL depth must be non-negative")
    labels = np.asarray(g.node_labels, dtype=np.int64)
    indptr, indices = g.csr
    per_depth_labels = [labels]
    for _ in range(depth):
        prev = per_depth_labels[-1]
        nxt = np.empty_like(prev)
        for v in range(g.node_count):
            nbr = tuple(sorted(int(prev[u]) for u in indices[indptr[v]:indptr[v + 1]]))
            nxt[v] = relabeler.compress(int(prev[v]), nbr)
        per_depth_labels.append(nxt)
    hists = []
    for lab in per_depth_labels:
        h: dict[int, float] = {}
        for v in lab:
            v = int(v)
            h[v] = h.get(v, 0.0) + 1.0
        hists.append(h)
    return WlFeature(histograms=hists, node_labels=per_depth_labels)


def _hist_dot(a: dict[int, float], b: dict[int, float]) -> float:
    if len(b) < len(a):
        a, b = b, a
    return sum(v * b.get(k, 0.0) for k, v in a.items())


def wl_kernel(
    g1: Graph | WlFeature,
    g2: Graph | WlFeature,
    depth: int,
    relabeler: WlRelabeler,
) -> float:
    """Sum over depths of linear kernels between label histograms."""
    f1 = g1 if isinstance(g1, WlFeature) else wl_refine(g1, depth, relabeler)
    f2 = g2 if isinstance(g2, WlFeature) else wl_refine(g2, depth, relabeler)
    return sum(
        _hist_dot(f1.histograms[h], f2.histograms[h]) for h in range(depth + 1)
    )


# ---------------------------------------------------------------------------
# Stochastic structural masks
# ---------------------------------------------------------------------------


def _pair_list(n: int) -> np.ndarray:
    return np.array(
        [(u, v) for u in range(n) for v in range(u + 1, n)], dtype=np.int64
    ).reshape(-1, 2)


@dataclass
class StructuralMask:
    """First-order stochastic graph: Bernoulli edges over the complete
    pair set, categorical labels over the dictionary."""

    node_count: int
    edge_logits: np.ndarray  # (n_pairs,)
    label_logits: np.ndarray  # (node_count, n_labels)
    mask_id: int = 0

    @property
    def pairs(self) -> np.ndarray:
        return _pair_list(self.node_count)

    def edge_probs(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.edge_logits))

    def label_probs(self) -> np.ndarray:
        z = self.label_logits - self.label_logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def make_masks(
    count: int,
    proto_sizes: Sequence[int],
    n_labels: int,
    seed: int = 0,
    init_scale: float = 0.5,
) -> list[StructuralMask]:
    """Fresh masks with mildly randomized logits; proto sizes cycle when
    fewer sizes than masks are given (multi-scale filters)."""
    if count < 1:
        raise ConfigError("need at least one mask")
    rng = np.random.default_rng(seed)
    masks = []
    for j in range(count):
        n = int(proto_sizes[j % len(proto_sizes)])
        n_pairs = n * (n - 1) // 2
        masks.append(
            StructuralMask(
                node_count=n,
                edge_logits=rng.normal(0.0, init_scale, n_pairs),
                label_logits=rng.normal(0.0, init_scale, (n, n_labels)),
                mask_id=j,
            )
        )
    return masks


@dataclass
class MaskSample:
    """One hard draw from a mask plus the relaxation weights needed for
    gradients ('hard forward structure, soft weights')."""

    graph: Graph
    present: np.ndarray  # indices into the mask's pair list
    edge_soft: np.ndarray  # (n_present,) binary-concrete weights
    label_choice: np.ndarray  # (n,) sampled label ids
    label_soft: np.ndarray  # (n,) relaxed weight of the chosen label
    label_simplex: np.ndarray  # (n, n_labels) full relaxed softmax
    temperature: float


def _sample_from_noise(
    mask: StructuralMask,
    edge_uniforms: np.ndarray,
    label_gumbels: np.ndarray,
    temperature: float,
) -> MaskSample:
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    logistic = np.log(edge_uniforms) - np.log1p(-edge_uniforms)
    scores = mask.edge_logits + logistic
    present = np.flatnonzero(scores > 0.0)
    edge_soft = 1.0 / (1.0 + np.exp(-scores[present] / temperature))

    noisy = mask.label_logits + label_gumbels
    label_choice = noisy.argmax(axis=1)
    z = (noisy - noisy.max(axis=1, keepdims=True)) / temperature
    simplex = np.exp(z)
    simplex /= simplex.sum(axis=1, keepdims=True)
    label_soft = simplex[np.arange(mask.node_count), label_choice]

    pairs = mask.pairs
    graph = Graph.build(
        mask.node_count,
        [tuple(p) for p in pairs[present]],
        node_labels=label_choice,
    )
    return MaskSample(
        graph=graph,
        present=present,
        edge_soft=edge_soft,
        label_choice=label_choice,
        label_soft=label_soft,
        label_simplex=simplex,
        temperature=temperature,
    )


def sample_mask(
    mask: StructuralMask, temperature: float, rng: np.random.Generator
) -> tuple[Graph, MaskSample]:
    """Draw a hard graph from the mask; the returned sample also carries
    the soft relaxation weights."""
    n_pairs = len(mask.edge_logits)
    edge_uniforms = rng.uniform(1e-12, 1.0 - 1e-12, n_pairs)
    label_uniforms = rng.uniform(1e-12, 1.0 - 1e-12, mask.label_logits.shape)
    gumbels = -np.log(-np.log(label_uniforms))
    sample = _sample_from_noise(mask, edge_uniforms, gumbels, temperature)
    return sample.graph, sample


# ---------------------------------------------------------------------------
# Weighted kernel between a mask sample and a crisp neighborhood
# ---------------------------------------------------------------------------


@dataclass
class _WeightedSample:
    """WL labels and per-depth weights of one mask sample.

    Node i's histogram weight at depth h is ``s_i * E_i**h`` where
    ``s_i`` is its label relaxation weight and ``E_i`` the product of the
    relaxation weights of its incident sampled edges; with hard weights
    (inference) everything is 1 and the kernel is the crisp WL kernel.
    """

    sample: MaskSample
    labels: list[np.ndarray]  # per depth
    s: np.ndarray  # (n,)
    edge_factor: np.ndarray  # (n,) E_i
    relaxed: bool

    def node_weight(self, depth: int) -> np.ndarray:
        if not self.relaxed:
            return np.ones_like(self.s)
        return self.s * self.edge_factor**depth


def _weight_sample(
    sample: MaskSample, depth: int, relabeler: WlRelabeler, relaxed: bool
) -> _WeightedSample:
    feat = wl_refine(sample.graph, depth, relabeler)
    n = sample.graph.node_count
    edge_factor = np.ones(n, dtype=np.float64)
    pairs = sample.graph.edges
    for (u, v), w in zip(pairs, _present_soft(sample)):
        edge_factor[u] *= w
        edge_factor[v] *= w
    return _WeightedSample(
        sample=sample,
        labels=feat.node_labels,
        s=sample.label_soft.astype(np.float64),
        edge_factor=edge_factor,
        relaxed=relaxed,
    )


def _present_soft(sample: MaskSample) -> np.ndarray:
    """Soft weights aligned with the sample graph's canonical edge order."""
    # Graph.build sorts edges; realign the per-present-pair weights.
    pairs = _pair_list(sample.graph.node_count)[sample.present]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return sample.edge_soft[order]


def _weighted_kernel_value(ws: _WeightedSample, nbh: WlFeature, depth: int) -> float:
    total = 0.0
    for h in range(depth + 1):
        hist = nbh.histograms[h] if h < len(nbh.histograms) else {}
        w = ws.node_weight(h)
        lab = ws.labels[h]
        for i in range(len(lab)):
            c = hist.get(int(lab[i]))
            if c:
                total += w[i] * c
    return total


def expected_kernel_response(
    g: Graph,
    v: int,
    masks: Sequence[StructuralMask],
    r: int,
    depth: int,
    samples: int,
    rng: np.random.Generator,
    relabeler: WlRelabeler | None = None,
    temperature: float = 1.0,
    relaxed: bool = False,
) -> np.ndarray:
    """Monte Carlo estimate of the expected WL kernel between each mask
    and the r-hop neighborhood of ``v``: one entry per mask, all >= 0."""
    if not masks:
        raise ConfigError("need at least one mask")
    if samples < 1:
        raise ConfigError("need at least one Monte Carlo sample")
    relabeler = relabeler or WlRelabeler()
    nbh = wl_refine(extract_r_hop(g, v, r).graph, depth, relabeler)
    out = np.zeros(len(masks), dtype=np.float64)
    for j, mask in enumerate(masks):
        acc = 0.0
        for _ in range(samples):
            _, sample = sample_mask(mask, temperature, rng)
            ws = _weight_sample(sample, depth, relabeler, relaxed)
            acc += _weighted_kernel_value(ws, nbh, depth)
        out[j] = acc / samples
    return out


# ---------------------------------------------------------------------------
# Jensen-Shannon regularizer
# ---------------------------------------------------------------------------

_JSD_EPS = 1e-8


def jsd_loss(responses: np.ndarray) -> float:
    """Negative generalized Jensen-Shannon divergence of the per-mask
    node distributions; bounded in [-log(m), 0], zero when all masks
    induce the same distribution."""
    z = np.asarray(responses, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ConfigError("responses must be a (nodes, masks) matrix")
    z = z + _JSD_EPS
    p = z / z.sum(axis=0, keepdims=True)
    mixture = p.mean(axis=1)
    h_mix = -float((mixture * np.log(mixture)).sum())
    h_each = -(p * np.log(p)).sum(axis=0)
    return -h_mix + float(h_each.mean())


def _jsd_loss_t(z: ad.Tensor) -> ad.Tensor:
    m = z.shape[1]
    ze = z + _JSD_EPS
    p = ze / ze.sum(axis=0, keepdims=True)
    mixture = p.mean(axis=1, keepdims=True)
    h_mix = (mixture * ad.log(mixture)).sum()
    h_each = (p * ad.log(p)).sum() * (1.0 / m)
    return h_mix - h_each


# ---------------------------------------------------------------------------
# Filter learning (masks + MLP head, MSE + JSD objective)
# ---------------------------------------------------------------------------


@dataclass
class FilterModel:
    """Trainable mask logits plus the shared per-node MLP head."""

    masks: list[StructuralMask]
    edge_params: list[ad.Tensor]
    label_params: list[ad.Tensor]
    head: dict[str, ad.Tensor]
    depth: int
    radius: int
    mc_samples: int
    temperature: float
    label_dictionary: list[int] = field(default_factory=list)

    def parameters(self) -> list[ad.Tensor]:
        return (
            self.edge_params
            + self.label_params
            + [self.head[k] for k in ("w1", "b1", "w2", "b2")]
        )

    def sync_masks(self):
        for mask, e, l in zip(self.masks, self.edge_params, self.label_params):
            mask.edge_logits = e.data
            mask.label_logits = l.data


class NeighborhoodIndex:
    """Sparse per-graph lookup (depth, label) -> (node ids, counts) over
    the WL features of every node's r-hop neighborhood.

    Built once per dataset; batches assemble their slice on the fly.
    """

    def __init__(
        self,
        graphs: Sequence[Graph],
        r: int,
        depth: int,
        relabeler: WlRelabeler,
    ):
        self.graphs = list(graphs)
        self.depth = depth
        self.per_graph: list[dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]] = []
        self.node_counts = np.array([g.node_count for g in graphs], dtype=np.int64)
        for g in graphs:
            acc: dict[tuple[int, int], list[tuple[int, float]]] = {}
            for v in range(g.node_count):
                nbh = wl_refine(extract_r_hop(g, v, r).graph, depth, relabeler)
                for h, hist in enumerate(nbh.histograms):
                    for lab, cnt in hist.items():
                        acc.setdefault((h, lab), []).append((v, cnt))
            self.per_graph.append(
                {
                    key: (
                        np.array([i for i, _ in entries], dtype=np.int64),
                        np.array([c for _, c in entries], dtype=np.float64),
                    )
                    for key, entries in acc.items()
                }
            )

    def batch(self, graph_ids: Sequence[int]):
        """Merge the selected graphs' indices, offsetting node ids into
        the batch's node numbering. Returns (index, total_nodes,
        node_offsets)."""
        merged: dict[tuple[int, int], list[tuple[np.ndarray, np.ndarray]]] = {}
        offsets = np.concatenate(
            [[0], np.cumsum(self.node_counts[list(graph_ids)])]
        )
        for pos, gid in enumerate(graph_ids):
            for key, (idx, cnt) in self.per_graph[gid].items():
                merged.setdefault(key, []).append((idx + offsets[pos], cnt))
        index = {
            key: (np.concatenate([i for i, _ in parts]),
                  np.concatenate([c for _, c in parts]))
            for key, parts in merged.items()
        }
        return index, int(offsets[-1]), offsets


def _mask_noise(model: FilterModel, rng: np.random.Generator):
    noise = []
    for mask in model.masks:
        eu = rng.uniform(1e-12, 1.0 - 1e-12,
                         (model.mc_samples, len(mask.edge_logits)))
        lu = rng.uniform(1e-12, 1.0 - 1e-12,
                         (model.mc_samples,) + mask.label_logits.shape)
        noise.append((eu, -np.log(-np.log(lu))))
    return noise


def _batch_responses(
    model: FilterModel,
    batch_index: dict,
    n_nodes: int,
    noise,
    relabeler: WlRelabeler,
    relaxed: bool = True,
) -> ad.Tensor:
    """Expected kernel responses for every node of a batch, shape
    (n_nodes, m), differentiable in the mask parameters.

    The forward value uses the relaxed fractional counts; with fixed
    noise the result is a smooth function of the logits, which is what
    makes the finite-difference contract on this path meaningful.
    """
    m = len(model.masks)
    S = model.mc_samples
    depth = model.depth
    z = np.zeros((n_nodes, m), dtype=np.float64)
    backprops: list[list] = [[] for _ in range(m)]
    for j, mask in enumerate(model.masks):
        eu, gu = noise[j]
        for s_idx in range(S):
            sample = _sample_from_noise(mask, eu[s_idx], gu[s_idx],
                                        model.temperature)
            ws = _weight_sample(sample, depth, relabeler, relaxed)
            # forward: accumulate weighted counts per (depth, label) key
            hits = []
            for h in range(depth + 1):
                w = ws.node_weight(h)
                lab = ws.labels[h]
                for i in range(len(lab)):
                    entry = batch_index.get((h, int(lab[i])))
                    if entry is None:
                        continue
                    idx, cnt = entry
                    np.add.at(z[:, j], idx, (w[i] / S) * cnt)
                    hits.append((h, i, idx, cnt))
            backprops[j].append((sample, ws, hits))

    edge_params = model.edge_params
    label_params = model.label_params
    tau = model.temperature

    def make_edge_vjp(j):
        def vjp(g):
            col = g[:, j]
            out = np.zeros_like(edge_params[j].data)
            if not relaxed:
                return out
            for sample, ws, hits in backprops[j]:
                soft = _present_soft(sample)
                pairs_local = _pair_list(sample.graph.node_count)[sample.present]
                order = np.lexsort((pairs_local[:, 1], pairs_local[:, 0]))
                present_sorted = sample.present[order]
                edges = sample.graph.edges
                # dK/d(soft_e) = sum_h>=1 h * omega_i^h / soft_e for both endpoints
                dsoft = np.zeros(len(edges))
                incident: dict[int, list[int]] = {}
                for e_i, (u, v) in enumerate(edges):
                    incident.setdefault(int(u), []).append(e_i)
                    incident.setdefault(int(v), []).append(e_i)
                for h, i, idx, cnt in hits:
                    if h == 0:
                        continue
                    contrib = float(col[idx] @ cnt)
                    if contrib == 0.0:
                        continue
                    base = ws.s[i] * ws.edge_factor[i] ** h / len(backprops[j])
                    for e_i in incident.get(int(i), ()):
                        dsoft[e_i] += contrib * h * base / soft[e_i]
                # soft = sigmoid(score / tau): dsoft/dlogit = soft(1-soft)/tau
                out[present_sorted] += dsoft * soft * (1.0 - soft) / tau
            return out

        return vjp

    def make_label_vjp(j):
        def vjp(g):
            col = g[:, j]
            out = np.zeros_like(label_params[j].data)
            if not relaxed:
                return out
            for sample, ws, hits in backprops[j]:
                n = sample.graph.node_count
                ds = np.zeros(n)
                for h, i, idx, cnt in hits:
                    contrib = float(col[idx] @ cnt)
                    ds[i] += contrib * ws.edge_factor[i] ** h / len(backprops[j])
                # s_i = simplex[i, choice]; softmax jacobian row / tau
                simplex = sample.label_simplex
                choice = sample.label_choice
                for i in range(n):
                    if ds[i] == 0.0:
                        continue
                    row = simplex[i]
                    sc = row[choice[i]]
                    jac = -sc * row / tau
                    jac[choice[i]] += sc / tau
                    out[i] += ds[i] * jac
            return out

        return vjp

    parents = []
    for j in range(m):
        parents.append((edge_params[j], make_edge_vjp(j)))
        parents.append((label_params[j], make_label_vjp(j)))
    return ad.custom_leaf(z / 1.0, parents)


def _head_forward(head: dict[str, ad.Tensor], z: ad.Tensor) -> ad.Tensor:
    h = ad.relu(z @ head["w1"] + head["b1"])
    return h @ head["w2"] + head["b2"]


def build_filter_model(
    mask_count: int,
    proto_sizes: Sequence[int],
    n_labels: int,
    depth: int = 2,
    radius: int = 2,
    mc_samples: int = 8,
    temperature: float = 1.0,
    head_hidden: int = 64,
    seed: int = 0,
) -> FilterModel:
    masks = make_masks(mask_count, proto_sizes, n_labels, seed=seed)
    rng = np.random.default_rng(seed + 1)
    bound = 1.0 / math.sqrt(head_hidden)
    head = {
        "w1": ad.Tensor.param(
            rng.uniform(-bound, bound, (mask_count, head_hidden))
        ),
        "b1": ad.Tensor.param(np.zeros(head_hidden)),
        "w2": ad.Tensor.param(rng.uniform(-bound, bound, (head_hidden, 1))),
        "b2": ad.Tensor.param(np.zeros(1)),
    }
    return FilterModel(
        masks=masks,
        edge_params=[ad.Tensor.param(m.edge_logits.copy()) for m in masks],
        label_params=[ad.Tensor.param(m.label_logits.copy()) for m in masks],
        head=head,
        depth=depth,
        radius=radius,
        mc_samples=mc_samples,
        temperature=temperature,
    )


def filter_step_loss(
    model: FilterModel,
    index: NeighborhoodIndex,
    graph_ids: Sequence[int],
    targets: np.ndarray,
    noise,
    relabeler: WlRelabeler,
    jsd_weight: float = 1.0,
) -> tuple[ad.Tensor, float, float]:
    """Total loss (MSE + JSD) for one batch under fixed sampling noise.

    Returns (loss tensor, mse value, jsd value); keeping noise explicit
    makes the loss a deterministic, differentiable function of the
    parameters, so gradients can be checked by finite differences with
    common random numbers.
    """
    model.sync_masks()
    batch_index, n_nodes, offsets = index.batch(graph_ids)
    z = _batch_responses(model, batch_index, n_nodes, noise, relabeler)
    per_node = _head_forward(model.head, z)  # (n_nodes, 1)
    counts = np.diff(offsets).astype(np.float64)
    graph_seg = np.repeat(np.arange(len(graph_ids)), np.diff(offsets))
    pooled = ad.segment_sum(per_node, graph_seg, len(graph_ids)) * ad.Tensor(
        (1.0 / counts)[:, None]
    )
    err = pooled - ad.Tensor(np.asarray(targets, dtype=np.float64)[:, None])
    mse = (err**2.0).mean()
    jsd_terms = []
    for i in range(len(graph_ids)):
        zi = ad.take(z, np.arange(offsets[i], offsets[i + 1]))
        jsd_terms.append(_jsd_loss_t(zi))
    jsd = ad.concat([t.reshape((1,)) for t in jsd_terms]).mean()
    loss = mse + jsd * jsd_weight
    return loss, float(mse.data), float(jsd.data)


def train_filters(
    graphs: Sequence[Graph],
    targets: np.ndarray,
    mask_count: int,
    proto_sizes: Sequence[int],
    radius: int = 2,
    depth: int = 2,
    epochs: int = 30,
    lr: float = 1e-2,
    seed: int = 0,
    mc_samples: int = 8,
    temperature: float = 1.0,
    batch_size: int = 32,
    jsd_weight: float = 1.0,
    log_hook=None,
) -> tuple[FilterModel, list[dict]]:
    """Learn mask parameters and the shared MLP head by minimizing
    dataset MSE plus the JSD mask-diversity term (one gradient step per
    mini-batch, Adam, fresh common-random-number noise per step)."""
    targets = np.asarray(targets, dtype=np.float64).reshape(len(graphs))
    if mask_count < 1:
        raise ConfigError("mask count must be positive")
    labels = sorted({int(l) for g in graphs for l in g.node_labels})
    label_map = {l: i for i, l in enumerate(labels)}
    remapped = [
        Graph.build(
            g.node_count,
            [tuple(e) for e in g.edges],
            node_labels=[label_map[int(l)] for l in g.node_labels],
            target=g.target,
        )
        for g in graphs
    ]
    relabeler = WlRelabeler()
    model = build_filter_model(
        mask_count,
        proto_sizes,
        n_labels=len(labels),
        depth=depth,
        radius=radius,
        mc_samples=mc_samples,
        temperature=temperature,
        seed=seed,
    )
    model.label_dictionary = labels
    index = NeighborhoodIndex(remapped, radius, depth, relabeler)
    opt = ad.Adam(model.parameters())
    rng = np.random.default_rng(seed + 17)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(remapped))
        mse_sum = jsd_sum = 0.0
        n_batches = 0
        for lo in range(0, len(order), batch_size):
            batch = order[lo : lo + batch_size]
            noise = _mask_noise(model, rng)
            opt.zero_grad()
            loss, mse_v, jsd_v = filter_step_loss(
                model, index, batch, targets[batch], noise, relabeler,
                jsd_weight=jsd_weight,
            )
            if not np.isfinite(loss.data):
                raise NumericError(
                    f"non-finite filter loss at epoch {epoch}; lower the "
                    f"learning rate (currently {lr})"
                )
            loss.backward()
            opt.step(lr)
            mse_sum += mse_v
            jsd_sum += jsd_v
            n_batches += 1
        model.sync_masks()
        rec = {
            "epoch": epoch,
            "mse": mse_sum / n_batches,
            "jsd": jsd_sum / n_batches,
            "total": (mse_sum + jsd_sum) / n_batches,
        }
        history.append(rec)
        if log_hook:
            log_hook(rec)
    return model, history


def kernel_node_embeddings(
    graphs: Sequence[Graph],
    masks: Sequence[StructuralMask],
    radius: int,
    depth: int,
    samples: int,
    seed: int,
    label_dictionary: Sequence[int] | None = None,
    temperature: float = 1.0,
):
    """Frozen per-node response vectors z(v) (one entry per mask), using
    one shared set of hard mask samples for every node so isomorphic
    neighborhoods get exactly identical rows."""
    from .walks import StructuralEmbedding

    relabeler = WlRelabeler()
    if label_dictionary is not None:
        label_map = {int(l): i for i, l in enumerate(label_dictionary)}
        graphs = [
            Graph.build(
                g.node_count,
                [tuple(e) for e in g.edges],
                node_labels=[label_map[int(l)] for l in g.node_labels],
                target=g.target,
            )
            for g in graphs
        ]
    rng = np.random.default_rng(seed)
    weighted: list[_WeightedSample] = []
    for mask in masks:
        for _ in range(samples):
            _, sample = sample_mask(mask, temperature, rng)
            weighted.append(_weight_sample(sample, depth, relabeler, relaxed=False))
    offsets = [0]
    rows = []
    for g in graphs:
        for v in range(g.node_count):
            nbh = wl_refine(extract_r_hop(g, v, radius).graph, depth, relabeler)
            row = np.zeros(len(masks))
            for k, ws in enumerate(weighted):
                row[k // samples] += _weighted_kernel_value(ws, nbh, depth)
            rows.append(row / samples)
        offsets.append(offsets[-1] + g.node_count)
    vectors = np.vstack(rows) if rows else np.zeros((0, len(masks)))
    return StructuralEmbedding(
        vectors=vectors,
        graph_offsets=np.asarray(offsets, dtype=np.int64),
        provenance={
            "method": "gknn",
            "masks": len(masks),
            "radius": radius,
            "wl_depth": depth,
            "mc_samples": samples,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# Anonymous-walk kernel as a plug-in layer (equivalence oracle)
# ---------------------------------------------------------------------------


def awk_gknn_layer(
    g: Graph | Subgraph, mask_graphs: Sequence[Graph | Subgraph], steps: int
) -> np.ndarray:
    """Kernel-convolution layer using the anonymous-walk kernel: one
    inner product in the exact walk-distribution feature space per mask
    graph."""
    from .walks import awk_feature_vector, enumerate_patterns

    patterns = enumerate_patterns(steps)
    base = awk_feature_vector(g, steps, patterns)
    return np.array(
        [float(base @ awk_feature_vector(m, steps, patterns)) for m in mask_graphs]
    )

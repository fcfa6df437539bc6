"""Pure-Python reference implementation of the hot kernels.

Selected at import time when the compiled extension is unavailable (or
when ``GSATNET_PURE_PYTHON=1``). The algorithms, update order, and RNG
streams match :mod:`gsatnet._speedups` exactly; only low-order floating
point bits may differ because the compiled path uses scalar C loops
where this one uses vectorized numpy.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


class SplitMix64:
    """Deterministic 64-bit RNG used identically by both backends."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def next_double(self) -> float:
        return (self.next_u64() >> 11) * _INV53


def walk_pattern_codes(indptr, indices, starts, steps, seeds):
    """Simulate one uniform random walk per start node and return the
    anonymized first-occurrence codes, shape (len(starts), steps + 1).

    Every start must have degree >= 1. ``seeds[w]`` seeds walk w's
    private RNG stream, so walks are independent of evaluation order.
    """
    n = len(starts)
    out = np.empty((n, steps + 1), dtype=np.int32)
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    for w in range(n):
        rng = SplitMix64(int(seeds[w]))
        v = int(starts[w])
        uniq = [v]
        out[w, 0] = 0
        for t in range(1, steps + 1):
            lo = int(indptr[v])
            deg = int(indptr[v + 1]) - lo
            v = int(indices[lo + int(rng.next_double() * deg)])
            try:
                code = uniq.index(v)
            except ValueError:
                code = len(uniq)
                uniq.append(v)
            out[w, t] = code
    return out


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def skipgram_sgd(table, centers, contexts, vocab_size, negatives, epochs, lr0, seed):
    """Sequential SGD on the negative-sampling objective.

    For each (center, context) pair, one ascent step on
    ``log s(phi_c . phi_o) + sum_k log s(-phi_c . phi_nk)`` with
    ``negatives`` uniform draws from the vocabulary. ``table`` is updated
    in place; the per-epoch mean loss (negated objective) is returned.
    The step size decays linearly from ``lr0`` to ``lr0 / 10`` across
    epochs.
    """
    rng = SplitMix64(int(seed))
    n_pairs = len(centers)
    losses = np.zeros(epochs, dtype=np.float64)
    for epoch in range(epochs):
        if epochs > 1:
            lr = lr0 * (1.0 - 0.9 * epoch / (epochs - 1))
        else:
            lr = lr0
        total = 0.0
        for p in range(n_pairs):
            c = int(centers[p])
            o = int(contexts[p])
            vc = table[c]
            acc = np.zeros(table.shape[1], dtype=np.float64)
            dot = float(np.dot(vc, table[o]))
            total += _softplus(-dot)
            gpos = 1.0 - 1.0 / (1.0 + math.exp(-dot))
            acc += gpos * table[o]
            table[o] += (lr * gpos) * vc
            for _ in range(negatives):
                ni = rng.next_u64() % vocab_size
                dotn = float(np.dot(vc, table[ni]))
                total += _softplus(dotn)
                sn = 1.0 / (1.0 + math.exp(-dotn))
                acc -= sn * table[ni]
                table[ni] -= (lr * sn) * vc
            table[c] += lr * acc
        losses[epoch] = total / max(n_pairs, 1)
    return losses

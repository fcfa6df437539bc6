# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled fast path for walk simulation and skip-gram SGD.

Mirrors gsatnet._pyref operation for operation; see that module for the
behavioral contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static const uint64_t SM_GOLDEN = 0x9E3779B97F4A7C15ULL;
    static const uint64_t SM_MIX1   = 0xBF58476D1CE4E5B9ULL;
    static const uint64_t SM_MIX2   = 0x94D049BB133111EBULL;
    static inline uint64_t sm_next(uint64_t *state) {
        *state += SM_GOLDEN;
        uint64_t z = *state;
        z = (z ^ (z >> 30)) * SM_MIX1;
        z = (z ^ (z >> 27)) * SM_MIX2;
        return z ^ (z >> 31);
    }
    static inline double sm_next_double(uint64_t *state) {
        return (sm_next(state) >> 11) * (1.0 / 9007199254740992.0);
    }
    """
    ctypedef unsigned long long uint64_t
    uint64_t sm_next(uint64_t *state) nogil
    double sm_next_double(uint64_t *state) nogil


def walk_pattern_codes(indptr, indices, starts, int steps, seeds):
    cdef cnp.int64_t[::1] indptr_v = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int32_t[::1] indices_v = np.ascontiguousarray(indices, dtype=np.int32)
    cdef cnp.int64_t[::1] starts_v = np.ascontiguousarray(starts, dtype=np.int64)
    cdef cnp.uint64_t[::1] seeds_v = np.ascontiguousarray(seeds, dtype=np.uint64)
    cdef Py_ssize_t n = starts_v.shape[0]
    out_arr = np.empty((n, steps + 1), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] out = out_arr
    uniq_arr = np.empty(steps + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] uniq = uniq_arr
    cdef Py_ssize_t w, t, j
    cdef long long v, lo, deg
    cdef int n_uniq, code
    cdef uint64_t state
    with nogil:
        for w in range(n):
            state = seeds_v[w]
            v = starts_v[w]
            uniq[0] = v
            n_uniq = 1
            out[w, 0] = 0
            for t in range(1, steps + 1):
                lo = indptr_v[v]
                deg = indptr_v[v + 1] - lo
                v = indices_v[lo + <long long>(sm_next_double(&state) * deg)]
                code = -1
                for j in range(n_uniq):
                    if uniq[j] == v:
                        code = <int>j
                        break
                if code < 0:
                    code = n_uniq
                    uniq[n_uniq] = v
                    n_uniq += 1
                out[w, t] = code
    return out_arr


cdef inline double _softplus(double x) nogil:
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


def skipgram_sgd(table, centers, contexts, long long vocab_size, int negatives,
                 int epochs, double lr0, seed):
    cdef double[:, ::1] tab = table
    cdef cnp.int32_t[::1] cen = np.ascontiguousarray(centers, dtype=np.int32)
    cdef cnp.int32_t[::1] ctx = np.ascontiguousarray(contexts, dtype=np.int32)
    cdef Py_ssize_t n_pairs = cen.shape[0]
    cdef Py_ssize_t dim = tab.shape[1]
    losses_arr = np.zeros(epochs, dtype=np.float64)
    cdef double[::1] losses = losses_arr
    acc_arr = np.zeros(dim, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef uint64_t state = <uint64_t>(<unsigned long long>int(seed))
    cdef Py_ssize_t p, d
    cdef int epoch, k
    cdef long long c, o, ni
    cdef double lr, total, dot, gpos, sn, scale
    with nogil:
        for epoch in range(epochs):
            if epochs > 1:
                lr = lr0 * (1.0 - 0.9 * epoch / (epochs - 1))
            else:
                lr = lr0
            total = 0.0
            for p in range(n_pairs):
                c = cen[p]
                o = ctx[p]
                for d in range(dim):
                    acc[d] = 0.0
                dot = 0.0
                for d in range(dim):
                    dot += tab[c, d] * tab[o, d]
                total += _softplus(-dot)
                gpos = 1.0 - 1.0 / (1.0 + exp(-dot))
                for d in range(dim):
                    acc[d] += gpos * tab[o, d]
                scale = lr * gpos
                for d in range(dim):
                    tab[o, d] += scale * tab[c, d]
                for k in range(negatives):
                    ni = <long long>(sm_next(&state) % <uint64_t>vocab_size)
                    dot = 0.0
                    for d in range(dim):
                        dot += tab[c, d] * tab[ni, d]
                    total += _softplus(dot)
                    sn = 1.0 / (1.0 + exp(-dot))
                    for d in range(dim):
                        acc[d] -= sn * tab[ni, d]
                    scale = lr * sn
                    for d in range(dim):
                        tab[ni, d] -= scale * tab[c, d]
                for d in range(dim):
                    tab[c, d] += lr * acc[d]
            if n_pairs > 0:
                losses[epoch] = total / n_pairs
    return losses_arr

# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled collapsed-Gibbs kernels.

Mirror image of ``fairrep._gibbs_py``: identical arithmetic, identical
operation order, identical uniform-draw consumption, so results are
bit-identical between backends (the extension is built with
-ffp-contract=off to rule out FMA contraction).
"""

import numpy as np

cimport numpy as cnp

BACKEND = "c"

ctypedef unsigned long long u64


cdef inline double _unit(u64 key, u64 counter) noexcept nogil:
    cdef u64 x = key + counter * <u64>0x9E3779B97F4A7C15ULL
    x ^= x >> 30
    x *= <u64>0xBF58476D1CE4E5B9ULL
    x ^= x >> 27
    x *= <u64>0x94D049BB133111EBULL
    x ^= x >> 31
    return <double>(x >> 11) * (1.0 / 9007199254740992.0)


def train_sweeps(int[::1] tokens, long long[::1] offsets, int[::1] z,
                 int[:, ::1] n_dk, int[:, ::1] n_kw, int[::1] n_k,
                 double alpha, double beta, int sweeps, key, counter):
    """Run full collapsed-Gibbs sweeps over the corpus, updating in place.

    Returns the advanced draw counter.
    """
    cdef u64 ckey = key
    cdef u64 ccounter = counter
    cdef Py_ssize_t n_docs = offsets.shape[0] - 1
    cdef Py_ssize_t n_topics = n_kw.shape[0]
    cdef Py_ssize_t vocab_size = n_kw.shape[1]
    cdef double vbeta = vocab_size * beta
    cdef double[::1] weights = np.empty(n_topics, dtype=np.float64)

    cdef Py_ssize_t s, d, i, k2
    cdef int w, k, k_new
    cdef double total, val, target, cum

    with nogil:
        for s in range(sweeps):
            for d in range(n_docs):
                for i in range(offsets[d], offsets[d + 1]):
                    w = tokens[i]
                    k = z[i]
                    n_dk[d, k] -= 1
                    n_kw[k, w] -= 1
                    n_k[k] -= 1
                    total = 0.0
                    for k2 in range(n_topics):
                        val = (n_dk[d, k2] + alpha) * (n_kw[k2, w] + beta) / (n_k[k2] + vbeta)
                        weights[k2] = val
                        total += val
                    ccounter += 1
                    target = _unit(ckey, ccounter) * total
                    cum = 0.0
                    k_new = <int>(n_topics - 1)
                    for k2 in range(n_topics):
                        cum += weights[k2]
                        if target < cum:
                            k_new = <int>k2
                            break
                    z[i] = k_new
                    n_dk[d, k_new] += 1
                    n_kw[k_new, w] += 1
                    n_k[k_new] += 1

    return int(ccounter)


def fold_in_sweeps(int[::1] tokens, int[::1] z, int[::1] nd_local,
                   int[:, ::1] n_kw, int[::1] n_k,
                   double alpha, double beta, int sweeps, key, counter):
    """Resample one held-out document with the topic-word table frozen."""
    cdef u64 ckey = key
    cdef u64 ccounter = counter
    cdef Py_ssize_t n_tokens = tokens.shape[0]
    cdef Py_ssize_t n_topics = n_kw.shape[0]
    cdef Py_ssize_t vocab_size = n_kw.shape[1]
    cdef double vbeta = vocab_size * beta
    cdef double[::1] weights = np.empty(n_topics, dtype=np.float64)

    cdef Py_ssize_t s, i, k2
    cdef int w, k, k_new
    cdef double total, val, target, cum

    with nogil:
        for s in range(sweeps):
            for i in range(n_tokens):
                w = tokens[i]
                k = z[i]
                nd_local[k] -= 1
                total = 0.0
                for k2 in range(n_topics):
                    val = (nd_local[k2] + alpha) * (n_kw[k2, w] + beta) / (n_k[k2] + vbeta)
                    weights[k2] = val
                    total += val
                ccounter += 1
                target = _unit(ckey, ccounter) * total
                cum = 0.0
                k_new = <int>(n_topics - 1)
                for k2 in range(n_topics):
                    cum += weights[k2]
                    if target < cum:
                        k_new = <int>k2
                        break
                z[i] = k_new
                nd_local[k_new] += 1

    return int(ccounter)

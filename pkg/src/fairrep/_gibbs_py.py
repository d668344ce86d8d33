"""Pure-Python collapsed-Gibbs kernels (fallback for ``fairrep._gibbs``).

Both kernels implement exactly the same arithmetic, in the same order, as
the compiled extension: integer counts convert exactly to doubles, the
per-topic weights are accumulated left to right, and one uniform draw is
consumed per token per sweep from the keyed counter-based stream defined
in :mod:`fairrep.numcore`.  Given the same inputs the two backends
produce bit-identical assignments, counts, and final draw counters.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0


def _unit(key: int, counter: int) -> float:
    x = (key + counter * _GAMMA) & _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return (x >> 11) * _INV_2_53


def train_sweeps(tokens, offsets, z, n_dk, n_kw, n_k, alpha, beta, sweeps, key, counter):
    """Run full collapsed-Gibbs sweeps over the corpus, updating in place.

    Returns the advanced draw counter so the caller can fast-forward its
    generator past the consumed block.
    """
    n_docs = len(offsets) - 1
    n_topics, vocab_size = n_kw.shape
    vbeta = vocab_size * beta

    tok = tokens.tolist()
    zz = z.tolist()
    offs = offsets.tolist()
    ndk = [row for row in n_dk.tolist()]
    nkw = [row for row in n_kw.tolist()]
    nk = n_k.tolist()
    weights = [0.0] * n_topics

    for _ in range(sweeps):
        for d in range(n_docs):
            row = ndk[d]
            for i in range(offs[d], offs[d + 1]):
                w = tok[i]
                k = zz[i]
                row[k] -= 1
                nkw[k][w] -= 1
                nk[k] -= 1
                total = 0.0
                for k2 in range(n_topics):
                    val = (row[k2] + alpha) * (nkw[k2][w] + beta) / (nk[k2] + vbeta)
                    weights[k2] = val
                    total += val
                counter += 1
                target = _unit(key, counter) * total
                cum = 0.0
                k_new = n_topics - 1
                for k2 in range(n_topics):
                    cum += weights[k2]
                    if target < cum:
                        k_new = k2
                        break
                zz[i] = k_new
                row[k_new] += 1
                nkw[k_new][w] += 1
                nk[k_new] += 1

    z[:] = zz
    n_dk[:] = ndk
    n_kw[:] = nkw
    n_k[:] = nk
    return counter


def fold_in_sweeps(tokens, z, nd_local, n_kw, n_k, alpha, beta, sweeps, key, counter):
    """Resample one held-out document with the topic-word table frozen."""
    n_topics, vocab_size = n_kw.shape
    vbeta = vocab_size * beta

    tok = tokens.tolist()
    zz = z.tolist()
    nd = nd_local.tolist()
    nkw = [row for row in n_kw.tolist()]
    nk = n_k.tolist()
    weights = [0.0] * n_topics

    for _ in range(sweeps):
        for i in range(len(tok)):
            w = tok[i]
            k = zz[i]
            nd[k] -= 1
            total = 0.0
            for k2 in range(n_topics):
                val = (nd[k2] + alpha) * (nkw[k2][w] + beta) / (nk[k2] + vbeta)
                weights[k2] = val
                total += val
            counter += 1
            target = _unit(key, counter) * total
            cum = 0.0
            k_new = n_topics - 1
            for k2 in range(n_topics):
                cum += weights[k2]
                if target < cum:
                    k_new = k2
                    break
            zz[i] = k_new
            nd[k_new] += 1

    z[:] = zz
    nd_local[:] = nd
    return counter

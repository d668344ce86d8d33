"""Collapsed-Gibbs latent Dirichlet allocation and topic vectorization.

The per-token sampling loop lives in a compiled kernel
(``fairrep._gibbs``) with a pure-Python fallback (``fairrep._gibbs_py``)
selected at import; both produce bit-identical results from the same
seed, so which one is active never changes an artifact.  Set
``FAIRREP_GIBBS=py`` or ``=c`` to force a backend.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .notes import Corpus
from .numcore import Rng

_forced = os.environ.get("FAIRREP_GIBBS")
if _forced == "py":
    from . import _gibbs_py as _kernel
elif _forced == "c":
    from . import _gibbs as _kernel
else:
    try:
        from . import _gibbs as _kernel  # type: ignore[no-redef]
    except ImportError:
        from . import _gibbs_py as _kernel  # type: ignore[no-redef]


def gibbs_backend() -> str:
    """Name of the active sampling kernel: "c" or "python"."""
    return _kernel.BACKEND


class EmptyCorpus(ValueError):
    """The corpus has no documents or no tokens."""


class InvalidHyperparameter(ValueError):
    """Topic count or Dirichlet concentrations out of range."""


class UnknownToken(ValueError):
    """A token id falls outside the model vocabulary."""


class NoNotes(ValueError):
    """A patient has no usable tokens to vectorize."""


@dataclass
class TopicModel:
    """Count-table state of a collapsed-Gibbs LDA fit.

    ``doc_topic_counts`` and ``assignments`` describe the training corpus
    and are not persisted; held-out documents are folded in with the
    topic-word table frozen.
    """

    n_topics: int
    alpha: float
    beta: float
    vocab: list[str]
    topic_word_counts: np.ndarray  # (K, V) int32
    topic_totals: np.ndarray  # (K,) int32
    seed: int
    sweeps: int
    doc_topic_counts: np.ndarray | None = None  # (D, K) int32
    assignments: list[np.ndarray] | None = None

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def vocab_index(self) -> dict[str, int]:
        cached = getattr(self, "_vocab_index", None)
        if cached is None:
            cached = {t: i for i, t in enumerate(self.vocab)}
            self._vocab_index = cached
        return cached

    def topic_word_distributions(self) -> np.ndarray:
        """Smoothed point estimates, rows summing to 1."""
        k = self.topic_word_counts + self.beta
        return k / (self.topic_totals[:, None] + self.vocab_size * self.beta)

    def top_words(self, topic: int, n: int = 10) -> list[str]:
        """The n highest-count words of a topic (count desc, id asc)."""
        counts = self.topic_word_counts[topic]
        order = np.lexsort((np.arange(len(counts)), -counts))
        return [self.vocab[i] for i in order[:n]]

    def save(self, path) -> None:
        payload = {
            "schema_version": 1,
            "n_topics": self.n_topics,
            "alpha": self.alpha,
            "beta": self.beta,
            "vocab": self.vocab,
            "topic_word_counts": self.topic_word_counts.ravel().tolist(),
            "topic_totals": self.topic_totals.tolist(),
            "seed": self.seed,
            "sweeps": self.sweeps,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TopicModel":
        with open(path) as fh:
            payload = json.load(fh)
        k, v = payload["n_topics"], len(payload["vocab"])
        return cls(
            n_topics=k,
            alpha=payload["alpha"],
            beta=payload["beta"],
            vocab=payload["vocab"],
            topic_word_counts=np.asarray(
                payload["topic_word_counts"], dtype=np.int32
            ).reshape(k, v),
            topic_totals=np.asarray(payload["topic_totals"], dtype=np.int32),
            seed=payload["seed"],
            sweeps=payload["sweeps"],
        )


def _flatten(docs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.zeros(len(docs) + 1, dtype=np.int64)
    np.cumsum([len(d) for d in docs], out=offsets[1:])
    tokens = (
        np.concatenate(docs).astype(np.int32)
        if offsets[-1] > 0
        else np.zeros(0, dtype=np.int32)
    )
    return tokens, offsets


def lda_fit(
    corpus: Corpus,
    n_topics: int,
    alpha: float | None = None,
    beta: float = 0.01,
    sweeps: int = 200,
    seed: int = 0,
) -> TopicModel:
    """Fit by collapsed Gibbs sampling; deterministic given ``seed``.

    ``alpha`` defaults to 50 / n_topics.  With ``sweeps=0`` the counts are
    exactly those implied by the random initialization.
    """
    if n_topics < 2:
        raise InvalidHyperparameter(f"n_topics must be >= 2, got {n_topics}")
    alpha = 50.0 / n_topics if alpha is None else float(alpha)
    if alpha <= 0 or beta <= 0:
        raise InvalidHyperparameter(f"alpha and beta must be > 0, got {alpha}, {beta}")
    if sweeps < 0:
        raise InvalidHyperparameter(f"sweeps must be >= 0, got {sweeps}")
    if corpus.n_docs == 0 or corpus.n_tokens == 0:
        raise EmptyCorpus("corpus has no tokens")

    n_docs, vocab_size = corpus.n_docs, corpus.vocab_size
    tokens, offsets = _flatten(corpus.docs)
    if tokens.min() < 0 or tokens.max() >= vocab_size:
        raise UnknownToken("token id outside vocabulary")

    rng = Rng(seed)
    z = np.minimum((rng.uniform(len(tokens)) * n_topics).astype(np.int32), n_topics - 1)

    n_dk = np.zeros((n_docs, n_topics), dtype=np.int32)
    n_kw = np.zeros((n_topics, vocab_size), dtype=np.int32)
    n_k = np.zeros(n_topics, dtype=np.int32)
    doc_of = np.repeat(np.arange(n_docs), np.diff(offsets))
    np.add.at(n_dk, (doc_of, z), 1)
    np.add.at(n_kw, (z, tokens), 1)
    np.add.at(n_k, z, 1)

    if sweeps > 0:
        key, start = rng.consume(sweeps * len(tokens))
        end = _kernel.train_sweeps(
            tokens, offsets, z, n_dk, n_kw, n_k, float(alpha), float(beta), sweeps, key, start
        )
        assert end == rng.counter

    assignments = [
        z[offsets[d] : offsets[d + 1]].copy() for d in range(n_docs)
    ]
    return TopicModel(
        n_topics=n_topics,
        alpha=alpha,
        beta=float(beta),
        vocab=list(corpus.vocab),
        topic_word_counts=n_kw,
        topic_totals=n_k,
        seed=seed,
        sweeps=sweeps,
        doc_topic_counts=n_dk,
        assignments=assignments,
    )


def perplexity(model: TopicModel, corpus: Corpus) -> float:
    """exp(-mean log-likelihood per token) under smoothed point estimates.

    Requires the model's doc-topic counts, i.e. the corpus it was fit on
    (fold held-out docs in first).  Lower is better; a model with uniform
    topic-word distributions scores exactly the vocabulary size.
    """
    if model.doc_topic_counts is None:
        raise ValueError("model carries no doc-topic counts; fit it on this corpus first")
    if corpus.n_docs != model.doc_topic_counts.shape[0]:
        raise ValueError("corpus does not match the model's training documents")
    phi = model.topic_word_distributions()
    doc_len = model.doc_topic_counts.sum(axis=1)
    theta = (model.doc_topic_counts + model.alpha) / (
        doc_len[:, None] + model.n_topics * model.alpha
    )
    log_total = 0.0
    n_tokens = 0
    for d, doc in enumerate(corpus.docs):
        if len(doc) == 0:
            continue
        if doc.min() < 0 or doc.max() >= model.vocab_size:
            raise UnknownToken(f"document {d} has a token outside the vocabulary")
        p = theta[d] @ phi[:, doc]
        log_total += float(np.log(p).sum())
        n_tokens += len(doc)
    if n_tokens == 0:
        raise EmptyCorpus("corpus has no tokens")
    return float(np.exp(-log_total / n_tokens))


def lda_infer(
    model: TopicModel, tokens: list[str], sweeps: int = 50, seed: int = 0, rng: Rng | None = None
) -> tuple[np.ndarray, int]:
    """Fold one document in with the topic-word table frozen.

    Unknown tokens are skipped; returns (assignments over known tokens,
    skipped count).  Deterministic given the seed (or the supplied rng's
    state).
    """
    lookup = model.vocab_index()
    ids = []
    skipped = 0
    for t in tokens:
        i = lookup.get(t)
        if i is None:
            skipped += 1
        else:
            ids.append(i)
    ids = np.asarray(ids, dtype=np.int32)
    if len(ids) == 0:
        return np.zeros(0, dtype=np.int32), skipped

    rng = Rng(seed) if rng is None else rng
    z = np.minimum((rng.uniform(len(ids)) * model.n_topics).astype(np.int32), model.n_topics - 1)
    nd_local = np.bincount(z, minlength=model.n_topics).astype(np.int32)
    if sweeps > 0:
        key, start = rng.consume(sweeps * len(ids))
        end = _kernel.fold_in_sweeps(
            ids,
            z,
            nd_local,
            model.topic_word_counts,
            model.topic_totals,
            float(model.alpha),
            float(model.beta),
            sweeps,
            key,
            start,
        )
        assert end == rng.counter
    return z, skipped


def topic_vectorize(
    model: TopicModel, docs: list[list[str]], sweeps: int = 50, seed: int = 0
) -> np.ndarray:
    """Per-patient topic weights: assignment counts over total tokens.

    ``docs`` are all of one patient's notes.  Raises :class:`NoNotes` when
    the patient has no tokens the model knows, mirroring the exclusion of
    note-less patients at integration time.
    """
    rng = Rng(seed)
    counts = np.zeros(model.n_topics, dtype=np.int64)
    total = 0
    for doc in docs:
        z, _ = lda_infer(model, doc, sweeps=sweeps, rng=rng)
        if len(z):
            counts += np.bincount(z, minlength=model.n_topics)
            total += len(z)
    if total == 0:
        raise NoNotes("patient has no tokens in the model vocabulary")
    return counts / total

"""Clinical-note tokenization: negation-scope removal, stopwords, stemming.

The negation heuristic is intentionally small and fully specified so its
behavior is exactly testable: a trigger word erases itself and the tokens
that follow, up to the next sentence break (. ; :) or five tokens,
whichever comes first.  Stemming strips the first matching suffix from a
fixed ordered list, repeated until no suffix applies, so the whole
pipeline is idempotent on its own output.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

NEGATION_TRIGGERS = frozenset({"no", "not", "without", "denies", "denied", "negative"})
NEGATION_WINDOW = 5
SENTENCE_BREAKS = frozenset({".", ";", ":"})
SUFFIXES = ("ation", "tion", "ing", "es", "ed", "s")
STOPWORDS = frozenset(
    """a an and are as at b be been but by c d did do e f for from g h had has have
    he her his i if in into is it its j k l m n o of on or p q r s t than that the
    their them then these they this those to u v w was were which while will with x
    y z""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+|[.;:]")


def stem(token: str) -> str:
    """Strip suffixes from the fixed list until none matches.

    A suffix is only removed when at least three characters remain.  If
    the fully stemmed form collides with a stopword or negation trigger
    the original token is kept; without that guard a second pass over the
    output could re-trigger negation handling.
    """
    out = token
    changed = True
    while changed:
        changed = False
        for suffix in SUFFIXES:
            if out.endswith(suffix):
                if len(out) - len(suffix) >= 3:
                    out = out[: -len(suffix)]
                    changed = True
                break
    if out != token and (out in STOPWORDS or out in NEGATION_TRIGGERS):
        return token
    return out


def preprocess_note(text: str) -> list[str]:
    """Lowercase, tokenize, remove negated spans and stopwords, stem."""
    raw = _TOKEN_RE.findall(text.lower())
    kept: list[str] = []
    i = 0
    while i < len(raw):
        tok = raw[i]
        if tok in SENTENCE_BREAKS:
            i += 1
            continue
        if tok in NEGATION_TRIGGERS:
            i += 1
            dropped = 0
            while i < len(raw) and dropped < NEGATION_WINDOW and raw[i] not in SENTENCE_BREAKS:
                i += 1
                dropped += 1
            continue
        kept.append(tok)
        i += 1
    return [stem(t) for t in kept if t not in STOPWORDS]


@dataclass
class Corpus:
    """Token-id documents over a shared vocabulary, one owner per doc."""

    docs: list[np.ndarray]  # each int32
    vocab: list[str]
    doc_patients: list[str]
    _vocab_index: dict[str, int] = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.docs) != len(self.doc_patients):
            raise ValueError("docs and doc_patients must align")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocabulary has duplicate tokens")
        self._vocab_index = {t: i for i, t in enumerate(self.vocab)}

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def n_tokens(self) -> int:
        return int(sum(len(d) for d in self.docs))

    def token_id(self, token: str) -> int | None:
        return self._vocab_index.get(token)


def build_corpus(notes: list[tuple[str, str]]) -> Corpus:
    """Tokenize (patient_id, text) pairs into a Corpus.

    Vocabulary ids follow first occurrence order.  Documents that end up
    empty after preprocessing are kept (they simply carry no tokens).
    """
    vocab: list[str] = []
    index: dict[str, int] = {}
    docs: list[np.ndarray] = []
    owners: list[str] = []
    for patient_id, text in notes:
        tokens = preprocess_note(text)
        ids = []
        for tok in tokens:
            if tok not in index:
                index[tok] = len(vocab)
                vocab.append(tok)
            ids.append(index[tok])
        docs.append(np.asarray(ids, dtype=np.int32))
        owners.append(str(patient_id))
    return Corpus(docs, vocab, owners)


def read_notes_jsonl(path) -> list[tuple[str, str]]:
    """Read notes from JSONL with one {"patient_id", "text"} object per line."""
    notes = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            try:
                notes.append((str(obj["patient_id"]), str(obj["text"])))
            except KeyError as exc:
                raise ValueError(f"{path}:{line_no}: missing key {exc}") from None
    return notes

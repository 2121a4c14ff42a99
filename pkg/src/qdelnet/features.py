"""Text featurization: tokenizer, embedding lookup table and the fixed-width
concatenation featurizer.

A question with tokens w1..wn becomes the concatenation of the per-word
embedding vectors in order, zero-padded out to `max_words` slots, with the
question's weak annotation appended as the final element. Words missing from
the table map to the zero vector, which is indistinguishable from padding.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParseError
from .linalg import Matrix

if TYPE_CHECKING:  # pragma: no cover
    from .data import Question

__all__ = [
    "EmbeddingTable",
    "FeatureVector",
    "tokenize",
    "load_embeddings",
    "save_embeddings",
    "featurize",
    "featurize_batch",
]

_PUNCT = string.punctuation


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation at token boundaries.

    Tokens that are nothing but punctuation are dropped; interior punctuation
    (e.g. the apostrophe in "don't") survives.
    """
    out = []
    for raw in text.lower().split():
        word = raw.strip(_PUNCT)
        if word:
            out.append(word)
    return out


class EmbeddingTable:
    """Word -> fixed-dimension vector map. Lookups never fail: unknown words
    resolve to the zero vector."""

    def __init__(self, dim: int, entries: Mapping[str, Sequence[float]]):
        if dim < 1:
            raise ConfigError(f"embedding dimension must be positive, got {dim}")
        self._dim = dim
        store: dict[str, np.ndarray] = {}
        for word, vec in entries.items():
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (dim,):
                raise ConfigError(
                    f"embedding for {word!r} has length {v.size}, expected {dim}"
                )
            v = v.copy()
            v.flags.writeable = False
            store[word] = v
        self._entries = store
        oov = np.zeros(dim)
        oov.flags.writeable = False
        self._oov = oov

    @property
    def dim(self) -> int:
        return self._dim

    def vector(self, word: str) -> np.ndarray:
        """Embedding for `word`; the zero vector when the word is unknown."""
        return self._entries.get(word, self._oov)

    def __contains__(self, word: str) -> bool:
        return word in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def words(self) -> Iterable[str]:
        return self._entries.keys()


def load_embeddings(path, expected_dim: int) -> EmbeddingTable:
    """Read a word2vec-style text file: one `word v1 .. v_dim` entry per line.

    An optional first line holding exactly two integer fields (`count dim`)
    is recognized as a header and skipped. Duplicate words keep their first
    occurrence. Malformed lines raise ParseError with the line number.
    """
    entries: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and _is_int(parts[0]) and _is_int(parts[1]):
                continue
            word, comps = parts[0], parts[1:]
            if len(comps) != expected_dim:
                raise ParseError(
                    f"expected {expected_dim} components for {word!r}, got {len(comps)}",
                    line=lineno,
                )
            try:
                vec = np.array([float(c) for c in comps])
            except ValueError:
                raise ParseError(f"non-numeric component in entry {word!r}", line=lineno) from None
            if not np.isfinite(vec).all():
                raise ParseError(f"non-finite component in entry {word!r}", line=lineno)
            if word not in entries:
                entries[word] = vec
    return EmbeddingTable(expected_dim, entries)


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Write the table in word2vec text format with a `count dim` header.
    Components use shortest-roundtrip decimals, so load_embeddings recovers
    the exact same vectors."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for word in table.words():
            vec = table.vector(word)
            fh.write(word + " " + " ".join(repr(v) for v in vec.tolist()) + "\n")


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-length feature vector; the final element is the weak annotation."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def featurize(question: "Question", table: EmbeddingTable, max_words: int) -> FeatureVector:
    """Embed, concatenate and zero-pad one question into a vector of length
    max_words * dim + 1. Questions longer than max_words are truncated."""
    if max_words < 1:
        raise ConfigError(f"max_words must be >= 1, got {max_words}")
    out = np.zeros(max_words * table.dim + 1)
    _fill_row(out, question, table, max_words)
    return FeatureVector(out)


def featurize_batch(questions: Sequence["Question"], table: EmbeddingTable, max_words: int) -> Matrix:
    """Featurize a nonempty batch of questions into a (batch x D) matrix."""
    if max_words < 1:
        raise ConfigError(f"max_words must be >= 1, got {max_words}")
    out = np.zeros((len(questions), max_words * table.dim + 1))
    for row, q in zip(out, questions):
        _fill_row(row, q, table, max_words)
    return Matrix._wrap(out)


def _fill_row(row: np.ndarray, question: "Question", table: EmbeddingTable, max_words: int) -> None:
    dim = table.dim
    for slot, word in enumerate(question.tokens[:max_words]):
        row[slot * dim : (slot + 1) * dim] = table.vector(word)
    row[-1] = question.weak_annotation

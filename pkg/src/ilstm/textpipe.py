"""Question cleaning, tokenization and GloVe embedding lookup."""

from __future__ import annotations

import logging
import re
from collections import Counter
from collections.abc import Collection, Iterable
from os import PathLike

import numpy as np

log = logging.getLogger(__name__)

_DROP = re.compile(r"[^a-z0-9'?]+")


def clean_and_tokenize(raw: str) -> list[str]:
    """Lowercase, turn every character outside ``[a-z0-9'?]`` into a separator,
    give each ``?`` its own token and split on whitespace."""
    text = _DROP.sub(" ", raw.lower())
    return text.replace("?", " ? ").split()


class EmbeddingTable:
    """Frozen word -> vector map.

    Vectors live in one float64 matrix; ``vectors`` is read-only so lookups
    can hand out views without the risk of callers editing the table.
    """

    def __init__(self, words: list[str], vectors: np.ndarray, declared_size: int | None = None):
        vectors = np.array(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(words):
            raise ValueError(f"need one row per word, got {len(words)} words and {vectors.shape} vectors")
        self.index = {w: k for k, w in enumerate(words)}
        if len(self.index) != len(words):
            raise ValueError("duplicate words in embedding table")
        vectors.setflags(write=False)
        self.vectors = vectors
        self.words = list(words)
        self.declared_size = len(words) if declared_size is None else declared_size

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[self.index[word]]


def load_glove(
    path: str | PathLike, vocab: Collection[str] | None = None, dim: int | None = None
) -> EmbeddingTable:
    """Read a GloVe text file (``word v1 ... vE`` per line).

    When ``vocab`` is given only those words are kept; every line is still
    checked for its field count so a truncated file is caught either way.
    ``declared_size`` on the result is the number of entries in the file.
    The vector width is taken from the first line unless ``dim`` is passed.
    """
    rows: dict[str, np.ndarray] = {}
    n_entries = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            n_fields = line.count(" ") + 1
            if dim is None:
                dim = n_fields - 1
                if dim < 1:
                    raise ValueError(f"{path}:{lineno}: no vector values")
            if n_fields != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, found {n_fields - 1}")
            n_entries += 1
            word, rest = line.split(" ", 1)
            if vocab is not None and word not in vocab:
                continue
            try:
                vec = np.array(rest.split(" "), dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: unparsable value ({exc})") from None
            if word in rows:
                log.warning("%s:%d: duplicate word %r, keeping the later vector", path, lineno, word)
            rows[word] = vec
    if n_entries == 0:
        raise ValueError(f"{path}: empty embedding file")
    words = list(rows)
    vectors = np.stack([rows[w] for w in words]) if words else np.zeros((0, dim))
    return EmbeddingTable(words, vectors, declared_size=n_entries)


def embed(table: EmbeddingTable, tokens: Iterable[str], oov: Counter | None = None) -> np.ndarray:
    """Stack token vectors into a ``(T, E)`` array.

    Unknown tokens become zero rows, the same vector used for the padding
    element, and are tallied in ``oov`` when a counter is supplied.
    """
    tokens = list(tokens)
    out = np.zeros((len(tokens), table.dim))
    for t, tok in enumerate(tokens):
        k = table.index.get(tok)
        if k is None:
            if oov is not None:
                oov[tok] += 1
        else:
            out[t] = table.vectors[k]
    return out

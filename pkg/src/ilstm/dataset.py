"""TREC question files, the coarse/fine label taxonomy, splits and batching."""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from .numerics import Rng
from .textpipe import EmbeddingTable, clean_and_tokenize, embed

log = logging.getLogger(__name__)

MAIN_CLASSES = ("ABBR", "DESC", "ENTY", "HUM", "LOC", "NUM")
DISPLAY_NAMES = {
    "ABBR": "abbreviation",
    "DESC": "description",
    "ENTY": "entity",
    "HUM": "human",
    "LOC": "location",
    "NUM": "numeric",
}
N_MAIN = 6
N_FINE = 50


def parse_label(raw: str) -> tuple[str, str]:
    """Split ``MAIN:sub`` into its two non-empty parts."""
    parts = raw.split(":")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise ValueError(f"malformed label {raw!r}: expected exactly one ':' between two names")
    return parts[0], parts[1]


@dataclass(frozen=True)
class LabelTaxonomy:
    """Six main classes and their fine ``MAIN:sub`` labels, both sorted."""

    mains: tuple[str, ...]
    fines: tuple[str, ...]
    fine_to_main: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if list(self.mains) != sorted(set(self.mains)) or list(self.fines) != sorted(set(self.fines)):
            raise ValueError("taxonomy labels must be unique and lexicographically sorted")
        main_index = {m: k for k, m in enumerate(self.mains)}
        mapping = []
        for fine in self.fines:
            main, _ = parse_label(fine)
            if main not in main_index:
                raise ValueError(f"fine label {fine!r} has unknown main class {main!r}")
            mapping.append(main_index[main])
        object.__setattr__(self, "fine_to_main", tuple(mapping))

    @classmethod
    def from_labels(cls, labels: Iterable[str], strict: bool = True) -> LabelTaxonomy:
        """Collect a taxonomy from raw labels.

        With ``strict`` the result must have exactly the six TREC main
        classes and 50 fine labels.
        """
        fines = sorted(set(labels))
        mains = sorted({parse_label(f)[0] for f in fines})
        tax = cls(tuple(mains), tuple(fines))
        if strict:
            if tuple(mains) != MAIN_CLASSES:
                raise ValueError(f"expected main classes {MAIN_CLASSES}, found {tuple(mains)}")
            if len(fines) != N_FINE:
                raise ValueError(f"expected {N_FINE} fine labels, found {len(fines)}")
        return tax

    @property
    def n_main(self) -> int:
        return len(self.mains)

    @property
    def n_fine(self) -> int:
        return len(self.fines)

    def resolve(self, label: str) -> tuple[int, int]:
        """Return ``(main_index, fine_index)`` for a raw label."""
        main, _ = parse_label(label)
        try:
            fine_idx = self.fines.index(label)
        except ValueError:
            raise KeyError(f"label {label!r} is not in the taxonomy") from None
        return self.mains.index(main), fine_idx


@dataclass(frozen=True)
class LabeledQuestion:
    tokens: tuple[str, ...]
    main: int
    fine: int

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a labeled question needs at least one token")


@dataclass(frozen=True)
class Sample:
    """A question ready for a model: its ``(T, E)`` embedding plus targets."""

    xs: np.ndarray
    main: int
    fine: int
    tokens: tuple[str, ...] = ()


@dataclass(frozen=True)
class QASample:
    """Responder training pair: question embedding, conditioning vector and
    answer token ids."""

    xs: np.ndarray
    cond: np.ndarray
    answer: tuple[int, ...]


def _read_text(path: str | PathLike) -> str:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        log.warning("%s is not valid UTF-8, decoding as Latin-1", path)
        return data.decode("latin-1")


def read_trec_labels(path: str | PathLike) -> list[str]:
    return [line.split(None, 1)[0] for line in _read_text(path).splitlines() if line.strip()]


def load_trec(path: str | PathLike, taxonomy: LabelTaxonomy) -> list[LabeledQuestion]:
    """Parse a ``LABEL question text`` file; every non-blank line is one example."""
    out = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(None, 1)
        label = parts[0]
        text = parts[1] if len(parts) > 1 else ""
        try:
            main, fine = taxonomy.resolve(label)
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        tokens = tuple(clean_and_tokenize(text))
        if not tokens:
            raise ValueError(f"{path}:{lineno}: question is empty after cleaning")
        out.append(LabeledQuestion(tokens, main, fine))
    return out


def vocabulary(questions: Iterable[LabeledQuestion]) -> set[str]:
    return {tok for q in questions for tok in q.tokens}


def embed_questions(
    table: EmbeddingTable, questions: Iterable[LabeledQuestion], oov: Counter | None = None
) -> list[Sample]:
    return [Sample(embed(table, q.tokens, oov), q.main, q.fine, q.tokens) for q in questions]


def split_validation(data: Sequence, fraction: float, rng: Rng) -> tuple[list, list]:
    """Seeded split stratified on ``.main``.

    The validation size is ``round(n * fraction)``, shared out across main
    classes by largest remainder so each class is within one example of
    its proportional share.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n_val = int(round(len(data) * fraction))
    if n_val == 0 or n_val == len(data):
        raise ValueError(f"fraction {fraction} leaves one side of a {len(data)}-example split empty")
    by_class: dict[int, list[int]] = {}
    for k, item in enumerate(data):
        by_class.setdefault(item.main, []).append(k)
    classes = sorted(by_class)
    quotas = {c: len(by_class[c]) * n_val / len(data) for c in classes}
    take = {c: int(np.floor(quotas[c])) for c in classes}
    leftover = n_val - sum(take.values())
    for c in sorted(classes, key=lambda c: (-(quotas[c] - take[c]), c))[:leftover]:
        take[c] += 1
    val_idx = set()
    for c in classes:
        idx = np.asarray(by_class[c])
        val_idx.update(int(i) for i in rng.permutation(idx)[: take[c]])
    train = [item for k, item in enumerate(data) if k not in val_idx]
    val = [item for k, item in enumerate(data) if k in val_idx]
    return train, val


def batches(data: Sequence, batch_size: int, rng: Rng) -> Iterator[list]:
    """One epoch of shuffled batches; the last may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = rng.permutation(len(data))
    for start in range(0, len(data), batch_size):
        yield [data[int(k)] for k in order[start : start + batch_size]]


def load_qa(path: str | PathLike) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Read ``question<TAB>answer`` lines into cleaned token pairs."""
    pairs = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        if line.count("\t") != 1:
            raise ValueError(f"{path}:{lineno}: expected 'question<TAB>answer'")
        question, answer = (tuple(clean_and_tokenize(part)) for part in line.split("\t"))
        if not question:
            raise ValueError(f"{path}:{lineno}: question is empty after cleaning")
        pairs.append((question, answer))
    return pairs

"""Triple and entity-description ingestion.

Triples are encoded to integer ids in first-seen order. After all splits are loaded the store builds a filter index
over train, valid and test together with per-relation tails-per-head / heads-per-tail averages used for Bernoulli
negative sampling. A built store is never mutated, so any number of workers may read it concurrently.
"""

from __future__ import annotations

import re
from collections import Counter
from collections.abc import Iterator, Mapping, Sequence
from enum import StrEnum
from pathlib import Path
from typing import Self

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from .exceptions import InputError, ParseError, StatisticsError, VocabularyError
from .logging import get_logger
from .types import IntArray, Triple

logger = get_logger(__name__)

SPLITS = ("train", "valid", "test")


class VocabMode(StrEnum):
    """Whether unseen symbols are registered or rejected."""

    build = "build"
    reuse = "reuse"


class Vocabulary:
    """Bidirectional name <-> id mapping with ids assigned in first-seen order."""

    __slots__ = ("_names", "_index")

    def __init__(self, names: Sequence[str] = ()) -> None:
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        """Return the id of ``name``, registering it if unseen."""
        idx = self._index.get(name)
        if idx is None:
            idx = len(self._names)
            self._index[name] = idx
            self._names.append(name)
        return idx

    def encode(self, name: str, *, instance: str | None = None) -> int:
        """Return the id of a known name."""
        try:
            return self._index[name]
        except KeyError:
            raise VocabularyError(f"Unknown symbol '{name}'", instance=instance, symbol=name) from None

    def decode(self, idx: int) -> str:
        """Return the name registered under ``idx``."""
        return self._names[idx]

    @property
    def names(self) -> tuple[str, ...]:
        """All names in id order."""
        return tuple(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._names == other._names

    def __hash__(self) -> int:
        return hash(tuple(self._names))

    def copy(self) -> Vocabulary:
        """Independent copy that can be extended without touching this vocabulary."""
        return Vocabulary(self._names)

    def dump(self, path: Path) -> None:
        """Write ``id<TAB>name`` lines."""
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for idx, name in enumerate(self._names):
                fh.write(f"{idx}\t{name}\n")

    @classmethod
    def load(cls, path: Path) -> Self:
        """Read a vocabulary written by :meth:`dump`."""
        vocab = cls()
        for lineno, line in enumerate(read_lines(path), start=1):
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0].isdigit():
                raise ParseError("Expected 'id<TAB>name'", instance=f"{path}:{lineno}")
            if int(fields[0]) != vocab.add(fields[1]):
                raise ParseError(f"Vocabulary id {fields[0]} out of order", instance=f"{path}:{lineno}")
        return vocab


class RelationStats(BaseModel):
    """Average tails per head and heads per tail of one relation in the training split."""

    model_config = ConfigDict(frozen=True)

    tph: float = Field(ge=1.0)
    hpt: float = Field(ge=1.0)


def read_lines(path: Path) -> Iterator[str]:
    """Yield lines without their terminator; blank lines come back as ``""`` so numbering stays aligned."""
    if not path.is_file():
        raise InputError(f"File not found: {path}", instance=str(path))
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            yield line if line.strip() else ""


def _empty_triples() -> IntArray:
    return np.empty((0, 3), dtype=np.int64)


class TripleStore:
    """Integer-encoded triples with vocabularies, filter index and relation statistics."""

    def __init__(
        self,
        entities: Vocabulary,
        relations: Vocabulary,
        splits: Mapping[str, IntArray],
    ) -> None:
        self.entities = entities
        self.relations = relations
        self.train: IntArray = splits.get("train", _empty_triples())
        self.valid: IntArray = splits.get("valid", _empty_triples())
        self.test: IntArray = splits.get("test", _empty_triples())
        for arr in (self.train, self.valid, self.test):
            arr.setflags(write=False)

        everything = np.concatenate([self.train, self.valid, self.test])
        self.filter_set: frozenset[Triple] = frozenset((int(h), int(r), int(t)) for h, r, t in everything)
        self._filter_keys: IntArray = np.unique(self.encode_keys(everything))

        tails: dict[tuple[int, int], set[int]] = {}
        heads: dict[tuple[int, int], set[int]] = {}
        rels: dict[tuple[int, int], set[int]] = {}
        for h, r, t in self.filter_set:
            tails.setdefault((h, r), set()).add(t)
            heads.setdefault((r, t), set()).add(h)
            rels.setdefault((h, t), set()).add(r)
        self._known_tails = {k: np.fromiter(sorted(v), dtype=np.int64) for k, v in tails.items()}
        self._known_heads = {k: np.fromiter(sorted(v), dtype=np.int64) for k, v in heads.items()}
        self._known_relations = {k: np.fromiter(sorted(v), dtype=np.int64) for k, v in rels.items()}

        self.rel_stats: dict[int, RelationStats] = _relation_stats(self.train, len(relations))

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> IntArray:
        """Return the encoded triples of ``train``, ``valid`` or ``test``."""
        if name not in SPLITS:
            raise InputError(f"Unknown split '{name}' (expected one of {', '.join(SPLITS)})")
        arr: IntArray = getattr(self, name)
        return arr

    def contains(self, triple: Triple) -> bool:
        """Membership in train ∪ valid ∪ test."""
        return triple in self.filter_set

    def encode_keys(self, triples: IntArray) -> IntArray:
        """Collision-free int64 key per triple."""
        n_ent = max(self.num_entities, 1)
        n_rel = max(self.num_relations, 1)
        keys: IntArray = (triples[:, 0] * n_rel + triples[:, 1]) * n_ent + triples[:, 2]
        return keys

    def contains_many(self, triples: IntArray) -> npt.NDArray[np.bool_]:
        """Row-wise :meth:`contains` for an (n, 3) array."""
        if len(self._filter_keys) == 0:
            return np.zeros(len(triples), dtype=bool)
        keys = self.encode_keys(triples)
        pos = np.minimum(np.searchsorted(self._filter_keys, keys), len(self._filter_keys) - 1)
        found: npt.NDArray[np.bool_] = self._filter_keys[pos] == keys
        return found

    def known_tails(self, h: int, r: int) -> IntArray:
        """Tails t with (h, r, t) in any split."""
        return self._known_tails.get((h, r), _EMPTY_IDS)

    def known_heads(self, r: int, t: int) -> IntArray:
        """Heads h with (h, r, t) in any split."""
        return self._known_heads.get((r, t), _EMPTY_IDS)

    def known_relations(self, h: int, t: int) -> IntArray:
        """Relations r with (h, r, t) in any split."""
        return self._known_relations.get((h, t), _EMPTY_IDS)

    def decode(self, triple: Triple) -> tuple[str, str, str]:
        """Map an encoded triple back to names."""
        h, r, t = triple
        return self.entities.decode(h), self.relations.decode(r), self.entities.decode(t)


_EMPTY_IDS: IntArray = np.empty(0, dtype=np.int64)
_EMPTY_IDS.setflags(write=False)


def _relation_stats(train: IntArray, num_relations: int) -> dict[int, RelationStats]:
    """Per relation: distinct (h, t) pairs divided by distinct heads (tph) and by distinct tails (hpt)."""
    if len(train) == 0:
        return {}
    uniq = np.unique(train, axis=0)
    pairs = np.bincount(uniq[:, 1], minlength=num_relations)
    heads = np.bincount(np.unique(uniq[:, [1, 0]], axis=0)[:, 0], minlength=num_relations)
    tails = np.bincount(np.unique(uniq[:, [1, 2]], axis=0)[:, 0], minlength=num_relations)
    return {
        r: RelationStats(tph=float(pairs[r] / heads[r]), hpt=float(pairs[r] / tails[r]))
        for r in range(num_relations)
        if pairs[r] > 0
    }


def corruption_probability(store: TripleStore, r: int) -> float:
    """Probability of replacing the head of a triple with relation ``r``: tph / (tph + hpt)."""
    stats = store.rel_stats.get(r)
    if stats is None:
        raise StatisticsError(f"Relation {r} has no training occurrences", relation=r)
    return stats.tph / (stats.tph + stats.hpt)


def _parse_triples(
    path: Path, entities: Vocabulary, relations: Vocabulary, vocab_mode: VocabMode
) -> IntArray:
    rows: list[tuple[int, int, int]] = []
    for lineno, line in enumerate(read_lines(path), start=1):
        if not line:
            continue
        fields = line.split("\t")
        instance = f"{path}:{lineno}"
        if len(fields) != 3 or not all(fields):
            raise ParseError(f"Expected 3 tab-separated fields, got {len(fields)}", instance=instance)
        head, rel, tail = fields
        if vocab_mode == VocabMode.build:
            rows.append((entities.add(head), relations.add(rel), entities.add(tail)))
        else:
            rows.append(
                (
                    entities.encode(head, instance=instance),
                    relations.encode(rel, instance=instance),
                    entities.encode(tail, instance=instance),
                )
            )
    if not rows:
        return _empty_triples()
    return np.asarray(rows, dtype=np.int64)


class TripleStoreBuilder:
    """Builder for :class:`TripleStore` with fluent API."""

    def __init__(self) -> None:
        self._entities = Vocabulary()
        self._relations = Vocabulary()
        self._sources: list[tuple[str, Path, VocabMode]] = []

    def with_vocabularies(self, entities: Vocabulary, relations: Vocabulary) -> Self:
        """Start from existing vocabularies (copied, never mutated)."""
        self._entities = entities.copy()
        self._relations = relations.copy()
        return self

    def with_split(self, split: str, path: str | Path, vocab_mode: VocabMode | str = VocabMode.build) -> Self:
        """Register a triple file for ``split``."""
        if split not in SPLITS:
            raise InputError(f"Unknown split '{split}' (expected one of {', '.join(SPLITS)})")
        self._sources.append((split, Path(path), VocabMode(vocab_mode)))
        return self

    def build(self) -> TripleStore:
        """Parse all registered files, then build the filter index and statistics."""
        parsed: dict[str, list[IntArray]] = {}
        for split, path, mode in self._sources:
            parsed.setdefault(split, []).append(_parse_triples(path, self._entities, self._relations, mode))
        splits = {name: np.concatenate(parts) for name, parts in parsed.items()}
        store = TripleStore(self._entities, self._relations, splits)
        logger.info(
            "kg_store.loaded",
            entities=store.num_entities,
            relations=store.num_relations,
            train=len(store.train),
            valid=len(store.valid),
            test=len(store.test),
        )
        return store


def load_triples(
    path: str | Path,
    vocab_mode: VocabMode | str = VocabMode.build,
    *,
    entities: Vocabulary | None = None,
    relations: Vocabulary | None = None,
    split: str = "train",
) -> TripleStore:
    """Load a single triple file as ``split`` of a new store."""
    builder = TripleStoreBuilder()
    if entities is not None or relations is not None:
        builder.with_vocabularies(entities or Vocabulary(), relations or Vocabulary())
    return builder.with_split(split, path, vocab_mode).build()


# Descriptions

_TOKEN_SPLIT = re.compile(r"[\W_]+")


class Tokenizer(BaseModel):
    """Lowercasing bag-of-words tokenizer splitting on non-alphanumeric characters."""

    model_config = ConfigDict(frozen=True)

    min_length: int = Field(default=2, ge=1)
    stop_words: bool = False

    def __call__(self, text: str) -> list[str]:
        tokens = [tok for tok in _TOKEN_SPLIT.split(text.lower()) if len(tok) >= self.min_length]
        if self.stop_words:
            tokens = [tok for tok in tokens if tok not in ENGLISH_STOP_WORDS]
        return tokens


class DescriptionCorpus:
    """Sparse word counts C[e, w] of entity descriptions."""

    def __init__(self, vocab: Vocabulary, counts: sp.csr_matrix, described: frozenset[int]) -> None:
        if counts.shape[1] != len(vocab):
            raise InputError(f"Count matrix has {counts.shape[1]} columns for {len(vocab)} words")
        counts = counts.tocsr()
        counts.eliminate_zeros()
        counts.sort_indices()
        self.vocab = vocab
        self.counts: sp.csr_matrix = counts
        self.described = described

    @property
    def num_entities(self) -> int:
        return int(self.counts.shape[0])

    @property
    def num_words(self) -> int:
        return len(self.vocab)

    @property
    def nnz(self) -> int:
        return int(self.counts.nnz)

    def cells(self) -> tuple[IntArray, IntArray, np.ndarray]:
        """Stored cells as parallel (entity, word, count) arrays in row-major order."""
        coo = self.counts.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.astype(np.float64)

    def row(self, e: int) -> tuple[IntArray, np.ndarray]:
        """Word ids and counts of entity ``e``."""
        start, end = self.counts.indptr[e], self.counts.indptr[e + 1]
        return self.counts.indices[start:end].astype(np.int64), self.counts.data[start:end].astype(np.float64)


def _parse_descriptions(path: Path) -> Iterator[tuple[int, str, str]]:
    for lineno, line in enumerate(read_lines(path), start=1):
        if not line:
            continue
        fields = line.split("\t", 1)
        if len(fields) != 2 or not fields[0]:
            raise ParseError("Expected 'entity<TAB>text'", instance=f"{path}:{lineno}")
        yield lineno, fields[0], fields[1]


def load_descriptions(
    path: str | Path,
    store: TripleStore,
    tokenizer: Tokenizer | None = None,
    min_count: int = 5,
    *,
    skip_unknown: bool = False,
) -> DescriptionCorpus:
    """Build the count matrix of entity descriptions against the store's entity vocabulary.

    Words with total corpus frequency below ``min_count`` are dropped. An entity whose every word is dropped is
    still marked as described, with an empty row. Unknown entities raise unless ``skip_unknown`` is set.
    """
    path = Path(path)
    tokenizer = tokenizer or Tokenizer()
    docs: list[tuple[int, list[str]]] = []
    skipped = 0
    for lineno, name, text in _parse_descriptions(path):
        if name not in store.entities:
            if skip_unknown:
                skipped += 1
                continue
            raise VocabularyError(f"Unknown entity '{name}'", instance=f"{path}:{lineno}", symbol=name)
        docs.append((store.entities.encode(name), tokenizer(text)))

    frequency = Counter(tok for _, tokens in docs for tok in tokens)
    vocab = Vocabulary()
    for _, tokens in docs:
        for tok in tokens:
            if frequency[tok] >= min_count:
                vocab.add(tok)

    rows: list[int] = []
    cols: list[int] = []
    for e, tokens in docs:
        for tok in tokens:
            if tok in vocab:
                rows.append(e)
                cols.append(vocab.encode(tok))
    counts = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(store.num_entities, len(vocab)),
    )
    counts.sum_duplicates()
    corpus = DescriptionCorpus(vocab, counts, frozenset(e for e, _ in docs))
    logger.info(
        "kg_store.descriptions.loaded",
        path=str(path),
        described=len(corpus.described),
        words=corpus.num_words,
        cells=corpus.nnz,
        skipped_unknown=skipped,
        dropped_words=sum(1 for tok in frequency if frequency[tok] < min_count),
    )
    return corpus


class ZeroShotDescriptions:
    """Count rows of entities outside the training graph, encoded against a frozen word vocabulary."""

    def __init__(self, names: Vocabulary, counts: sp.csr_matrix) -> None:
        self.names = names
        self.counts = counts.tocsr()

    def row(self, idx: int) -> tuple[IntArray, np.ndarray]:
        """Word ids and counts of the ``idx``-th zero-shot entity."""
        start, end = self.counts.indptr[idx], self.counts.indptr[idx + 1]
        return self.counts.indices[start:end].astype(np.int64), self.counts.data[start:end].astype(np.float64)


def encode_descriptions(
    path: str | Path, vocab: Vocabulary, tokenizer: Tokenizer | None = None
) -> ZeroShotDescriptions:
    """Encode a description file against ``vocab``; out-of-vocabulary words are dropped."""
    path = Path(path)
    tokenizer = tokenizer or Tokenizer()
    names = Vocabulary()
    rows: list[int] = []
    cols: list[int] = []
    for _, name, text in _parse_descriptions(path):
        idx = names.add(name)
        for tok in tokenizer(text):
            if tok in vocab:
                rows.append(idx)
                cols.append(vocab.encode(tok))
    counts = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(names), len(vocab)),
    )
    counts.sum_duplicates()
    return ZeroShotDescriptions(names, counts)

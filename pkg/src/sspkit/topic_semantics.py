"""NMF topic model over entity descriptions and the semantic composition used for projection.

The topic loss sums ``(C[e, w] - s_e . w)^2`` over stored (nonzero) cells only. Both factor matrices stay
elementwise nonnegative: every gradient step is followed by a clamp at zero. Semantic vectors are never
renormalized; only compositions are.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Self

import numpy as np

from .exceptions import ConfigurationError, DegenerateInputError, FoldInError, ShapeError
from .kg_store import DescriptionCorpus
from .logging import get_logger
from .matrix_io import read_blocks, write_blocks
from .scheduler import map_shards
from .types import FloatArray, IntArray

logger = get_logger(__name__)


class SemanticModel:
    """Entity semantic vectors and word topic vectors of a shared dimension."""

    def __init__(self, entity_sem: FloatArray, word_topics: FloatArray) -> None:
        if entity_sem.ndim != 2 or word_topics.ndim != 2 or entity_sem.shape[1] != word_topics.shape[1]:
            raise ShapeError(f"Incompatible factor shapes {entity_sem.shape} and {word_topics.shape}")
        self.entity_sem: FloatArray = np.ascontiguousarray(entity_sem, dtype=np.float64)
        self.word_topics: FloatArray = np.ascontiguousarray(word_topics, dtype=np.float64)

    @property
    def dim(self) -> int:
        return int(self.entity_sem.shape[1])

    @property
    def num_entities(self) -> int:
        return int(self.entity_sem.shape[0])

    @property
    def num_words(self) -> int:
        return int(self.word_topics.shape[0])

    def copy(self) -> SemanticModel:
        return SemanticModel(self.entity_sem.copy(), self.word_topics.copy())

    def min_entry(self) -> float:
        """Smallest entry over both factors (0.0 for an empty model)."""
        values = [float(m.min()) for m in (self.entity_sem, self.word_topics) if m.size]
        return min(values, default=0.0)

    def save(self, path: Path) -> None:
        """Write header ``dim entities words``, then entity rows, then word rows."""
        write_blocks(path, self.dim, self.entity_sem, self.word_topics)

    @classmethod
    def load(cls, path: Path) -> Self:
        _, (entity_sem, word_topics) = read_blocks(path, 2)
        return cls(entity_sem, word_topics)


def uniform_vector(dim: int) -> FloatArray:
    """The maximally uninformative semantic vector (1/d, ..., 1/d)."""
    return np.full(dim, 1.0 / dim)


def _check_aligned(model: SemanticModel, corpus: DescriptionCorpus) -> None:
    if model.num_entities != corpus.num_entities or model.num_words != corpus.num_words:
        raise ShapeError(
            f"Model covers {model.num_entities} entities x {model.num_words} words, "
            f"corpus has {corpus.num_entities} x {corpus.num_words}"
        )


def topic_loss(model: SemanticModel, corpus: DescriptionCorpus) -> float:
    """Sum of squared residuals over the stored cells of the count matrix."""
    _check_aligned(model, corpus)
    rows, cols, counts = corpus.cells()
    predicted = np.einsum("ij,ij->i", model.entity_sem[rows], model.word_topics[cols])
    return float(np.sum((counts - predicted) ** 2))


def _cell_step(
    entity_sem: FloatArray,
    word_topics: FloatArray,
    rows: IntArray,
    cols: IntArray,
    counts: FloatArray,
    rate: float,
) -> None:
    """Apply one projected gradient step for a batch of cells, gradients taken at the pre-step point."""
    s = entity_sem[rows]
    w = word_topics[cols]
    residual = counts - np.einsum("ij,ij->i", s, w)
    step = (2.0 * rate * residual)[:, None]
    np.add.at(entity_sem, rows, step * w)
    np.add.at(word_topics, cols, step * s)
    entity_sem[rows] = np.maximum(entity_sem[rows], 0.0)
    word_topics[cols] = np.maximum(word_topics[cols], 0.0)


def topic_sgd_step(model: SemanticModel, cell: tuple[int, int, float], rate: float) -> SemanticModel:
    """Update ``s_e`` and ``w`` in place along the negative gradient of ``(C - s_e . w)^2``, then clamp at zero."""
    if rate <= 0:
        raise ConfigurationError(f"Learning rate must be positive (got {rate})")
    e, w, count = cell
    _cell_step(
        model.entity_sem,
        model.word_topics,
        np.array([e], dtype=np.int64),
        np.array([w], dtype=np.int64),
        np.array([count], dtype=np.float64),
        rate,
    )
    return model


def topic_pass(
    model: SemanticModel,
    rows: IntArray,
    cols: IntArray,
    counts: FloatArray,
    rate: float,
    *,
    batch: int = 1,
) -> None:
    """Visit the given cells in order, ``batch`` cells per projected step."""
    for start in range(0, len(rows), batch):
        sl = slice(start, start + batch)
        _cell_step(model.entity_sem, model.word_topics, rows[sl], cols[sl], counts[sl], rate)


def initial_model(corpus: DescriptionCorpus, dim: int, rng: np.random.Generator) -> SemanticModel:
    """Factors uniform in (0, 1/sqrt(d)]; entities without stored cells get the uniform vector."""
    high = 1.0 / np.sqrt(dim)
    entity_sem = high - rng.uniform(0.0, high, size=(corpus.num_entities, dim))
    word_topics = high - rng.uniform(0.0, high, size=(corpus.num_words, dim))
    empty = np.diff(corpus.counts.indptr) == 0
    entity_sem[empty] = uniform_vector(dim)
    return SemanticModel(entity_sem, word_topics)


def pretrain_nmf(
    corpus: DescriptionCorpus,
    dim: int,
    epochs: int,
    rate: float,
    seed: int,
    *,
    batch: int = 1,
    workers: int = 1,
    on_epoch: Callable[[int, float], None] | None = None,
) -> SemanticModel:
    """Factorize the count matrix by projected SGD over shuffled cells.

    Deterministic for a fixed seed when ``workers == 1``. With more workers each epoch's cells are sharded by
    entity and updated concurrently without locks; word rows may interleave, so results vary run to run.
    ``on_epoch`` receives the epoch number and the topic loss after it.
    """
    if epochs < 1:
        raise ConfigurationError(f"NMF pre-training needs at least one epoch (got {epochs})")
    if corpus.nnz == 0:
        raise ConfigurationError("Cannot pre-train a topic model on an empty corpus")
    if rate <= 0:
        raise ConfigurationError(f"Learning rate must be positive (got {rate})")

    rng = np.random.default_rng(seed)
    model = initial_model(corpus, dim, rng)
    rows, cols, counts = corpus.cells()
    initial = topic_loss(model, corpus)

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(rows))
        if workers > 1:
            owner = rows[order] % workers
            shards = [order[owner == k] for k in range(workers)]

            def run_shard(parts: Sequence[IntArray]) -> None:
                for idx in parts:
                    topic_pass(model, rows[idx], cols[idx], counts[idx], rate, batch=batch)

            map_shards(run_shard, shards, workers)
        else:
            topic_pass(model, rows[order], cols[order], counts[order], rate, batch=batch)
        loss = topic_loss(model, corpus)
        logger.debug("topic_semantics.nmf.epoch", epoch=epoch, loss=loss)
        if on_epoch is not None:
            on_epoch(epoch, loss)

    logger.info("topic_semantics.nmf.complete", epochs=epochs, initial_loss=initial, loss=topic_loss(model, corpus))
    return model


def compose_topics(s_h: FloatArray, s_t: FloatArray) -> FloatArray:
    """Additive composition scaled onto the simplex, e.g. (0.1, 0.9, 0) + (0.8, 0, 0.2) -> (0.45, 0.45, 0.1)."""
    total = np.asarray(s_h, dtype=np.float64) + np.asarray(s_t, dtype=np.float64)
    mass = total.sum()
    if not mass > 0.0:
        raise DegenerateInputError("Semantic composition of two zero vectors is undefined")
    result: FloatArray = total / mass
    return result


def normal_vector(s_h: FloatArray, s_t: FloatArray) -> FloatArray:
    """Additive composition scaled to unit Euclidean length: the hyperplane normal used for projection."""
    total = np.asarray(s_h, dtype=np.float64) + np.asarray(s_t, dtype=np.float64)
    norm = np.linalg.norm(total)
    if not norm > 0.0:
        raise DegenerateInputError("Semantic composition of two zero vectors is undefined")
    result: FloatArray = total / norm
    return result


def normal_vectors(s_h: FloatArray, s_t: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Row-wise :func:`normal_vector` plus the pre-normalization norms.

    Rows whose composition is zero fall back to the normalized uniform vector; their norm is reported as 0.
    """
    total = s_h + s_t
    norms = np.linalg.norm(total, axis=-1)
    safe = np.where(norms > 0.0, norms, 1.0)
    normals = total / safe[..., None]
    degenerate = norms == 0.0
    if np.any(degenerate):
        normals[degenerate] = 1.0 / np.sqrt(total.shape[-1])
    return normals, norms


def row_loss(s_e: FloatArray, word_ids: IntArray, counts: FloatArray, word_topics: FloatArray) -> float:
    """Topic loss restricted to one description row."""
    residual = counts - word_topics[word_ids] @ s_e
    return float(residual @ residual)


def fold_in(
    word_ids: IntArray,
    counts: FloatArray,
    model: SemanticModel,
    epochs: int,
    rate: float,
    *,
    seed: int = 0,
) -> FloatArray:
    """Infer a semantic vector for an unseen description against frozen word topics.

    Starts from the uniform vector and runs projected SGD on ``s_e`` alone; ``model`` is never written.
    """
    if len(word_ids) == 0:
        raise FoldInError("Description has no in-vocabulary words")
    if rate <= 0:
        raise ConfigurationError(f"Learning rate must be positive (got {rate})")
    s = uniform_vector(model.dim)
    words = model.word_topics[word_ids]
    values = np.asarray(counts, dtype=np.float64)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        for k in rng.permutation(len(word_ids)):
            residual = values[k] - s @ words[k]
            s = np.maximum(s + 2.0 * rate * residual * words[k], 0.0)
    return s

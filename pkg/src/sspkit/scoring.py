"""Loss vector, hyperplane projection and the TransE / SSP score functions with analytic gradients.

For a triple with loss vector ``e = h + r - t`` and unit normal ``s``::

    f = -lam * ||e - (s.e) s||^2 + ||e||^2

Smaller is more plausible. With ``lam = 0`` the score is the TransE score ``||e||^2``. The normal comes from
:func:`sspkit.topic_semantics.normal_vector`; projection checks the unit-length contract instead of repairing it.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple, Self

import numpy as np

from .exceptions import ContractViolationError, ShapeError
from .matrix_io import read_blocks, write_blocks
from .schemas import ScoreParams, TrainingMode
from .topic_semantics import SemanticModel, normal_vectors
from .types import FloatArray, IntArray

UNIT_TOLERANCE = 1e-9


class EmbeddingTable:
    """Dense entity and relation vectors."""

    def __init__(self, entity_vecs: FloatArray, relation_vecs: FloatArray) -> None:
        if entity_vecs.ndim != 2 or relation_vecs.ndim != 2 or entity_vecs.shape[1] != relation_vecs.shape[1]:
            raise ShapeError(f"Incompatible embedding shapes {entity_vecs.shape} and {relation_vecs.shape}")
        self.entity_vecs: FloatArray = np.ascontiguousarray(entity_vecs, dtype=np.float64)
        self.relation_vecs: FloatArray = np.ascontiguousarray(relation_vecs, dtype=np.float64)

    @property
    def dim(self) -> int:
        return int(self.entity_vecs.shape[1])

    def copy(self) -> EmbeddingTable:
        return EmbeddingTable(self.entity_vecs.copy(), self.relation_vecs.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.entity_vecs).all() and np.isfinite(self.relation_vecs).all())

    def save(self, path: Path) -> None:
        """Write header ``dim entities relations``, then entity rows, then relation rows."""
        write_blocks(path, self.dim, self.entity_vecs, self.relation_vecs)

    @classmethod
    def load(cls, path: Path) -> Self:
        _, (entity_vecs, relation_vecs) = read_blocks(path, 2)
        return cls(entity_vecs, relation_vecs)


def _check_dims(*vectors: FloatArray) -> None:
    shapes = {np.shape(v) for v in vectors}
    if len(shapes) != 1:
        raise ShapeError(f"Vector shapes differ: {sorted(shapes)}")


def loss_vector(h: FloatArray, r: FloatArray, t: FloatArray) -> FloatArray:
    """``h + r - t``."""
    _check_dims(h, r, t)
    e: FloatArray = np.asarray(h, dtype=np.float64) + r - t
    return e


def project_onto_hyperplane(e: FloatArray, s: FloatArray) -> FloatArray:
    """Component of ``e`` inside the hyperplane with unit normal ``s``: ``e - (s.e) s``."""
    _check_dims(e, s)
    norm = float(np.linalg.norm(s))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise ContractViolationError(f"Hyperplane normal must have unit length (got {norm!r})")
    projected: FloatArray = e - (s @ e) * s
    return projected


def transe_score(h: FloatArray, r: FloatArray, t: FloatArray) -> float:
    """``||h + r - t||^2``."""
    e = loss_vector(h, r, t)
    return float(e @ e)


def ssp_score(h: FloatArray, r: FloatArray, t: FloatArray, s: FloatArray, params: ScoreParams) -> float:
    """``-lam ||e - (s.e) s||^2 + ||e||^2`` with ``e = h + r - t``."""
    e = loss_vector(h, r, t)
    p = project_onto_hyperplane(e, s)
    return float(-params.lam * (p @ p) + e @ e)


class ScoreGradients(NamedTuple):
    """Partial derivatives of a score with respect to each input."""

    h: FloatArray
    r: FloatArray
    t: FloatArray
    s_h: FloatArray
    s_t: FloatArray


class BatchScores(NamedTuple):
    """Scores of a batch with gradients w.r.t. the loss vector and the (unnormalized) composition."""

    scores: FloatArray
    grad_e: FloatArray
    grad_sem: FloatArray | None


def batch_scores(
    e: FloatArray,
    sem_h: FloatArray | None,
    sem_t: FloatArray | None,
    lam: float,
    *,
    with_sem_grad: bool = False,
) -> BatchScores:
    """Vectorized score and gradients for rows of loss vectors.

    ``d f / d e = 2 e - 2 lam p`` where ``p`` is the in-plane component. Through ``s = u / ||u||`` with
    ``u = s_h + s_t`` the semantic gradient is ``2 lam (s.e) p / ||u||`` for both ``s_h`` and ``s_t``; rows whose
    composition is zero get no semantic gradient.
    """
    ee = np.einsum("ij,ij->i", e, e)
    if sem_h is None or sem_t is None:
        return BatchScores(ee, 2.0 * e, None)
    s, norms = normal_vectors(sem_h, sem_t)
    se = np.einsum("ij,ij->i", s, e)
    p = e - se[:, None] * s
    pp = np.einsum("ij,ij->i", p, p)
    scores = -lam * pp + ee
    grad_e = 2.0 * e - 2.0 * lam * p
    grad_sem = None
    if with_sem_grad:
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0.0)
        grad_sem = (2.0 * lam * se * inv)[:, None] * p
    return BatchScores(scores, grad_e, grad_sem)


def ssp_gradients(
    h: FloatArray,
    r: FloatArray,
    t: FloatArray,
    s_h: FloatArray,
    s_t: FloatArray,
    params: ScoreParams,
    mode: TrainingMode = TrainingMode.standard,
) -> ScoreGradients:
    """Analytic gradients of ``ssp_score(h, r, t, normal_vector(s_h, s_t))``.

    Semantic gradients are exactly zero in standard mode.
    """
    _check_dims(h, r, t, s_h, s_t)
    joint = mode == TrainingMode.joint
    e = loss_vector(h, r, t)[None, :]
    out = batch_scores(e, np.asarray(s_h)[None, :], np.asarray(s_t)[None, :], params.lam, with_sem_grad=joint)
    g = out.grad_e[0]
    g_sem = out.grad_sem[0] if out.grad_sem is not None else np.zeros_like(g)
    return ScoreGradients(h=g, r=g.copy(), t=-g, s_h=g_sem, s_t=g_sem.copy())


class TripleScorer:
    """Scores candidate completions against fixed parameters.

    ``semantics=None`` selects the TransE score. Instances only read the arrays they hold.
    """

    def __init__(self, embeddings: EmbeddingTable, semantics: SemanticModel | None, params: ScoreParams) -> None:
        if semantics is not None and semantics.dim != embeddings.dim:
            raise ShapeError(f"Semantic dimension {semantics.dim} differs from embedding dimension {embeddings.dim}")
        self.embeddings = embeddings
        self.semantics = semantics
        self.params = params

    @property
    def num_entities(self) -> int:
        return int(self.embeddings.entity_vecs.shape[0])

    @property
    def num_relations(self) -> int:
        return int(self.embeddings.relation_vecs.shape[0])

    def score_triples(self, heads: IntArray, rels: IntArray, tails: IntArray) -> FloatArray:
        """Scores of the triples given by three aligned id arrays."""
        ent = self.embeddings.entity_vecs
        e = ent[heads] + self.embeddings.relation_vecs[rels] - ent[tails]
        if self.semantics is None:
            return batch_scores(e, None, None, 0.0).scores
        sem = self.semantics.entity_sem
        return batch_scores(e, sem[heads], sem[tails], self.params.lam).scores

    def score(self, h: int, r: int, t: int) -> float:
        return float(self.score_triples(np.array([h]), np.array([r]), np.array([t]))[0])

    def score_tails(self, h: int, r: int) -> FloatArray:
        """Scores of ``(h, r, c)`` for every entity ``c``."""
        cands = np.arange(self.num_entities)
        return self.score_triples(np.full_like(cands, h), np.full_like(cands, r), cands)

    def score_heads(self, r: int, t: int) -> FloatArray:
        """Scores of ``(c, r, t)`` for every entity ``c``."""
        cands = np.arange(self.num_entities)
        return self.score_triples(cands, np.full_like(cands, r), np.full_like(cands, t))

    def score_relations(self, h: int, t: int) -> FloatArray:
        """Scores of ``(h, c, t)`` for every relation ``c``."""
        cands = np.arange(self.num_relations)
        return self.score_triples(np.full_like(cands, h), cands, np.full_like(cands, t))

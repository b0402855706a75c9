"""Negative sampling, margin-ranking hinge loss and the SGD loop over the embedding and topic objectives.

Each epoch visits the training triples in shuffled order, pairs every positive with a Bernoulli-corrupted negative
and, where the hinge ``max(margin + f(pos) - f(neg), 0)`` is active, steps the touched embeddings along its negative
subgradient. In joint mode the semantic vectors of the four involved entities receive the gradient that flows
through the normalized composition, and a pass of topic SGD (rate scaled by ``mu``) follows the embedding pass.

All randomness derives from ``config.seed``. With ``workers == 1`` training is bit-for-bit reproducible.
"""

from __future__ import annotations

import csv
import sys
import time
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import NamedTuple

import numpy as np
from tqdm import tqdm

from .exceptions import ConfigurationError, SamplingError, ShapeError, TrainingDivergedError
from .kg_store import DescriptionCorpus, TripleStore
from .logging import get_logger
from .scheduler import map_shards
from .schemas import EpochReport, ModelKind, TrainConfig, TrainingMode
from .scoring import EmbeddingTable, batch_scores
from .topic_semantics import SemanticModel, pretrain_nmf, topic_loss, topic_pass
from .types import FloatArray, IntArray, Triple

logger = get_logger(__name__)


class TrainState:
    """Parameters under training plus per-round loss history."""

    def __init__(
        self,
        embeddings: EmbeddingTable,
        semantics: SemanticModel | None,
        round_no: int = 0,
        embed_losses: Sequence[float] = (),
        topic_losses: Sequence[float] = (),
    ) -> None:
        if semantics is not None and semantics.num_entities != len(embeddings.entity_vecs):
            raise ShapeError(
                f"Semantic model covers {semantics.num_entities} entities, "
                f"embeddings cover {len(embeddings.entity_vecs)}"
            )
        self.embeddings = embeddings
        self.semantics = semantics
        self.round = round_no
        self.embed_losses: list[float] = list(embed_losses)
        self.topic_losses: list[float] = list(topic_losses)

    @property
    def dim(self) -> int:
        return self.embeddings.dim

    def copy(self) -> TrainState:
        return TrainState(
            self.embeddings.copy(),
            self.semantics.copy() if self.semantics is not None else None,
            self.round,
            self.embed_losses,
            self.topic_losses,
        )

    def is_finite(self) -> bool:
        """True when no parameter is NaN or infinite."""
        if not self.embeddings.is_finite():
            return False
        if self.semantics is None:
            return True
        return bool(np.isfinite(self.semantics.entity_sem).all() and np.isfinite(self.semantics.word_topics).all())


class SeedStreams(NamedTuple):
    """Independent random streams spawned from one seed."""

    init: np.random.Generator
    nmf: int
    train: np.random.Generator


def seed_streams(seed: int) -> SeedStreams:
    """Spawn the initialization, NMF and training streams of ``seed``."""
    init_seq, nmf_seq, train_seq = np.random.SeedSequence(seed).spawn(3)
    return SeedStreams(
        init=np.random.default_rng(init_seq),
        nmf=int(nmf_seq.generate_state(1)[0]),
        train=np.random.default_rng(train_seq),
    )


def init_params(store: TripleStore, corpus: DescriptionCorpus | None, config: TrainConfig) -> TrainState:
    """Uniform fan-based embeddings in ±sqrt(6 / 2d) and NMF pre-trained semantics for the ssp model."""
    streams = seed_streams(config.seed)
    bound = float(np.sqrt(6.0 / (2 * config.dim)))
    entity_vecs = streams.init.uniform(-bound, bound, size=(store.num_entities, config.dim))
    relation_vecs = streams.init.uniform(-bound, bound, size=(store.num_relations, config.dim))
    embeddings = EmbeddingTable(entity_vecs, relation_vecs)

    if config.model == ModelKind.transe:
        return TrainState(embeddings, None)
    if corpus is None or corpus.nnz == 0:
        raise ConfigurationError("The ssp model needs a non-empty description corpus")
    if corpus.num_entities != store.num_entities:
        raise ShapeError(f"Corpus covers {corpus.num_entities} entities, store has {store.num_entities}")
    semantics = pretrain_nmf(
        corpus,
        config.dim,
        config.nmf_epochs,
        config.nmf_rate,
        streams.nmf,
        batch=config.batch,
        workers=config.workers,
    )
    return TrainState(embeddings, semantics)


class NegativeSampler:
    """Vectorized Bernoulli corruption with rejection against the filter index.

    Each retry redraws the corrupted slot and its replacement for the rows still pending.
    """

    def __init__(self, store: TripleStore, rel_corrupt_frac: float = 0.0, retry_budget: int = 100) -> None:
        self.store = store
        self.rel_corrupt_frac = rel_corrupt_frac
        self.retry_budget = retry_budget
        self.head_prob: FloatArray = np.full(store.num_relations, 0.5)
        for r, stats in store.rel_stats.items():
            self.head_prob[r] = stats.tph / (stats.tph + stats.hpt)

    def sample(self, triples: IntArray, rng: np.random.Generator) -> tuple[IntArray, np.ndarray]:
        """Corrupt every row of ``triples``; returns the negatives and a mask of rows that found one."""
        n_ent = self.store.num_entities
        n_rel = self.store.num_relations
        negatives = triples.copy()
        found = np.zeros(len(triples), dtype=bool)
        pending = np.arange(len(triples))
        for _ in range(self.retry_budget):
            if len(pending) == 0:
                break
            cand = triples[pending].copy()
            m = len(pending)
            corrupt_rel = np.zeros(m, dtype=bool)
            if self.rel_corrupt_frac > 0.0:
                corrupt_rel = (rng.random(m) < self.rel_corrupt_frac) & (n_rel > 1)
                # uniform over the other relations
                draw = rng.integers(0, max(n_rel - 1, 1), size=m)
                other = draw + (draw >= cand[:, 1])
                cand[corrupt_rel, 1] = other[corrupt_rel]
            corrupt_head = rng.random(m) < self.head_prob[cand[:, 1]]
            replacement = rng.integers(0, n_ent, size=m)
            head_rows = ~corrupt_rel & corrupt_head
            tail_rows = ~corrupt_rel & ~corrupt_head
            cand[head_rows, 0] = replacement[head_rows]
            cand[tail_rows, 2] = replacement[tail_rows]

            valid = ~self.store.contains_many(cand)
            negatives[pending[valid]] = cand[valid]
            found[pending[valid]] = True
            pending = pending[~valid]
        return negatives, found


def sample_negative(
    store: TripleStore,
    triple: Triple,
    rng: np.random.Generator,
    *,
    rel_corrupt_frac: float = 0.0,
    retry_budget: int = 100,
) -> Triple:
    """Corrupt one triple so that the result is absent from train, valid and test."""
    sampler = NegativeSampler(store, rel_corrupt_frac, retry_budget)
    negatives, found = sampler.sample(np.asarray([triple], dtype=np.int64), rng)
    if not found[0]:
        raise SamplingError(f"No valid negative for {triple} after {retry_budget} draws", triple=list(triple))
    h, r, t = (int(v) for v in negatives[0])
    return h, r, t


def hinge_loss(f_pos: float, f_neg: float, margin: float) -> float:
    """``max(margin + f_pos - f_neg, 0)``; smaller scores are more plausible."""
    if margin <= 0:
        raise ConfigurationError(f"Margin must be positive (got {margin})")
    return max(margin + f_pos - f_neg, 0.0)


def _renormalize(vecs: FloatArray, rows: IntArray) -> None:
    rows = np.unique(rows)
    norms = np.linalg.norm(vecs[rows], axis=1)
    over = norms > 1.0
    vecs[rows[over]] /= norms[over, None]


def _sgd_batch(
    state: TrainState,
    pos: IntArray,
    neg: IntArray,
    config: TrainConfig,
    round_no: int,
) -> float:
    """One update from the summed subgradients of a batch, all taken at the pre-update parameters."""
    ent = state.embeddings.entity_vecs
    rel = state.embeddings.relation_vecs
    sem = state.semantics.entity_sem if state.semantics is not None else None
    joint = config.mode == TrainingMode.joint
    lam = config.score_params.lam

    e_pos = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
    e_neg = ent[neg[:, 0]] + rel[neg[:, 1]] - ent[neg[:, 2]]
    if sem is None:
        sp = batch_scores(e_pos, None, None, 0.0)
        sn = batch_scores(e_neg, None, None, 0.0)
    else:
        sp = batch_scores(e_pos, sem[pos[:, 0]], sem[pos[:, 2]], lam, with_sem_grad=joint)
        sn = batch_scores(e_neg, sem[neg[:, 0]], sem[neg[:, 2]], lam, with_sem_grad=joint)

    losses = config.margin + sp.scores - sn.scores
    if not np.isfinite(losses).all():
        bad = int(np.flatnonzero(~np.isfinite(losses))[0])
        raise TrainingDivergedError(
            f"Non-finite loss in round {round_no}",
            round=round_no,
            triple=[int(v) for v in pos[bad]],
        )
    active = losses > 0.0
    if not active.any():
        return 0.0

    step = config.rate
    p, n = pos[active], neg[active]
    gp, gn = step * sp.grad_e[active], step * sn.grad_e[active]
    np.add.at(ent, p[:, 0], -gp)
    np.add.at(rel, p[:, 1], -gp)
    np.add.at(ent, p[:, 2], gp)
    np.add.at(ent, n[:, 0], gn)
    np.add.at(rel, n[:, 1], gn)
    np.add.at(ent, n[:, 2], -gn)

    touched = np.concatenate([p[:, 0], p[:, 2], n[:, 0], n[:, 2]])
    if sem is not None and sp.grad_sem is not None and sn.grad_sem is not None:
        sp_sem, sn_sem = step * sp.grad_sem[active], step * sn.grad_sem[active]
        np.add.at(sem, p[:, 0], -sp_sem)
        np.add.at(sem, p[:, 2], -sp_sem)
        np.add.at(sem, n[:, 0], sn_sem)
        np.add.at(sem, n[:, 2], sn_sem)
        sem[touched] = np.maximum(sem[touched], 0.0)
    if config.normalize_entities:
        _renormalize(ent, touched)

    if not np.isfinite(ent[touched]).all():
        bad_rows = ~np.isfinite(ent[p[:, 0]]).all(axis=1) | ~np.isfinite(ent[p[:, 2]]).all(axis=1)
        culprit = p[int(np.argmax(bad_rows))]
        raise TrainingDivergedError(
            f"Non-finite embedding in round {round_no}",
            round=round_no,
            triple=[int(v) for v in culprit],
        )
    return float(losses[active].sum())


def _embedding_pass(
    state: TrainState,
    pos: IntArray,
    neg: IntArray,
    config: TrainConfig,
    round_no: int,
) -> float:
    total = 0.0
    for start in range(0, len(pos), config.batch):
        sl = slice(start, start + config.batch)
        total += _sgd_batch(state, pos[sl], neg[sl], config, round_no)
    return total


def train_epoch(
    state: TrainState,
    store: TripleStore,
    corpus: DescriptionCorpus | None,
    config: TrainConfig,
    rng: np.random.Generator,
    sampler: NegativeSampler | None = None,
) -> EpochReport:
    """Run one round over the training split and update ``state`` in place.

    Positives whose negative could not be drawn within the retry budget are skipped and counted.
    Standard mode never writes the semantic model.
    """
    started = time.perf_counter()
    round_no = state.round + 1
    sampler = sampler or NegativeSampler(store, config.rel_corrupt_frac, config.retry_budget)

    positives = store.train[rng.permutation(len(store.train))]
    if config.negatives > 1:
        positives = np.repeat(positives, config.negatives, axis=0)
    negatives, found = sampler.sample(positives, rng)
    skipped = int((~found).sum())
    if skipped:
        logger.warning("trainer.sample.exhausted", round=round_no, skipped=skipped, retry_budget=config.retry_budget)
    pos, neg = positives[found], negatives[found]

    if config.workers > 1 and len(pos) > 1:

        def run_shard(part: Sequence[int]) -> float:
            idx = np.asarray(part, dtype=np.int64)
            return _embedding_pass(state, pos[idx], neg[idx], config, round_no)

        total = sum(map_shards(run_shard, range(len(pos)), config.workers))
    else:
        total = _embedding_pass(state, pos, neg, config, round_no)

    t_loss = 0.0
    if config.mode == TrainingMode.joint and state.semantics is not None and corpus is not None:
        if config.mu > 0.0 and corpus.nnz:
            rows, cols, counts = corpus.cells()
            pick = rng.integers(0, len(rows), size=len(store.train))
            rate = config.rate * config.mu
            topic_pass(state.semantics, rows[pick], cols[pick], counts[pick], rate, batch=config.batch)
        t_loss = topic_loss(state.semantics, corpus)

    if not state.is_finite():
        raise TrainingDivergedError(f"Non-finite parameters after round {round_no}", round=round_no)

    state.round = round_no
    embed_loss = total / len(pos) if len(pos) else 0.0
    state.embed_losses.append(embed_loss)
    state.topic_losses.append(t_loss)
    report = EpochReport(
        round=round_no,
        embed_loss=embed_loss,
        topic_loss=t_loss,
        skipped=skipped,
        seconds=time.perf_counter() - started,
    )
    logger.debug("trainer.epoch.complete", **report.model_dump())
    return report


class TrainResult(NamedTuple):
    """Outcome of :func:`train`."""

    state: TrainState
    trajectory: list[EpochReport]
    stopped_early: bool


def train(
    store: TripleStore,
    corpus: DescriptionCorpus | None,
    config: TrainConfig,
    *,
    on_checkpoint: Callable[[TrainState], None] | None = None,
    validator: Callable[[TrainState], float] | None = None,
    progress: bool = False,
) -> TrainResult:
    """Initialize, then run ``config.rounds`` epochs.

    ``on_checkpoint`` is called every ``config.checkpoint_every`` rounds and after the last one. With
    ``config.early_stopping`` the ``validator`` (higher is better) is evaluated at those boundaries; after
    ``config.patience`` evaluations without improvement training stops and the best state is returned.
    """
    if config.rounds < 1:
        raise ConfigurationError(f"Training needs at least one round (got {config.rounds})")
    if len(store.train) == 0:
        raise ConfigurationError("Training split is empty")
    if config.early_stopping and validator is None:
        raise ConfigurationError("Early stopping needs a validation callback")

    state = init_params(store, corpus, config)
    rng = seed_streams(config.seed).train
    sampler = NegativeSampler(store, config.rel_corrupt_frac, config.retry_budget)
    trajectory: list[EpochReport] = []
    best_score = -np.inf
    best_state: TrainState | None = None
    stale = 0
    stopped_early = False

    logger.info(
        "trainer.started",
        model=config.model,
        mode=config.mode,
        rounds=config.rounds,
        triples=len(store.train),
        workers=config.workers,
    )
    for round_no in tqdm(range(1, config.rounds + 1), desc="train", file=sys.stderr, disable=not progress):
        report = train_epoch(state, store, corpus, config, rng, sampler)
        trajectory.append(report)
        if round_no % config.checkpoint_every != 0 and round_no != config.rounds:
            continue

        logger.info("trainer.checkpoint", round=round_no, embed_loss=report.embed_loss, topic_loss=report.topic_loss)
        if on_checkpoint is not None:
            on_checkpoint(state)
        if config.early_stopping and validator is not None:
            score = validator(state)
            logger.info("trainer.validation", round=round_no, score=score, best=best_score)
            if score > best_score:
                best_score, best_state, stale = score, state.copy(), 0
            else:
                stale += 1
                if stale >= config.patience:
                    stopped_early = True
                    break

    if stopped_early and best_state is not None:
        logger.info("trainer.stopped_early", round=state.round, best_round=best_state.round, best=best_score)
        state = best_state
    logger.info("trainer.complete", round=state.round, seconds=sum(r.seconds for r in trajectory))
    return TrainResult(state, trajectory, stopped_early)


def write_trajectory(path: Path, trajectory: Sequence[EpochReport]) -> None:
    """Write ``round,embed_loss,topic_loss`` rows."""
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["round", "embed_loss", "topic_loss"])
        for report in trajectory:
            writer.writerow([report.round, repr(report.embed_loss), repr(report.topic_loss)])

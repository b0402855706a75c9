"""Link and relation prediction under the raw and filtered ranking protocols.

A query replaces one slot of a test triple with every candidate and ranks the true completion by score in
ascending order. Ties count in the true completion's favour unless ``pessimistic`` is set. The filtered rank
discards competitors that are themselves known triples of any split.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

from ..exceptions import ConfigurationError
from ..kg_store import TripleStore
from ..logging import get_logger
from ..scheduler import map_shards
from ..schemas import EvalReport, MetricSummary, RankResult, RankTarget
from ..scoring import TripleScorer
from ..types import FloatArray, IntArray, Triple

logger = get_logger(__name__)

HITS_AT = 10
ENTITY_TARGETS = (RankTarget.head, RankTarget.tail)


def _ranks(scores: FloatArray, true_id: int, known: IntArray, pessimistic: bool) -> tuple[int, int]:
    gold = scores[true_id]
    ahead = scores <= gold if pessimistic else scores < gold
    ahead[true_id] = False
    raw = 1 + int(ahead.sum())
    others = known[known != true_id]
    filtered = raw - int(ahead[others].sum())
    return raw, filtered


def rank_triple(
    scorer: TripleScorer,
    store: TripleStore,
    triple: Triple,
    target: RankTarget,
    *,
    pessimistic: bool = False,
) -> RankResult:
    """Raw and filtered rank of ``triple`` when its ``target`` slot is replaced by every candidate."""
    h, r, t = (int(v) for v in triple)
    match RankTarget(target):
        case RankTarget.head:
            scores, true_id, known = scorer.score_heads(r, t), h, store.known_heads(r, t)
        case RankTarget.tail:
            scores, true_id, known = scorer.score_tails(h, r), t, store.known_tails(h, r)
        case RankTarget.relation:
            scores, true_id, known = scorer.score_relations(h, t), r, store.known_relations(h, t)
    raw, filtered = _ranks(scores, true_id, known, pessimistic)
    return RankResult(triple=(h, r, t), target=target, raw_rank=raw, filtered_rank=filtered)


def rank_split(
    scorer: TripleScorer,
    store: TripleStore,
    split: str,
    targets: Sequence[RankTarget],
    *,
    workers: int = 1,
    pessimistic: bool = False,
) -> list[RankResult]:
    """Rank every triple of ``split`` for each target, in split order then target order."""
    triples = store.split(split)
    if len(triples) == 0:
        raise ConfigurationError(f"Split '{split}' is empty")
    queries = [((int(h), int(r), int(t)), target) for h, r, t in triples for target in targets]

    def run_shard(part: Sequence[tuple[Triple, RankTarget]]) -> list[RankResult]:
        return [rank_triple(scorer, store, triple, target, pessimistic=pessimistic) for triple, target in part]

    results = [res for chunk in map_shards(run_shard, queries, workers) for res in chunk]
    logger.info("evalsuite.rank.complete", split=split, queries=len(results), workers=workers)
    return results


def summarize(results: Iterable[RankResult]) -> MetricSummary:
    """Mean Rank and HITS@10 (percent) of a group of results."""
    items = list(results)
    if not items:
        raise ConfigurationError("Cannot summarize an empty set of ranks")
    raw = np.array([r.raw_rank for r in items], dtype=np.float64)
    filtered = np.array([r.filtered_rank for r in items], dtype=np.float64)
    return MetricSummary(
        count=len(items),
        mean_rank_raw=float(raw.mean()),
        mean_rank_filtered=float(filtered.mean()),
        hits10_raw=float(100.0 * np.mean(raw <= HITS_AT)),
        hits10_filtered=float(100.0 * np.mean(filtered <= HITS_AT)),
    )


def build_report(split: str, results: list[RankResult]) -> EvalReport:
    """Pool all results and break them down by target."""
    breakdown = {}
    for target in RankTarget:
        group = [r for r in results if r.target == target]
        if group:
            breakdown[target] = summarize(group)
    return EvalReport(split=split, overall=summarize(results), breakdown=breakdown, results=results)


def link_prediction(
    scorer: TripleScorer,
    store: TripleStore,
    split: str = "test",
    *,
    workers: int = 1,
    pessimistic: bool = False,
) -> EvalReport:
    """Head and tail prediction over ``split``."""
    results = rank_split(scorer, store, split, ENTITY_TARGETS, workers=workers, pessimistic=pessimistic)
    return build_report(split, results)


def relation_prediction(
    scorer: TripleScorer,
    store: TripleStore,
    split: str = "test",
    *,
    workers: int = 1,
    pessimistic: bool = False,
) -> EvalReport:
    """Relation prediction over ``split``."""
    results = rank_split(scorer, store, split, (RankTarget.relation,), workers=workers, pessimistic=pessimistic)
    return build_report(split, results)

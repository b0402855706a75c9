"""Diagnostics comparing a baseline model with a second model.

Covers rank-pair counts, the biggest rank improvements and score differences on pairs the baseline gets wrong.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..exceptions import InputError
from ..kg_store import TripleStore
from ..logging import get_logger
from ..scheduler import map_shards
from ..schemas import HistogramBin, RankImprovement, RankPairCell, RankResult, RankTarget, ScoreDiffHistogram
from ..scoring import TripleScorer
from ..types import Triple

logger = get_logger(__name__)

DEFAULT_THRESHOLDS_A = (500, 1000, 2000, 3000, 5000)
DEFAULT_THRESHOLD_B = 100

type HardPair = tuple[Triple, Triple]


def _aligned(results_a: Sequence[RankResult], results_b: Sequence[RankResult]) -> None:
    keys_a = [(r.triple, r.target) for r in results_a]
    keys_b = [(r.triple, r.target) for r in results_b]
    if keys_a != keys_b:
        raise InputError(f"Rank results cover different queries ({len(keys_a)} vs {len(keys_b)})")


def _rank(result: RankResult, filtered: bool) -> int:
    return result.filtered_rank if filtered else result.raw_rank


def rank_pair_statistics(
    results_a: Sequence[RankResult],
    results_b: Sequence[RankResult],
    thresholds_a: Sequence[int] = DEFAULT_THRESHOLDS_A,
    threshold_b: int = DEFAULT_THRESHOLD_B,
    *,
    filtered: bool = False,
) -> list[RankPairCell]:
    """For each ``m`` count queries ranked at ``m`` or worse by A and within ``threshold_b`` by B."""
    _aligned(results_a, results_b)
    ranks_a = np.array([_rank(r, filtered) for r in results_a], dtype=np.int64)
    ranks_b = np.array([_rank(r, filtered) for r in results_b], dtype=np.int64)
    close_b = ranks_b <= threshold_b
    return [
        RankPairCell(threshold_a=m, threshold_b=threshold_b, count=int(np.sum((ranks_a >= m) & close_b)))
        for m in thresholds_a
    ]


def rank_improvements(
    results_a: Sequence[RankResult],
    results_b: Sequence[RankResult],
    top: int = 20,
    *,
    filtered: bool = False,
) -> list[RankImprovement]:
    """The ``top`` queries whose rank drops the most from A to B, largest drop first."""
    _aligned(results_a, results_b)
    moved = [
        RankImprovement(triple=a.triple, target=a.target, rank_a=_rank(a, filtered), rank_b=_rank(b, filtered))
        for a, b in zip(results_a, results_b, strict=True)
        if _rank(b, filtered) < _rank(a, filtered)
    ]
    moved.sort(key=lambda m: (m.rank_b - m.rank_a, m.triple, m.target.value))
    return moved[:top]


def _hard_pair(baseline: TripleScorer, store: TripleStore, triple: Triple) -> HardPair | None:
    h, r, t = triple
    golden = baseline.score(h, r, t)
    best: tuple[float, Triple] | None = None
    for target in (RankTarget.head, RankTarget.tail):
        if target == RankTarget.head:
            scores, known = baseline.score_heads(r, t), store.known_heads(r, t)
        else:
            scores, known = baseline.score_tails(h, r), store.known_tails(h, r)
        eligible = scores <= golden
        eligible[known] = False
        if not eligible.any():
            continue
        masked = np.where(eligible, scores, -np.inf)
        cand = int(np.argmax(masked))
        if best is None or masked[cand] > best[0]:
            negative = (cand, r, t) if target == RankTarget.head else (h, r, cand)
            best = (float(masked[cand]), negative)
    return (triple, best[1]) if best is not None else None


def select_hard_pairs(
    baseline: TripleScorer,
    store: TripleStore,
    split: str = "test",
    *,
    workers: int = 1,
) -> list[HardPair]:
    """Pair each triple of ``split`` with its hardest unknown corruption under the baseline.

    The chosen corruption scores closest to, but not worse than, the golden triple, with head and tail corruptions
    pooled. Triples with no such corruption are left out.
    """
    triples = [(int(h), int(r), int(t)) for h, r, t in store.split(split)]

    def run_shard(part: Sequence[Triple]) -> list[HardPair]:
        return [pair for triple in part if (pair := _hard_pair(baseline, store, triple)) is not None]

    pairs = [pair for chunk in map_shards(run_shard, triples, workers) for pair in chunk] if triples else []
    logger.info("evalsuite.hard_pairs.selected", split=split, triples=len(triples), pairs=len(pairs))
    return pairs


def score_difference_histogram(
    pairs: Sequence[HardPair],
    scorer: TripleScorer,
    bin_width: float = 0.5,
) -> ScoreDiffHistogram:
    """``f(negative) - f(golden)`` per pair, binned into ``[k * w, (k + 1) * w)`` intervals."""
    if not pairs:
        raise InputError("No golden/negative pairs to compare")
    if bin_width <= 0:
        raise InputError(f"Bin width must be positive (got {bin_width})")
    golden = np.array([g for g, _ in pairs], dtype=np.int64)
    negative = np.array([n for _, n in pairs], dtype=np.int64)
    diffs = scorer.score_triples(negative[:, 0], negative[:, 1], negative[:, 2]) - scorer.score_triples(
        golden[:, 0], golden[:, 1], golden[:, 2]
    )
    slots = np.floor(diffs / bin_width).astype(np.int64)
    lo = int(slots.min())
    counts = np.bincount(slots - lo)
    bins = [
        HistogramBin(left=(lo + k) * bin_width, right=(lo + k + 1) * bin_width, count=int(c))
        for k, c in enumerate(counts)
    ]
    histogram = ScoreDiffHistogram(differences=diffs.tolist(), bins=bins)
    logger.info("evalsuite.score_difference.complete", pairs=len(pairs), success_rate=histogram.success_rate)
    return histogram

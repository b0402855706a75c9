"""CSV writers and plain-text tables for evaluation results."""

from __future__ import annotations

import csv
from collections.abc import Iterable, Sequence
from pathlib import Path

from ..kg_store import TripleStore
from ..schemas import ClassificationReport, EvalReport, MetricSummary, RankImprovement, RankPairCell, ScoreDiffHistogram


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _metric_rows(target: str, summary: MetricSummary) -> list[tuple[str, str, str, str]]:
    return [
        ("mean_rank", target, "raw", _fmt(summary.mean_rank_raw)),
        ("mean_rank", target, "filtered", _fmt(summary.mean_rank_filtered)),
        ("hits10", target, "raw", _fmt(summary.hits10_raw)),
        ("hits10", target, "filtered", _fmt(summary.hits10_filtered)),
    ]


def write_eval_report(path: Path, report: EvalReport) -> None:
    """``metric,target,setting,value`` rows: pooled results first, then each target."""
    rows = _metric_rows("all", report.overall)
    for target, summary in report.breakdown.items():
        rows.extend(_metric_rows(target.value, summary))
    _write_rows(path, ("metric", "target", "setting", "value"), rows)


def format_eval_table(report: EvalReport) -> str:
    lines = [
        f"{'target':<10} {'count':>7} {'MR raw':>10} {'MR filt':>10} {'H@10 raw':>9} {'H@10 filt':>9}",
    ]
    groups = [("all", report.overall), *((t.value, s) for t, s in report.breakdown.items())]
    for name, s in groups:
        lines.append(
            f"{name:<10} {s.count:>7} {s.mean_rank_raw:>10.1f} {s.mean_rank_filtered:>10.1f} "
            f"{s.hits10_raw:>9.2f} {s.hits10_filtered:>9.2f}"
        )
    return "\n".join(lines)


def write_classification_report(path: Path, report: ClassificationReport, setting: str) -> None:
    """Same four-column layout as :func:`write_eval_report`, with ``setting`` naming the feature blocks."""
    rows = [
        ("map", "types", setting, _fmt(report.map)),
        ("entities", "types", setting, str(report.entities)),
        ("excluded", "types", setting, str(report.excluded)),
        ("zero_shot", "types", setting, str(report.zero_shot)),
    ]
    _write_rows(path, ("metric", "target", "setting", "value"), rows)


def format_classification_table(report: ClassificationReport, setting: str) -> str:
    return (
        f"MAP ({setting}): {report.map:.2f}  entities={report.entities} "
        f"zero_shot={report.zero_shot} excluded={report.excluded}"
    )


def write_rank_pairs(path: Path, cells: Sequence[RankPairCell]) -> None:
    _write_rows(path, ("threshold_a", "threshold_b", "count"), ((c.threshold_a, c.threshold_b, c.count) for c in cells))


def format_rank_pairs(cells: Sequence[RankPairCell]) -> str:
    return "\n".join(f"rank_a >= {c.threshold_a:>5}, rank_b <= {c.threshold_b}: {c.count}" for c in cells)


def write_histogram(path: Path, histogram: ScoreDiffHistogram) -> None:
    """``bin_left,bin_right,count`` rows."""
    rows = ((repr(b.left), repr(b.right), b.count) for b in histogram.bins)
    _write_rows(path, ("bin_left", "bin_right", "count"), rows)


def write_improvements(path: Path, improvements: Sequence[RankImprovement], store: TripleStore) -> None:
    """Decoded triples with both ranks: ``head,relation,tail,target,rank_a,rank_b``."""
    _write_rows(
        path,
        ("head", "relation", "tail", "target", "rank_a", "rank_b"),
        ((*store.decode(m.triple), m.target.value, m.rank_a, m.rank_b) for m in improvements),
    )

"""``sspkit`` command line: prepare data, train, evaluate and compare models.

Every command writes its machine-readable results to files under ``--out`` (plus short tables on stdout), logs to
stderr and records a ``manifest.json``. Failures print an RFC 9457 problem document to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from collections.abc import Callable, Sequence
from datetime import datetime, timezone
from pathlib import Path

from .config import config_hash, load_config, load_eval_config, with_overrides
from .evalsuite.analysis import rank_improvements, rank_pair_statistics, score_difference_histogram, select_hard_pairs
from .evalsuite.classification import classify_entities, load_typed_entities
from .evalsuite.ranking import ENTITY_TARGETS, link_prediction, rank_split, relation_prediction
from .evalsuite.reports import (
    format_classification_table,
    format_eval_table,
    format_rank_pairs,
    write_classification_report,
    write_eval_report,
    write_histogram,
    write_improvements,
    write_rank_pairs,
)
from .exceptions import ConfigurationError, ErrorType, SspkitError
from .kg_store import SPLITS, Tokenizer, TripleStoreBuilder, encode_descriptions, load_descriptions
from .logging import add_run_context, configure_logging, get_logger, reset_run_context
from .repository import Checkpoint, CheckpointRepository, PreparedData, PreparedRepository, file_digest, write_manifest
from .schemas import FeatureBlocks, ModelKind, PrepManifest, ProblemDetail, RunManifest, TrainConfig, TrainingMode
from .scoring import TripleScorer
from .trainer import TrainState, train, write_trajectory

logger = get_logger(__name__)

MODEL_FLAGS: dict[str, tuple[ModelKind, TrainingMode]] = {
    "transe": (ModelKind.transe, TrainingMode.standard),
    "ssp-std": (ModelKind.ssp, TrainingMode.standard),
    "ssp-joint": (ModelKind.ssp, TrainingMode.joint),
}

type Handler = Callable[[argparse.Namespace, RunManifest], int]


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _input_digests(root: Path) -> dict[str, str]:
    return {
        f"{root.name}/{p.name}": file_digest(p)
        for p in sorted(root.iterdir())
        if p.is_file() and p.name != "manifest.json"
    }


def _scorer(ckpt: Checkpoint) -> TripleScorer:
    return TripleScorer(ckpt.state.embeddings, ckpt.state.semantics, ckpt.config.score_params)


TOKENIZER_KEYS = ("min_count", "stop_words")


def _tokenizer_settings(args: argparse.Namespace) -> tuple[int, bool]:
    """Tokenizer settings for prep: flags win over the config file, which wins over the defaults."""
    config = load_config(args.config) if args.config else TrainConfig()
    min_count = args.min_count if args.min_count is not None else config.min_count
    stop_words = args.stop_words if args.stop_words is not None else config.stop_words
    return min_count, stop_words


def _match_prepared(config: TrainConfig, prepared: PrepManifest, config_path: str) -> TrainConfig:
    """Check tokenizer keys set in the config against prep.json and copy the prepared values into the config."""
    for key in TOKENIZER_KEYS:
        if key in config.model_fields_set and getattr(config, key) != getattr(prepared, key):
            raise ConfigurationError(
                f"Config sets {key}={getattr(config, key)} but the data was prepared with {getattr(prepared, key)}",
                instance=config_path,
            )
    return with_overrides(config, min_count=prepared.min_count, stop_words=prepared.stop_words)


def _load_evaluation(args: argparse.Namespace, manifest: RunManifest) -> tuple[PreparedData, Checkpoint]:
    prepared = PreparedRepository(args.prepared)
    data = prepared.load()
    ckpt = CheckpointRepository(args.checkpoint).load_for(prepared, data.store)
    manifest.digests.update(_input_digests(Path(args.prepared)))
    manifest.digests.update(_input_digests(Path(args.checkpoint)))
    manifest.config = ckpt.config.model_dump(mode="json", by_alias=True)
    manifest.seed = ckpt.config.seed
    return data, ckpt


# Commands


def cmd_prep(args: argparse.Namespace, manifest: RunManifest) -> int:
    """Encode triples and descriptions into a prepared directory."""
    out = _out_dir(args)
    started = time.perf_counter()
    builder = TripleStoreBuilder()
    inputs: dict[str, Path] = {}
    for split in SPLITS:
        path = Path(getattr(args, split))
        builder.with_split(split, path)
        inputs[split] = path
    store = builder.build()

    corpus = None
    min_count, stop_words = _tokenizer_settings(args)
    tokenizer = Tokenizer(stop_words=stop_words)
    if args.descriptions:
        inputs["descriptions"] = Path(args.descriptions)
        corpus = load_descriptions(
            args.descriptions, store, tokenizer, min_count, skip_unknown=args.skip_unknown
        )

    repo = PreparedRepository(out).with_inputs(inputs, min_count=min_count, stop_words=stop_words)
    manifest.digests.update(repo.inputs)
    repo.save(PreparedData(store, corpus))
    summary = repo.manifest().summary
    for key, value in summary.model_dump().items():
        print(f"{key}: {value}")
    manifest.timings["prep"] = time.perf_counter() - started
    manifest.artifacts["prepared"] = str(out)
    return 0


def cmd_train(args: argparse.Namespace, manifest: RunManifest) -> int:
    """Train one model on a prepared directory."""
    kind, mode = MODEL_FLAGS[args.model]
    config = load_config(args.config, model=kind, mode=mode, seed=args.seed, workers=args.workers)
    prepared = PreparedRepository(args.prepared)
    data = prepared.load()
    config = _match_prepared(config, prepared.manifest(), args.config)
    if kind == ModelKind.ssp and data.corpus is None:
        raise ConfigurationError(
            f"--model {args.model} needs descriptions in the prepared data", instance=args.prepared
        )

    out = _out_dir(args)
    prep_digest = prepared.prep_digest()
    manifest.seed = config.seed
    manifest.config = config.model_dump(mode="json", by_alias=True)
    manifest.digests.update(_input_digests(Path(args.prepared)))
    manifest.digests[f"config/{Path(args.config).name}"] = file_digest(Path(args.config))
    manifest.digests["config_hash"] = config_hash(config)
    write_manifest(out / "manifest.json", manifest)
    add_run_context(model=args.model)

    def save_round(state: TrainState) -> None:
        path = CheckpointRepository(out / "rounds" / f"{state.round:06d}").save(Checkpoint(state, config, prep_digest))
        manifest.artifacts[f"round_{state.round}"] = str(path)

    def validate(state: TrainState) -> float:
        scorer = TripleScorer(state.embeddings, state.semantics, config.score_params)
        report = link_prediction(scorer, data.store, "valid", workers=config.workers)
        return report.overall.hits10_filtered

    started = time.perf_counter()
    result = train(
        data.store,
        data.corpus,
        config,
        on_checkpoint=save_round,
        validator=validate if config.early_stopping else None,
        progress=sys.stderr.isatty(),
    )
    final = CheckpointRepository(out / "checkpoint").save(Checkpoint(result.state, config, prep_digest))
    write_trajectory(out / "trajectory.csv", result.trajectory)

    manifest.artifacts["checkpoint"] = str(final)
    manifest.artifacts["trajectory"] = str(out / "trajectory.csv")
    manifest.timings["rounds"] = sum(r.seconds for r in result.trajectory)
    manifest.timings["train"] = time.perf_counter() - started
    print(f"round: {result.state.round}")
    print(f"embed_loss: {result.trajectory[-1].embed_loss:.6f}")
    if result.stopped_early:
        print("stopped_early: true")
    return 0


def _cmd_rank(args: argparse.Namespace, manifest: RunManifest, relation: bool) -> int:
    out = _out_dir(args)
    data, ckpt = _load_evaluation(args, manifest)
    evaluate = relation_prediction if relation else link_prediction
    started = time.perf_counter()
    report = evaluate(_scorer(ckpt), data.store, args.split, workers=args.workers, pessimistic=args.pessimistic)
    manifest.timings["evaluate"] = time.perf_counter() - started
    write_eval_report(out / "report.csv", report)
    manifest.artifacts["report"] = str(out / "report.csv")
    print(format_eval_table(report))
    return 0


def cmd_eval_link(args: argparse.Namespace, manifest: RunManifest) -> int:
    """Head and tail prediction."""
    return _cmd_rank(args, manifest, relation=False)


def cmd_eval_rel(args: argparse.Namespace, manifest: RunManifest) -> int:
    """Relation prediction."""
    return _cmd_rank(args, manifest, relation=True)


def cmd_eval_class(args: argparse.Namespace, manifest: RunManifest) -> int:
    """Entity type classification, optionally with zero-shot entities."""
    out = _out_dir(args)
    data, ckpt = _load_evaluation(args, manifest)
    eval_config = load_eval_config(args.config)
    typed = load_typed_entities(args.labels_train, args.labels_test)
    manifest.digests["labels_train"] = file_digest(Path(args.labels_train))
    manifest.digests["labels_test"] = file_digest(Path(args.labels_test))

    blocks = FeatureBlocks(args.features)
    if ckpt.config.model == ModelKind.transe and blocks != FeatureBlocks.embedding:
        logger.info("cli.features.forced", requested=blocks, used=FeatureBlocks.embedding)
        blocks = FeatureBlocks.embedding

    zero_shot = None
    if args.zero_shot_desc:
        if data.corpus is None:
            raise ConfigurationError("Zero-shot classification needs prepared descriptions", instance=args.prepared)
        stop_words = PreparedRepository(args.prepared).manifest().stop_words
        zero_shot = encode_descriptions(args.zero_shot_desc, data.corpus.vocab, Tokenizer(stop_words=stop_words))
        manifest.digests["zero_shot_desc"] = file_digest(Path(args.zero_shot_desc))

    started = time.perf_counter()
    report = classify_entities(ckpt.state, data.store, typed, eval_config, blocks, zero_shot)
    manifest.timings["classify"] = time.perf_counter() - started
    write_classification_report(out / "report.csv", report, blocks.value)
    manifest.artifacts["report"] = str(out / "report.csv")
    print(format_classification_table(report, blocks.value))
    return 0


def cmd_analyze(args: argparse.Namespace, manifest: RunManifest) -> int:
    """Compare checkpoint A (baseline) with checkpoint B."""
    out = _out_dir(args)
    prepared = PreparedRepository(args.prepared)
    data = prepared.load()
    store = data.store
    ckpt_a = CheckpointRepository(args.checkpoint_a).load_for(prepared, store)
    ckpt_b = CheckpointRepository(args.checkpoint_b).load_for(prepared, store)
    for root in (args.prepared, args.checkpoint_a, args.checkpoint_b):
        manifest.digests.update(_input_digests(Path(root)))
    scorer_a, scorer_b = _scorer(ckpt_a), _scorer(ckpt_b)
    started = time.perf_counter()

    if args.analysis == "scorediff":
        pairs = select_hard_pairs(scorer_a, store, args.split, workers=args.workers)
        histogram = score_difference_histogram(pairs, scorer_b, args.bin_width)
        write_histogram(out / "histogram.csv", histogram)
        manifest.artifacts["histogram"] = str(out / "histogram.csv")
        print(f"success_rate,{histogram.success_rate!r}")
    else:
        results_a = rank_split(scorer_a, store, args.split, ENTITY_TARGETS, workers=args.workers)
        results_b = rank_split(scorer_b, store, args.split, ENTITY_TARGETS, workers=args.workers)
        if args.analysis == "rankpairs":
            cells = rank_pair_statistics(results_a, results_b)
            write_rank_pairs(out / "rankpairs.csv", cells)
            manifest.artifacts["rankpairs"] = str(out / "rankpairs.csv")
            print(format_rank_pairs(cells))
        else:
            moved = rank_improvements(results_a, results_b, args.top)
            write_improvements(out / "improvements.csv", moved, store)
            manifest.artifacts["improvements"] = str(out / "improvements.csv")
            for m in moved:
                h, r, t = store.decode(m.triple)
                print(f"{h}\t{r}\t{t}\t{m.target.value}\t{m.rank_a} -> {m.rank_b}")
    manifest.timings["analyze"] = time.perf_counter() - started
    return 0


# Parser


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def _add_eval_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--checkpoint", required=True, help="checkpoint directory")
    parser.add_argument("--prepared", required=True, help="prepared data directory")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--split", default="test", choices=("valid", "test"))
    parser.add_argument("--workers", type=_positive_int, default=os.cpu_count() or 1)
    parser.add_argument("--pessimistic", action="store_true", help="count ties against the true completion")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sspkit", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--log-level", default="INFO", type=str.upper, choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    parser.add_argument("--log-format", default="console", choices=("console", "json"))
    commands = parser.add_subparsers(dest="command", required=True)

    prep = commands.add_parser("prep", help="encode triples and descriptions")
    prep.add_argument("--train", required=True)
    prep.add_argument("--valid", required=True)
    prep.add_argument("--test", required=True)
    prep.add_argument("--descriptions", help="entity<TAB>text file")
    prep.add_argument("--config", help="config file supplying min_count and stop_words")
    prep.add_argument("--min-count", type=_positive_int, help="overrides the config (default 5)")
    prep.add_argument("--stop-words", action="store_true", default=None, help="drop English stop words")
    prep.add_argument("--skip-unknown", action="store_true", help="ignore descriptions of entities without triples")
    prep.add_argument("--out", required=True)
    prep.set_defaults(handler=cmd_prep)

    trainp = commands.add_parser("train", help="train a model")
    trainp.add_argument("--prepared", required=True)
    trainp.add_argument("--config", required=True)
    trainp.add_argument("--model", required=True, choices=tuple(MODEL_FLAGS))
    trainp.add_argument("--out", required=True)
    trainp.add_argument("--seed", type=int)
    trainp.add_argument("--workers", type=_positive_int, help="> 1 selects relaxed parallel SGD")
    trainp.set_defaults(handler=cmd_train)

    link = commands.add_parser("eval-link", help="head and tail prediction")
    _add_eval_arguments(link)
    link.set_defaults(handler=cmd_eval_link)

    rel = commands.add_parser("eval-rel", help="relation prediction")
    _add_eval_arguments(rel)
    rel.set_defaults(handler=cmd_eval_rel)

    clf = commands.add_parser("eval-class", help="entity type classification")
    clf.add_argument("--checkpoint", required=True)
    clf.add_argument("--prepared", required=True)
    clf.add_argument("--labels-train", required=True)
    clf.add_argument("--labels-test", required=True)
    clf.add_argument("--zero-shot-desc", help="descriptions of entities outside the graph")
    clf.add_argument("--config", help="config file with classifier and fold-in keys")
    clf.add_argument("--features", default="joint", choices=[b.value for b in FeatureBlocks])
    clf.add_argument("--out", required=True)
    clf.set_defaults(handler=cmd_eval_class)

    analyze = commands.add_parser("analyze", help="compare two checkpoints")
    analyze.add_argument("--checkpoint-a", required=True, help="baseline")
    analyze.add_argument("--checkpoint-b", required=True)
    analyze.add_argument("--prepared", required=True)
    analyze.add_argument("--analysis", required=True, choices=("rankpairs", "scorediff", "improvements"))
    analyze.add_argument("--out", required=True)
    analyze.add_argument("--split", default="test", choices=("valid", "test"))
    analyze.add_argument("--workers", type=_positive_int, default=os.cpu_count() or 1)
    analyze.add_argument("--bin-width", type=float, default=0.5)
    analyze.add_argument("--top", type=_positive_int, default=20)
    analyze.set_defaults(handler=cmd_analyze)
    return parser


def _problem(exc: SspkitError, run_id: str) -> ProblemDetail:
    return ProblemDetail(
        type=exc.type_uri,
        title=exc.title,
        status=exc.exit_code,
        detail=exc.detail,
        instance=exc.instance,
        run_id=run_id,
        **exc.extensions,
    )


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run the command and return the exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    argv_list = list(argv if argv is not None else sys.argv[1:])
    manifest = RunManifest(command=args.command, argv=argv_list, started_at=_now())
    run_id = str(manifest.id)
    add_run_context(run_id=run_id, command=args.command)
    handler: Handler = args.handler
    try:
        code = handler(args, manifest)
        manifest.finished_at = _now()
        write_manifest(Path(args.out) / "manifest.json", manifest)
        logger.info("cli.command.complete", exit_code=code)
        return code
    except SspkitError as exc:
        problem = _problem(exc, run_id)
        logger.error("cli.command.failed", error=exc.title, detail=exc.detail, instance=exc.instance)
        print(problem.model_dump_json(exclude_none=True), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.error("cli.command.crashed", error=str(exc), exc_info=True)
        problem = ProblemDetail(
            type=ErrorType.INTERNAL_ERROR, title="Internal Error", status=70, detail=str(exc), run_id=run_id
        )
        print(problem.model_dump_json(exclude_none=True), file=sys.stderr)
        return 70
    finally:
        reset_run_context()


def main() -> None:
    """Console script entry point."""
    sys.exit(run())

"""On-disk repositories for prepared datasets and training checkpoints."""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from pydantic import ValidationError as PydanticValidationError

from .config import config_hash
from .exceptions import CompatibilityError, InputError, ParseError
from .kg_store import SPLITS, DescriptionCorpus, TripleStore, Vocabulary
from .logging import get_logger
from .schemas import DatasetSummary, ModelKind, PrepManifest, RunManifest, TrainConfig
from .scoring import EmbeddingTable
from .topic_semantics import SemanticModel
from .trainer import TrainState
from .types import IntArray

logger = get_logger(__name__)

_CHUNK = 1 << 20


def file_digest(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    if not path.is_file():
        raise InputError(f"File not found: {path}", instance=str(path))
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        while chunk := fh.read(_CHUNK):
            digest.update(chunk)
    return digest.hexdigest()


def matrix_digest(counts: sp.csr_matrix) -> str:
    """SHA-256 of a CSR matrix's shape and buffers (``.npz`` archives embed timestamps)."""
    counts = counts.tocsr()
    digest = hashlib.sha256(np.asarray(counts.shape, dtype=np.int64).tobytes())
    for buf in (counts.indptr, counts.indices, counts.data):
        digest.update(np.ascontiguousarray(buf, dtype=np.int64).tobytes())
    return digest.hexdigest()


class Repository[T](ABC):
    """Abstract repository interface for one artifact directory."""

    marker: str

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    @abstractmethod
    def save(self, item: T) -> Path:
        """Write ``item`` below ``root`` and return the directory."""
        ...

    @abstractmethod
    def load(self) -> T:
        """Read the artifact stored below ``root``."""
        ...

    def exists(self) -> bool:
        """True when the directory holds a complete artifact."""
        return (self.root / self.marker).is_file()

    def _require(self) -> None:
        if not self.exists():
            kind = type(self).__name__.removesuffix("Repository").lower()
            raise InputError(f"No {kind} artifact", instance=str(self.root))


class PreparedData(NamedTuple):
    """Encoded triples with their optional description corpus."""

    store: TripleStore
    corpus: DescriptionCorpus | None


def _write_ids(path: Path, triples: IntArray) -> None:
    with path.open("w", encoding="ascii", newline="\n") as fh:
        if len(triples):
            np.savetxt(fh, triples, fmt="%d", delimiter="\t")


def _read_ids(path: Path, n_entities: int, n_relations: int) -> IntArray:
    if not path.is_file():
        raise InputError(f"File not found: {path}", instance=str(path))
    if path.stat().st_size == 0:
        return np.empty((0, 3), dtype=np.int64)
    try:
        triples = np.loadtxt(path, dtype=np.int64, delimiter="\t", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"Malformed id triples: {exc}", instance=str(path)) from None
    if triples.shape[1] != 3:
        raise ParseError(f"Expected 3 columns, got {triples.shape[1]}", instance=str(path))
    if (triples < 0).any() or (triples[:, [0, 2]] >= n_entities).any() or (triples[:, 1] >= n_relations).any():
        raise ParseError("Id out of vocabulary range", instance=str(path))
    return triples


def summarize(data: PreparedData) -> DatasetSummary:
    """Dataset statistics printed after preparation."""
    store, corpus = data
    return DatasetSummary(
        entities=store.num_entities,
        relations=store.num_relations,
        words=corpus.num_words if corpus is not None else 0,
        train=len(store.train),
        valid=len(store.valid),
        test=len(store.test),
        described=len(corpus.described) if corpus is not None else 0,
    )


class PreparedRepository(Repository[PreparedData]):
    """Vocabularies, encoded splits, count matrix and relation statistics of one dataset."""

    marker = "prep.json"

    def __init__(self, root: str | Path) -> None:
        super().__init__(root)
        self.inputs: dict[str, str] = {}
        self.min_count = 5
        self.stop_words = False

    def with_inputs(
        self, inputs: dict[str, Path], *, min_count: int = 5, stop_words: bool = False
    ) -> PreparedRepository:
        """Record digests of the raw inputs and the tokenizer settings into ``prep.json``."""
        self.inputs = {name: file_digest(path) for name, path in inputs.items()}
        self.min_count = min_count
        self.stop_words = stop_words
        return self

    def vocabulary_files(self) -> list[Path]:
        names = ["entities.tsv", "relations.tsv", "words.tsv"]
        return [self.root / n for n in names if (self.root / n).is_file()]

    def prep_digest(self) -> str:
        """SHA-256 over the vocabulary files; checkpoints are bound to it."""
        digest = hashlib.sha256()
        for path in self.vocabulary_files():
            digest.update(path.name.encode("utf-8"))
            digest.update(bytes.fromhex(file_digest(path)))
        return digest.hexdigest()

    def save(self, item: PreparedData) -> Path:
        store, corpus = item
        self.root.mkdir(parents=True, exist_ok=True)
        store.entities.dump(self.root / "entities.tsv")
        store.relations.dump(self.root / "relations.tsv")
        for split in SPLITS:
            _write_ids(self.root / f"{split}.tsv", store.split(split))
        with (self.root / "rel_stats.tsv").open("w", encoding="utf-8", newline="\n") as fh:
            for r, stats in sorted(store.rel_stats.items()):
                fh.write(f"{r}\t{stats.tph!r}\t{stats.hpt!r}\n")

        outputs: dict[str, str] = {}
        if corpus is not None:
            corpus.vocab.dump(self.root / "words.tsv")
            sp.save_npz(self.root / "counts.npz", corpus.counts)
            with (self.root / "described.tsv").open("w", encoding="ascii", newline="\n") as fh:
                fh.writelines(f"{e}\n" for e in sorted(corpus.described))
            outputs["counts"] = matrix_digest(corpus.counts)
        else:
            for stale in ("words.tsv", "counts.npz", "described.tsv"):
                (self.root / stale).unlink(missing_ok=True)

        for path in sorted(self.root.glob("*.tsv")):
            outputs[path.name] = file_digest(path)
        manifest = PrepManifest(
            summary=summarize(item),
            min_count=self.min_count,
            stop_words=self.stop_words,
            inputs=self.inputs,
            outputs=outputs,
            prep_digest=self.prep_digest(),
        )
        (self.root / self.marker).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info("repository.prepared.saved", path=str(self.root), prep_digest=manifest.prep_digest)
        return self.root

    def manifest(self) -> PrepManifest:
        self._require()
        try:
            return PrepManifest.model_validate_json((self.root / self.marker).read_text(encoding="utf-8"))
        except PydanticValidationError as exc:
            raise ParseError(
                f"Invalid prep manifest: {exc.error_count()} errors", instance=str(self.root / self.marker)
            ) from None

    def load(self) -> PreparedData:
        manifest = self.manifest()
        entities = Vocabulary.load(self.root / "entities.tsv")
        relations = Vocabulary.load(self.root / "relations.tsv")
        splits = {s: _read_ids(self.root / f"{s}.tsv", len(entities), len(relations)) for s in SPLITS}
        store = TripleStore(entities, relations, splits)

        corpus = None
        if (self.root / "words.tsv").is_file():
            words = Vocabulary.load(self.root / "words.tsv")
            counts_path = self.root / "counts.npz"
            if not counts_path.is_file():
                raise InputError(f"File not found: {counts_path}", instance=str(counts_path))
            counts = sp.load_npz(counts_path).tocsr()
            described_path = self.root / "described.tsv"
            described = frozenset(
                int(line) for line in described_path.read_text(encoding="ascii").split() if line
            )
            corpus = DescriptionCorpus(words, counts, described)
            if corpus.num_entities != store.num_entities:
                raise ParseError(
                    f"Count matrix has {corpus.num_entities} rows for {store.num_entities} entities",
                    instance=str(counts_path),
                )
        if manifest.prep_digest != self.prep_digest():
            raise CompatibilityError("Vocabulary files changed since preparation", instance=str(self.root))
        return PreparedData(store, corpus)


class Checkpoint(NamedTuple):
    """Trained parameters bound to the config and prepared data that produced them."""

    state: TrainState
    config: TrainConfig
    prep_digest: str


def _format_manifest_line(ckpt: Checkpoint) -> str:
    cfg = ckpt.config
    return (
        f"round={ckpt.state.round} config_hash={config_hash(cfg)} prep_digest={ckpt.prep_digest} "
        f"model={cfg.model.value} mode={cfg.mode.value}\n"
    )


def _parse_manifest_line(path: Path) -> dict[str, str]:
    text = path.read_text(encoding="ascii").strip()
    fields: dict[str, str] = {}
    for token in text.split():
        key, sep, value = token.partition("=")
        if not sep:
            raise ParseError(f"Malformed checkpoint field '{token}'", instance=str(path))
        fields[key] = value
    missing = {"round", "config_hash", "prep_digest", "model", "mode"} - fields.keys()
    if missing or not fields["round"].isdigit():
        raise ParseError(f"Checkpoint line lacks {sorted(missing) or ['round']}", instance=str(path))
    return fields


class CheckpointRepository(Repository[Checkpoint]):
    """Embeddings, semantic factors and the ``checkpoint.txt`` manifest line of one training state."""

    marker = "checkpoint.txt"

    def save(self, item: Checkpoint) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        item.state.embeddings.save(self.root / "embeddings.txt")
        semantics_path = self.root / "semantics.txt"
        if item.state.semantics is not None:
            item.state.semantics.save(semantics_path)
        elif semantics_path.exists():
            semantics_path.unlink()
        config_json = item.config.model_dump_json(by_alias=True, indent=2)
        (self.root / "config.json").write_text(config_json + "\n", encoding="utf-8")
        (self.root / self.marker).write_text(_format_manifest_line(item), encoding="ascii")
        logger.info("repository.checkpoint.saved", path=str(self.root), round=item.state.round)
        return self.root

    def load(self) -> Checkpoint:
        self._require()
        fields = _parse_manifest_line(self.root / self.marker)
        config_path = self.root / "config.json"
        if not config_path.is_file():
            raise InputError(f"File not found: {config_path}", instance=str(config_path))
        try:
            config = TrainConfig.model_validate_json(config_path.read_text(encoding="utf-8"))
        except PydanticValidationError as exc:
            raise ParseError(
                f"Invalid checkpoint config: {exc.error_count()} errors", instance=str(config_path)
            ) from None
        if config_hash(config) != fields["config_hash"]:
            raise CompatibilityError("config.json does not match the recorded config hash", instance=str(config_path))
        if fields["model"] != config.model.value or fields["mode"] != config.mode.value:
            raise CompatibilityError("Checkpoint model or mode disagrees with its config", instance=str(self.root))

        embeddings = EmbeddingTable.load(self.root / "embeddings.txt")
        semantics = None
        if config.model == ModelKind.ssp:
            semantics = SemanticModel.load(self.root / "semantics.txt")
        state = TrainState(embeddings, semantics, round_no=int(fields["round"]))
        return Checkpoint(state, config, fields["prep_digest"])

    def load_for(self, prepared: PreparedRepository, store: TripleStore) -> Checkpoint:
        """Load and verify the checkpoint against prepared data."""
        ckpt = self.load()
        if ckpt.prep_digest != prepared.prep_digest():
            raise CompatibilityError(
                "Checkpoint was trained on different prepared data",
                instance=str(self.root),
                expected=prepared.prep_digest(),
                found=ckpt.prep_digest,
            )
        ent = ckpt.state.embeddings
        if len(ent.entity_vecs) != store.num_entities or len(ent.relation_vecs) != store.num_relations:
            raise CompatibilityError(
                "Checkpoint shape does not match the prepared vocabularies", instance=str(self.root)
            )
        return ckpt


def write_manifest(path: Path, manifest: RunManifest) -> None:
    """Write a run manifest as indented JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")

"""Core Pydantic schemas for configuration, reports, manifests and jobs."""

from __future__ import annotations

from datetime import datetime
from enum import StrEnum
from typing import Self

import ulid
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from .types import JsonSafe

ULID = ulid.ULID


class ModelKind(StrEnum):
    """Score function family."""

    transe = "transe"
    ssp = "ssp"


class TrainingMode(StrEnum):
    """Whether semantic vectors are frozen (standard) or trained with the embeddings (joint)."""

    standard = "standard"
    joint = "joint"


class RankTarget(StrEnum):
    """Slot of a triple that is replaced during ranking."""

    head = "head"
    tail = "tail"
    relation = "relation"


class FeatureBlocks(StrEnum):
    """Which entity representation blocks feed the classifier."""

    joint = "joint"
    semantic = "semantic"
    embedding = "embedding"


# Configuration schemas


class ScoreParams(BaseModel):
    """Parameters of the projection score."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(default=0.2, alias="lambda", ge=0.0, lt=1.0, description="Balance factor of the in-plane term")


class TrainConfig(BaseModel):
    """Training hyperparameters.

    Keys mirror the flat ``key = value`` config file. ``lambda`` is exposed as ``lam`` in Python.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    dim: int = Field(default=100, ge=1, description="Embedding and topic dimension d")
    rate: float = Field(default=0.001, gt=0.0, description="SGD step multiplier")
    margin: float = Field(default=1.0, gt=0.0, description="Hinge margin in score units")
    lam: float = Field(default=0.2, alias="lambda", ge=0.0, lt=1.0, description="Balance factor")
    mu: float = Field(default=0.0, ge=0.0, description="Topic loss weight")
    rounds: int = Field(default=2000, ge=1, description="Epochs over the training triples")
    mode: TrainingMode = TrainingMode.standard
    model: ModelKind = ModelKind.ssp
    seed: int = Field(default=0, ge=0)
    batch: int = Field(default=1, ge=1, description="Triples per parameter update")
    rel_corrupt_frac: float = Field(default=0.0, ge=0.0, le=1.0, description="Share of relation corruptions")
    min_count: int = Field(default=5, ge=1, description="Minimum corpus frequency of a kept word")
    stop_words: bool = False
    negatives: int = Field(default=1, ge=1, description="Negative samples per positive per epoch")
    nmf_epochs: int = Field(default=50, ge=1)
    nmf_rate: float = Field(default=0.01, gt=0.0)
    checkpoint_every: int = Field(default=500, ge=1)
    normalize_entities: bool = False
    retry_budget: int = Field(default=100, ge=1)
    workers: int = Field(default=1, ge=1, description="Workers > 1 selects relaxed parallel SGD")
    early_stopping: bool = False
    patience: int = Field(default=3, ge=1)

    @model_validator(mode="after")
    def validate_mode(self) -> Self:
        """Reject a topic weight outside the joint setting."""
        if self.mode == TrainingMode.standard and self.mu != 0.0:
            raise ValueError(f"mu must be 0 in standard mode (got {self.mu})")
        if self.model == ModelKind.transe and self.mode == TrainingMode.joint:
            raise ValueError("joint mode requires the ssp model")
        return self

    @property
    def score_params(self) -> ScoreParams:
        """Score parameters derived from this config."""
        return ScoreParams(lam=0.0 if self.model == ModelKind.transe else self.lam)


class EvalConfig(BaseModel):
    """Evaluation and analysis settings read from the same flat config format."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    clf_epochs: int = Field(default=500, ge=1)
    clf_rate: float = Field(default=0.5, gt=0.0)
    clf_l2: float = Field(default=0.0, ge=0.0)
    fold_in_epochs: int = Field(default=200, ge=0)
    fold_in_rate: float = Field(default=0.01, gt=0.0)
    bin_width: float = Field(default=0.5, gt=0.0)
    seed: int = Field(default=0, ge=0)


# Training reports


class EpochReport(BaseModel):
    """Losses of one training round."""

    round: int = Field(ge=1)
    embed_loss: float = Field(description="Mean hinge loss over sampled pairs")
    topic_loss: float = Field(default=0.0, description="Unscaled topic loss over stored cells")
    skipped: int = Field(default=0, ge=0, description="Triples skipped after exhausting the retry budget")
    seconds: float = Field(default=0.0, ge=0.0)


# Evaluation schemas


class RankResult(BaseModel):
    """Raw and filtered rank of one completion query."""

    model_config = ConfigDict(frozen=True)

    triple: tuple[int, int, int]
    target: RankTarget
    raw_rank: int = Field(ge=1)
    filtered_rank: int = Field(ge=1)

    @model_validator(mode="after")
    def validate_ranks(self) -> Self:
        """Filtering can only remove competitors."""
        if self.filtered_rank > self.raw_rank:
            raise ValueError(f"filtered rank {self.filtered_rank} exceeds raw rank {self.raw_rank}")
        return self


class MetricSummary(BaseModel):
    """Mean Rank and HITS@10 in both settings for one group of queries."""

    count: int = Field(ge=0)
    mean_rank_raw: float = Field(ge=1.0)
    mean_rank_filtered: float = Field(ge=1.0)
    hits10_raw: float = Field(ge=0.0, le=100.0)
    hits10_filtered: float = Field(ge=0.0, le=100.0)


class EvalReport(BaseModel):
    """Pooled metrics plus a per-target breakdown."""

    split: str
    overall: MetricSummary
    breakdown: dict[RankTarget, MetricSummary] = Field(default_factory=dict)
    results: list[RankResult] = Field(default_factory=list, exclude=True)


class ClassificationReport(BaseModel):
    """Mean average precision of entity type ranking."""

    map: float = Field(ge=0.0, le=100.0, description="MAP as a percentage")
    entities: int = Field(ge=0, description="Entities contributing to MAP")
    excluded: int = Field(default=0, ge=0, description="Entities without true types")
    zero_shot: int = Field(default=0, ge=0, description="Entities represented by fold-in vectors")


class RankPairCell(BaseModel):
    """Count of triples ranked at or beyond a threshold by A and within a threshold by B."""

    threshold_a: int = Field(ge=1)
    threshold_b: int = Field(ge=1)
    count: int = Field(ge=0)


class HistogramBin(BaseModel):
    """Half-open interval [left, right) with its count."""

    left: float
    right: float
    count: int = Field(ge=0)


class ScoreDiffHistogram(BaseModel):
    """Score differences f(negative) - f(golden) for hard pairs."""

    differences: list[float]
    bins: list[HistogramBin]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def success_rate(self) -> float:
        """Fraction of pairs with a strictly positive difference."""
        if not self.differences:
            return 0.0
        return sum(1 for d in self.differences if d > 0.0) / len(self.differences)


class RankImprovement(BaseModel):
    """One query whose rank moved between two models."""

    triple: tuple[int, int, int]
    target: RankTarget
    rank_a: int = Field(ge=1)
    rank_b: int = Field(ge=1)


# Artifact schemas


class DatasetSummary(BaseModel):
    """Statistics printed by ``sspkit prep``."""

    entities: int = Field(ge=0)
    relations: int = Field(ge=0)
    words: int = Field(default=0, ge=0)
    train: int = Field(ge=0)
    valid: int = Field(ge=0)
    test: int = Field(ge=0)
    described: int = Field(default=0, ge=0)


class PrepManifest(BaseModel):
    """Contents of ``prep.json`` in a prepared directory."""

    summary: DatasetSummary
    min_count: int = Field(ge=1)
    stop_words: bool = False
    inputs: dict[str, str] = Field(default_factory=dict, description="SHA-256 of each raw input file")
    outputs: dict[str, str] = Field(default_factory=dict, description="SHA-256 of each written artifact")
    prep_digest: str = Field(description="SHA-256 over the vocabulary files")


class RunManifest(BaseModel):
    """Everything needed to re-run a command bit-identically in sequential mode."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    id: ULID = Field(default_factory=ULID, description="Unique run identifier")
    command: str
    argv: list[str] = Field(default_factory=list)
    seed: int | None = None
    config: dict[str, JsonSafe] = Field(default_factory=dict)
    digests: dict[str, str] = Field(default_factory=dict, description="SHA-256 of every input artifact")
    artifacts: dict[str, str] = Field(default_factory=dict)
    timings: dict[str, float] = Field(default_factory=dict, description="Wall-clock seconds per phase")
    started_at: datetime | None = None
    finished_at: datetime | None = None

    @field_validator("digests")
    @classmethod
    def validate_digests(cls, v: dict[str, str]) -> dict[str, str]:
        """Digests must be lowercase hex SHA-256."""
        bad = sorted(k for k, d in v.items() if len(d) != 64 or any(c not in "0123456789abcdef" for c in d))
        if bad:
            raise ValueError(f"Invalid SHA-256 digests for: {bad}")
        return v


class ProblemDetail(BaseModel):
    """RFC 9457 Problem Details written to stderr when a command fails."""

    model_config = ConfigDict(extra="allow")

    type: str = Field(default="about:blank", description="URN identifying the problem type")
    title: str = Field(description="Short, human-readable summary of the problem type")
    status: int = Field(description="Process exit code", ge=1, le=255)
    detail: str | None = Field(default=None, description="Human-readable explanation specific to this occurrence")
    instance: str | None = Field(default=None, description="Offending artifact, e.g. a file path with line number")
    run_id: str | None = Field(default=None, description="Run identifier for correlating with logs")


# Job schemas


class JobStatus(StrEnum):
    """Status of a scheduled job."""

    pending = "pending"
    running = "running"
    completed = "completed"
    failed = "failed"
    canceled = "canceled"


class JobRecord(BaseModel):
    """State and timing of one scheduled shard job."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    id: ULID = Field(description="Unique job identifier")
    status: JobStatus = Field(default=JobStatus.pending, description="Current job status")
    label: str | None = Field(default=None, description="Caller-chosen name, e.g. shard-3")
    items: int = Field(default=0, ge=0, description="Work items in the shard")
    submitted_at: datetime | None = Field(default=None, description="When the job was submitted")
    started_at: datetime | None = Field(default=None, description="When the job started running")
    finished_at: datetime | None = Field(default=None, description="When the job finished")
    error: str | None = Field(default=None, description="User-friendly error message if job failed")
    error_traceback: str | None = Field(default=None, description="Full error traceback for debugging")

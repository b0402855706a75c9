"""Knowledge graph embedding with semantic space projection: data preparation, training and evaluation."""

# ruff: noqa: F401

# Read version from package metadata - must be before internal imports
try:
    from importlib.metadata import version as _get_version

    __version__ = _get_version("sspkit")
except Exception:
    __version__ = "unknown"

from .config import config_hash, load_config, load_eval_config
from .exceptions import (
    CompatibilityError,
    ConfigurationError,
    ContractViolationError,
    DegenerateInputError,
    ErrorType,
    FeatureError,
    FoldInError,
    InputError,
    ParseError,
    SamplingError,
    ShapeError,
    SspkitError,
    StatisticsError,
    TrainingDivergedError,
    VocabularyError,
)
from .kg_store import (
    DescriptionCorpus,
    Tokenizer,
    TripleStore,
    TripleStoreBuilder,
    VocabMode,
    Vocabulary,
    corruption_probability,
    load_descriptions,
    load_triples,
)
from .logging import add_run_context, clear_run_context, configure_logging, get_logger, reset_run_context
from .repository import Checkpoint, CheckpointRepository, PreparedData, PreparedRepository, Repository
from .scheduler import InMemoryScheduler, map_shards
from .schemas import (
    EvalConfig,
    EvalReport,
    FeatureBlocks,
    JobRecord,
    JobStatus,
    ModelKind,
    ProblemDetail,
    RankResult,
    RankTarget,
    RunManifest,
    ScoreParams,
    TrainConfig,
    TrainingMode,
)
from .scoring import EmbeddingTable, TripleScorer, project_onto_hyperplane, ssp_gradients, ssp_score, transe_score
from .topic_semantics import SemanticModel, compose_topics, fold_in, normal_vector, pretrain_nmf, topic_loss
from .trainer import TrainState, hinge_loss, init_params, sample_negative, train, train_epoch
from .types import JsonSafe

__all__ = [
    # Version
    "__version__",
    # Configuration
    "TrainConfig",
    "EvalConfig",
    "ScoreParams",
    "ModelKind",
    "TrainingMode",
    "FeatureBlocks",
    "load_config",
    "load_eval_config",
    "config_hash",
    # Data
    "Vocabulary",
    "VocabMode",
    "TripleStore",
    "TripleStoreBuilder",
    "DescriptionCorpus",
    "Tokenizer",
    "load_triples",
    "load_descriptions",
    "corruption_probability",
    # Models
    "SemanticModel",
    "EmbeddingTable",
    "TripleScorer",
    "compose_topics",
    "normal_vector",
    "fold_in",
    "pretrain_nmf",
    "topic_loss",
    "project_onto_hyperplane",
    "transe_score",
    "ssp_score",
    "ssp_gradients",
    # Training
    "TrainState",
    "init_params",
    "sample_negative",
    "hinge_loss",
    "train_epoch",
    "train",
    # Artifacts
    "Repository",
    "PreparedRepository",
    "PreparedData",
    "CheckpointRepository",
    "Checkpoint",
    "RunManifest",
    # Evaluation
    "RankResult",
    "RankTarget",
    "EvalReport",
    # Scheduler
    "InMemoryScheduler",
    "JobRecord",
    "JobStatus",
    "map_shards",
    # Logging
    "configure_logging",
    "get_logger",
    "add_run_context",
    "clear_run_context",
    "reset_run_context",
    # Errors
    "ErrorType",
    "ProblemDetail",
    "SspkitError",
    "ParseError",
    "VocabularyError",
    "StatisticsError",
    "ShapeError",
    "ConfigurationError",
    "DegenerateInputError",
    "FoldInError",
    "ContractViolationError",
    "SamplingError",
    "TrainingDivergedError",
    "FeatureError",
    "InputError",
    "CompatibilityError",
    # Types
    "JsonSafe",
]

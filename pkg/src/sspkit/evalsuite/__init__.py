"""Link prediction, entity classification and model-comparison diagnostics."""

from .analysis import (
    DEFAULT_THRESHOLD_B,
    DEFAULT_THRESHOLDS_A,
    rank_improvements,
    rank_pair_statistics,
    score_difference_histogram,
    select_hard_pairs,
)
from .classification import (
    OvRClassifier,
    TypedEntitySet,
    build_features,
    classify_entities,
    compute_map,
    load_typed_entities,
    logistic_loss_and_grad,
    train_ovr_classifier,
)
from .ranking import link_prediction, rank_split, rank_triple, relation_prediction, summarize

__all__ = [
    "DEFAULT_THRESHOLDS_A",
    "DEFAULT_THRESHOLD_B",
    "OvRClassifier",
    "TypedEntitySet",
    "build_features",
    "classify_entities",
    "compute_map",
    "link_prediction",
    "load_typed_entities",
    "logistic_loss_and_grad",
    "rank_improvements",
    "rank_pair_statistics",
    "rank_split",
    "rank_triple",
    "relation_prediction",
    "score_difference_histogram",
    "select_hard_pairs",
    "summarize",
    "train_ovr_classifier",
]

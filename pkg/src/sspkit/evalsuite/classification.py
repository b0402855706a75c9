"""Multi-label entity type classification with one-versus-rest logistic regression, scored by MAP."""

from __future__ import annotations

from collections.abc import Collection, Mapping, Sequence
from pathlib import Path

import numpy as np
from scipy.special import expit

from ..exceptions import ConfigurationError, FeatureError, FoldInError, InputError, ParseError
from ..kg_store import TripleStore, Vocabulary, ZeroShotDescriptions, read_lines
from ..logging import get_logger
from ..schemas import ClassificationReport, EvalConfig, FeatureBlocks
from ..topic_semantics import fold_in
from ..trainer import TrainState
from ..types import FloatArray, IntArray

logger = get_logger(__name__)


class TypedEntitySet:
    """Type labels of the train and test entities over a shared class vocabulary."""

    def __init__(
        self,
        classes: Vocabulary,
        train: Mapping[str, frozenset[int]],
        test: Mapping[str, frozenset[int]],
    ) -> None:
        self.classes = classes
        self.train = dict(train)
        self.test = dict(test)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def indicator(self, split: str) -> tuple[list[str], FloatArray]:
        """Entity names of ``split`` and their (n, K) 0/1 label matrix."""
        labels = self.train if split == "train" else self.test
        names = list(labels)
        y = np.zeros((len(names), self.num_classes))
        for i, name in enumerate(names):
            y[i, sorted(labels[name])] = 1.0
        return names, y


def load_type_labels(path: str | Path, classes: Vocabulary) -> dict[str, frozenset[int]]:
    """Read ``entity<TAB>type1,type2,...`` lines, registering new types in ``classes``.

    Entities listed without any type are skipped with a warning.
    """
    labels: dict[str, frozenset[int]] = {}
    untyped = 0
    for lineno, line in enumerate(read_lines(Path(path)), start=1):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0]:
            raise ParseError("Expected 'entity<TAB>type1,type2,...'", instance=f"{path}:{lineno}")
        name, raw = fields
        types = frozenset(classes.add(t.strip()) for t in raw.split(",") if t.strip())
        if not types:
            untyped += 1
            continue
        labels[name] = labels.get(name, frozenset()) | types
    if untyped:
        logger.warning("evalsuite.labels.untyped", path=str(path), skipped=untyped)
    return labels


def load_typed_entities(train_path: str | Path, test_path: str | Path) -> TypedEntitySet:
    """Load both label files over one class vocabulary built in first-seen order."""
    classes = Vocabulary()
    train = load_type_labels(train_path, classes)
    test = load_type_labels(test_path, classes)
    return TypedEntitySet(classes, train, test)


def build_features(
    state: TrainState,
    entity: int | None,
    blocks: FeatureBlocks = FeatureBlocks.joint,
    *,
    zero_shot: FloatArray | None = None,
) -> FloatArray:
    """Entity representation: semantic block first, then embedding block.

    A zero-shot entity is given by its fold-in semantic vector and gets a zero embedding block.
    """
    dim = state.dim
    if zero_shot is not None:
        semantic = np.asarray(zero_shot, dtype=np.float64)
        embedding = np.zeros(dim)
    elif entity is not None and 0 <= entity < len(state.embeddings.entity_vecs):
        embedding = state.embeddings.entity_vecs[entity]
        semantic = state.semantics.entity_sem[entity] if state.semantics is not None else None
    else:
        raise FeatureError(f"Entity {entity!r} has neither an embedding nor a description")

    if blocks == FeatureBlocks.embedding:
        return np.array(embedding, dtype=np.float64)
    if semantic is None:
        raise FeatureError(f"Feature block '{blocks}' needs semantic vectors")
    if blocks == FeatureBlocks.semantic:
        return np.array(semantic, dtype=np.float64)
    return np.concatenate([semantic, embedding])


def logistic_loss_and_grad(
    weights: FloatArray, bias: float, x: FloatArray, y: FloatArray, l2: float = 0.0
) -> tuple[float, FloatArray, float]:
    """Mean binary log-loss plus ``l2 / 2 * ||w||^2`` with its gradient."""
    z = x @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (weights @ weights))
    residual = (expit(z) - y) / len(y)
    return loss, x.T @ residual + l2 * weights, float(residual.sum())


class OvRClassifier:
    """K independent binary logistic regressors sharing one feature space."""

    def __init__(self, weights: FloatArray, bias: FloatArray) -> None:
        self.weights = weights
        self.bias = bias

    @property
    def num_classes(self) -> int:
        return int(self.weights.shape[0])

    def predict_proba(self, x: FloatArray) -> FloatArray:
        """Per-class probabilities, shape (n, K)."""
        probs: FloatArray = expit(x @ self.weights.T + self.bias)
        return probs

    def rank_classes(self, x: FloatArray) -> IntArray:
        """Class ids per row, most probable first; ties keep class order."""
        ranking: IntArray = np.argsort(-self.predict_proba(x), axis=1, kind="stable")
        return ranking


def train_ovr_classifier(
    x: FloatArray,
    y: FloatArray,
    epochs: int,
    rate: float,
    l2: float = 0.0,
) -> OvRClassifier:
    """Full-batch gradient descent on the log-loss of every class at once.

    Classes without positive examples keep zero weights and are ranked by their bias alone.
    """
    if len(x) == 0:
        raise InputError("No training entities for the classifier")
    if epochs < 1 or rate <= 0:
        raise ConfigurationError(f"Classifier needs epochs >= 1 and rate > 0 (got {epochs}, {rate})")
    n, k = y.shape
    positives = y.sum(axis=0)
    bias_only = positives == 0
    if bias_only.any():
        logger.warning("evalsuite.classifier.no_positives", classes=np.flatnonzero(bias_only).tolist())

    weights = np.zeros((k, x.shape[1]))
    bias = np.zeros(k)
    trainable = (~bias_only)[:, None]
    for _ in range(epochs):
        residual = (expit(x @ weights.T + bias) - y) / n
        grad_w = residual.T @ x + l2 * weights
        weights -= rate * np.where(trainable, grad_w, 0.0)
        bias -= rate * residual.sum(axis=0)
    return OvRClassifier(weights, bias)


def average_precision(ranking: Sequence[int], truth: Collection[int]) -> float:
    """Mean over true types of (true types at or above its position) / position."""
    positions = np.sort(np.flatnonzero(np.isin(np.asarray(ranking), list(truth)))) + 1
    return float(np.mean(np.arange(1, len(positions) + 1) / positions))


def compute_map(rankings: Sequence[Sequence[int]], truths: Sequence[Collection[int]]) -> float:
    """Mean average precision in percent; entities without true types are excluded."""
    if len(rankings) != len(truths):
        raise InputError(f"{len(rankings)} rankings for {len(truths)} label sets")
    scores = [average_precision(rank, truth) for rank, truth in zip(rankings, truths, strict=True) if truth]
    excluded = len(truths) - len(scores)
    if excluded:
        logger.warning("evalsuite.map.excluded", entities=excluded)
    if not scores:
        raise InputError("No entity with true types to score")
    return 100.0 * float(np.mean(scores))


def _zero_shot_vectors(
    state: TrainState,
    names: Sequence[str],
    descriptions: ZeroShotDescriptions,
    config: EvalConfig,
) -> dict[str, FloatArray]:
    if state.semantics is None:
        raise ConfigurationError("Zero-shot classification needs a model with semantic vectors")
    vectors: dict[str, FloatArray] = {}
    for name in names:
        if name not in descriptions.names:
            continue
        word_ids, counts = descriptions.row(descriptions.names.encode(name))
        try:
            vectors[name] = fold_in(
                word_ids, counts, state.semantics, config.fold_in_epochs, config.fold_in_rate, seed=config.seed
            )
        except FoldInError:
            logger.warning("evalsuite.fold_in.empty", entity=name)
    return vectors


def feature_matrix(
    state: TrainState,
    store: TripleStore,
    names: Sequence[str],
    blocks: FeatureBlocks,
    zero_shot: Mapping[str, FloatArray] | None = None,
) -> FloatArray:
    """Stack :func:`build_features` rows for ``names``; known entities win over fold-in vectors."""
    zero_shot = zero_shot or {}
    rows = []
    for name in names:
        if name in store.entities:
            rows.append(build_features(state, store.entities.encode(name), blocks))
        elif name in zero_shot:
            rows.append(build_features(state, None, blocks, zero_shot=zero_shot[name]))
        else:
            raise FeatureError(f"Entity '{name}' has neither an embedding nor a description", entity=name)
    return np.vstack(rows)


def classify_entities(
    state: TrainState,
    store: TripleStore,
    typed: TypedEntitySet,
    config: EvalConfig,
    blocks: FeatureBlocks = FeatureBlocks.joint,
    zero_shot: ZeroShotDescriptions | None = None,
) -> ClassificationReport:
    """Train on the labeled train entities and report MAP over the test entities."""
    train_names, y_train = typed.indicator("train")
    test_names, y_test = typed.indicator("test")
    if not test_names:
        raise InputError("Label file has no test entities")

    folded: dict[str, FloatArray] = {}
    if zero_shot is not None:
        unknown = [n for n in test_names if n not in store.entities]
        folded = _zero_shot_vectors(state, unknown, zero_shot, config)
        skipped = [n for n in unknown if n in zero_shot.names and n not in folded]
        keep = [i for i, n in enumerate(test_names) if n not in skipped]
        test_names, y_test = [test_names[i] for i in keep], y_test[keep]
        if not test_names:
            raise InputError("No test entity could be represented")

    x_train = feature_matrix(state, store, train_names, blocks)
    x_test = feature_matrix(state, store, test_names, blocks, folded)
    clf = train_ovr_classifier(x_train, y_train, config.clf_epochs, config.clf_rate, config.clf_l2)
    rankings = clf.rank_classes(x_test)
    truths = [frozenset(np.flatnonzero(row).tolist()) for row in y_test]
    value = compute_map(rankings.tolist(), truths)
    report = ClassificationReport(
        map=value,
        entities=sum(1 for t in truths if t),
        excluded=sum(1 for t in truths if not t),
        zero_shot=sum(1 for n in test_names if n in folded),
    )
    logger.info("evalsuite.classification.complete", **report.model_dump(), blocks=blocks)
    return report

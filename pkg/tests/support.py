"""Helpers shared by the test modules: dataset writers and a quick training config."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sspkit.kg_store import TripleStore, TripleStoreBuilder
from sspkit.schemas import ModelKind, TrainConfig, TrainingMode


def write_lines(path: Path, lines: list[str]) -> Path:
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return path


@dataclass(frozen=True)
class KGFiles:
    """Paths of one on-disk dataset."""

    train: Path
    valid: Path
    test: Path
    descriptions: Path
    labels_train: Path
    labels_test: Path
    zero_shot: Path | None = None


# Toy graph: four entities, two relations


TOY_TRAIN = ["a\tr1\tb", "b\tr1\tc", "a\tr2\tc", "c\tr2\td"]
TOY_VALID = ["a\tr1\tc"]
TOY_TEST = ["b\tr2\td"]
TOY_DESCRIPTIONS = [
    "a\tRiver valley river delta, water.",
    "b\triver water basin valley",
    "c\tMountain peak, mountain snow",
    "d\tpeak snow mountain ridge",
]


def build_store(files: KGFiles) -> TripleStore:
    return (
        TripleStoreBuilder()
        .with_split("train", files.train)
        .with_split("valid", files.valid)
        .with_split("test", files.test)
        .build()
    )


# Topic-clustered synthetic graph


def write_clustered_kg(
    root: Path,
    *,
    n_entities: int = 300,
    n_clusters: int = 10,
    n_relations: int = 5,
    triples_per_entity: int = 6,
    noise: float = 0.2,
    n_zero_shot: int = 0,
    seed: int = 0,
) -> KGFiles:
    """Entities fall into topic clusters; descriptions draw from their cluster's words.

    Training triples mostly link entities of the same cluster, with a share of random cross-cluster links.
    Valid and test triples only link entities of the same cluster. Entity ``i`` belongs to cluster
    ``i % n_clusters`` and carries the labels ``type<cluster>`` and ``even``/``odd`` by cluster parity.
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    names = [f"e{i:04d}" for i in range(n_entities)]
    cluster = np.arange(n_entities) % n_clusters
    members = [np.flatnonzero(cluster == c) for c in range(n_clusters)]

    def description(c: int) -> str:
        topic = [f"topic{c}word{k}" for k in rng.integers(0, 6, size=8)]
        filler = [f"common{k}" for k in rng.integers(0, 4, size=2)]
        return " ".join(topic + filler)

    def labels(c: int) -> str:
        return f"type{c},{'even' if c % 2 == 0 else 'odd'}"

    same: list[tuple[int, int, int]] = []
    cross: list[tuple[int, int, int]] = []
    for h in range(n_entities):
        for _ in range(triples_per_entity):
            r = int(rng.integers(0, n_relations))
            if rng.random() < noise:
                t = int(rng.integers(0, n_entities))
                if t != h:
                    cross.append((h, r, t))
            else:
                t = int(rng.choice(members[cluster[h]]))
                if t != h:
                    same.append((h, r, t))
    unique_same = list(dict.fromkeys(same))
    seen = set(unique_same)
    unique_cross = list(dict.fromkeys(t for t in cross if t not in seen))
    order = rng.permutation(len(unique_same))
    n_held = len(order) // 10
    valid = [unique_same[i] for i in order[:n_held]]
    test = [unique_same[i] for i in order[n_held : 2 * n_held]]
    train = [unique_same[i] for i in order[2 * n_held :]] + unique_cross
    # every entity appears in training so held-out queries never name an untrained entity
    covered = {h for h, _, _ in train} | {t for _, _, t in train}
    for e in range(n_entities):
        if e not in covered:
            partner = int(members[cluster[e]][0]) if int(members[cluster[e]][0]) != e else int(members[cluster[e]][1])
            train.append((e, 0, partner))

    def fmt(triples: list[tuple[int, int, int]]) -> list[str]:
        return [f"{names[h]}\tr{r}\t{names[t]}" for h, r, t in triples]

    split_at = int(n_entities * 0.8)
    zero_shot_path = None
    zero_shot_labels: list[str] = []
    if n_zero_shot:
        zero_lines = []
        for k in range(n_zero_shot):
            c = k % n_clusters
            zero_lines.append(f"z{k:04d}\t{description(c)}")
            zero_shot_labels.append(f"z{k:04d}\t{labels(c)}")
        zero_shot_path = write_lines(root / "zero_shot.txt", zero_lines)

    return KGFiles(
        train=write_lines(root / "train.txt", fmt(train)),
        valid=write_lines(root / "valid.txt", fmt(valid)),
        test=write_lines(root / "test.txt", fmt(test)),
        descriptions=write_lines(
            root / "desc.txt", [f"{names[e]}\t{description(cluster[e])}" for e in range(n_entities)]
        ),
        labels_train=write_lines(
            root / "labels_train.txt", [f"{names[e]}\t{labels(cluster[e])}" for e in range(split_at)]
        ),
        labels_test=write_lines(
            root / "labels_test.txt",
            [f"{names[e]}\t{labels(cluster[e])}" for e in range(split_at, n_entities)] + zero_shot_labels,
        ),
        zero_shot=zero_shot_path,
    )


def small_config(**changes: object) -> TrainConfig:
    """Quick-running config for unit tests."""
    values: dict[str, object] = {
        "dim": 4,
        "rate": 0.01,
        "margin": 1.0,
        "rounds": 5,
        "model": ModelKind.ssp,
        "mode": TrainingMode.standard,
        "nmf_epochs": 5,
        "checkpoint_every": 5,
    }
    values.update(changes)
    return TrainConfig.model_validate(values)

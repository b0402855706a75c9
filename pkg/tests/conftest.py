"""Test configuration and shared fixtures."""

from collections.abc import Callable
from pathlib import Path

import pytest

from sspkit.kg_store import DescriptionCorpus, Tokenizer, TripleStore, load_descriptions
from sspkit.logging import reset_run_context

from .support import (
    TOY_DESCRIPTIONS,
    TOY_TEST,
    TOY_TRAIN,
    TOY_VALID,
    KGFiles,
    build_store,
    write_clustered_kg,
    write_lines,
)


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption("--run-slow", action="store_true", default=False, help="run long acceptance checks")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _clean_run_context() -> None:
    reset_run_context()


@pytest.fixture
def toy_files(tmp_path: Path) -> KGFiles:
    """Four entities, two relations, with descriptions and type labels."""
    return KGFiles(
        train=write_lines(tmp_path / "train.txt", TOY_TRAIN),
        valid=write_lines(tmp_path / "valid.txt", TOY_VALID),
        test=write_lines(tmp_path / "test.txt", TOY_TEST),
        descriptions=write_lines(tmp_path / "desc.txt", TOY_DESCRIPTIONS),
        labels_train=write_lines(tmp_path / "labels_train.txt", ["a\twater", "c\tland", "d\tland,high"]),
        labels_test=write_lines(tmp_path / "labels_test.txt", ["b\twater"]),
    )


@pytest.fixture
def toy_store(toy_files: KGFiles) -> TripleStore:
    return build_store(toy_files)


@pytest.fixture
def toy_corpus(toy_files: KGFiles, toy_store: TripleStore) -> DescriptionCorpus:
    return load_descriptions(toy_files.descriptions, toy_store, Tokenizer(), min_count=1)


@pytest.fixture
def clustered_kg(tmp_path: Path) -> Callable[..., KGFiles]:
    """Factory writing a topic-clustered graph below ``tmp_path``."""

    def factory(name: str = "clustered", **kwargs: int | float) -> KGFiles:
        return write_clustered_kg(tmp_path / name, **kwargs)  # type: ignore[arg-type]

    return factory

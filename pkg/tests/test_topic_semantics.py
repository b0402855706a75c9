"""Tests for the NMF topic model, semantic composition and fold-in."""

from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from sspkit.exceptions import ConfigurationError, DegenerateInputError, FoldInError, ShapeError
from sspkit.kg_store import (
    DescriptionCorpus,
    Tokenizer,
    Vocabulary,
    encode_descriptions,
    load_descriptions,
)
from sspkit.topic_semantics import (
    SemanticModel,
    compose_topics,
    fold_in,
    initial_model,
    normal_vector,
    normal_vectors,
    pretrain_nmf,
    row_loss,
    topic_loss,
    topic_sgd_step,
    uniform_vector,
)

from .support import build_store, write_clustered_kg, write_lines


def _corpus(dense: np.ndarray) -> DescriptionCorpus:
    counts = sp.csr_matrix(dense)
    described = frozenset(int(e) for e in np.flatnonzero(dense.sum(axis=1)))
    return DescriptionCorpus(Vocabulary([f"w{j}" for j in range(dense.shape[1])]), counts, described)


def _model(s: list[list[float]], w: list[list[float]]) -> SemanticModel:
    return SemanticModel(np.array(s, dtype=np.float64), np.array(w, dtype=np.float64))


class TestTopicLoss:
    """Test the squared-residual loss over stored cells."""

    def test_exact_factorization(self) -> None:
        """Test C=2 with s=w=(1,1) has zero loss."""
        assert topic_loss(_model([[1, 1]], [[1, 1]]), _corpus(np.array([[2.0]]))) == 0.0

    def test_single_residual(self) -> None:
        """Test C=3 with s=w=(1,0) gives (3-1)^2."""
        assert topic_loss(_model([[1, 0]], [[1, 0]]), _corpus(np.array([[3.0]]))) == 4.0

    def test_matches_double_loop(self) -> None:
        """Test against an explicit loop over the nonzero cells of a random corpus."""
        rng = np.random.default_rng(0)
        dense = rng.integers(0, 4, size=(4, 6)).astype(np.float64)
        model = SemanticModel(rng.random((4, 3)), rng.random((6, 3)))
        expected = 0.0
        for e in range(4):
            for w in range(6):
                if dense[e, w] != 0:
                    expected += (dense[e, w] - model.entity_sem[e] @ model.word_topics[w]) ** 2
        assert topic_loss(model, _corpus(dense)) == pytest.approx(expected, rel=1e-12)

    def test_zero_cells_are_ignored(self) -> None:
        """Test cells that are not stored contribute nothing."""
        model = _model([[1.0], [5.0]], [[1.0]])
        assert topic_loss(model, _corpus(np.array([[1.0], [0.0]]))) == 0.0

    def test_shape_mismatch(self) -> None:
        """Test misaligned factors and corpus raise."""
        with pytest.raises(ShapeError):
            topic_loss(_model([[1.0]], [[1.0]]), _corpus(np.ones((2, 1))))


class TestTopicSgdStep:
    """Test one projected gradient step."""

    def test_worked_step(self) -> None:
        """Test s=w=(1), C=3, rate 0.1 moves both to 1.4."""
        model = topic_sgd_step(_model([[1.0]], [[1.0]]), (0, 0, 3.0), 0.1)
        assert model.entity_sem[0, 0] == pytest.approx(1.4, abs=1e-12)
        assert model.word_topics[0, 0] == pytest.approx(1.4, abs=1e-12)

    def test_factorized_cell_unchanged(self) -> None:
        """Test a zero residual leaves both vectors alone."""
        model = topic_sgd_step(_model([[1.0, 1.0]], [[1.0, 1.0]]), (0, 0, 2.0), 0.5)
        assert model.entity_sem.tolist() == [[1.0, 1.0]]
        assert model.word_topics.tolist() == [[1.0, 1.0]]

    def test_clamp_to_exact_zero(self) -> None:
        """Test a coordinate pushed below zero ends at exactly 0."""
        model = topic_sgd_step(_model([[1.0, 0.05]], [[1.0, 1.0]]), (0, 0, 0.5), 0.1)
        assert model.entity_sem[0, 1] == 0.0
        assert model.entity_sem[0, 0] > 0.0
        assert model.min_entry() >= 0.0

    def test_rejects_nonpositive_rate(self) -> None:
        """Test rate must be positive."""
        with pytest.raises(ConfigurationError):
            topic_sgd_step(_model([[1.0]], [[1.0]]), (0, 0, 1.0), 0.0)

    def test_step_matches_finite_differences(self) -> None:
        """Test the applied update equals -rate times a central-difference gradient at 100 points."""
        rng = np.random.default_rng(42)
        rate, h = 1e-6, 1e-6
        for _ in range(100):
            s = rng.uniform(0.5, 1.5, size=4)
            w = rng.uniform(0.5, 1.5, size=4)
            count = float(rng.uniform(0.0, 6.0))

            def loss(s_: np.ndarray, w_: np.ndarray, c: float = count) -> float:
                return (c - s_ @ w_) ** 2

            fd_s = np.array([(loss(s + h * e, w) - loss(s - h * e, w)) / (2 * h) for e in np.eye(4)])
            fd_w = np.array([(loss(s, w + h * e) - loss(s, w - h * e)) / (2 * h) for e in np.eye(4)])
            model = topic_sgd_step(SemanticModel(s[None, :].copy(), w[None, :].copy()), (0, 0, count), rate)
            applied_s = (s - model.entity_sem[0]) / rate
            applied_w = (w - model.word_topics[0]) / rate
            assert np.linalg.norm(applied_s - fd_s) <= 1e-4 * np.linalg.norm(fd_s) + 1e-6
            assert np.linalg.norm(applied_w - fd_w) <= 1e-4 * np.linalg.norm(fd_w) + 1e-6


class TestComposition:
    """Test additive composition and the hyperplane normal."""

    def test_simplex_composition(self) -> None:
        """Test the worked composition example."""
        out = compose_topics(np.array([0.1, 0.9, 0.0]), np.array([0.8, 0.0, 0.2]))
        np.testing.assert_allclose(out, [0.45, 0.45, 0.10], atol=1e-9)

    def test_unit_normal(self) -> None:
        """Test the same pair scaled to unit length."""
        out = normal_vector(np.array([0.1, 0.9, 0.0]), np.array([0.8, 0.0, 0.2]))
        np.testing.assert_allclose(out, [0.6985, 0.6985, 0.1552], atol=1e-4)
        assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)

    def test_zero_pair_is_degenerate(self) -> None:
        """Test two zero vectors have no composition."""
        with pytest.raises(DegenerateInputError):
            compose_topics(np.zeros(3), np.zeros(3))
        with pytest.raises(DegenerateInputError):
            normal_vector(np.zeros(3), np.zeros(3))

    def test_batched_normals(self) -> None:
        """Test row-wise normals agree with the scalar version and zero rows fall back to uniform."""
        s_h = np.array([[0.1, 0.9, 0.0], [0.0, 0.0, 0.0]])
        s_t = np.array([[0.8, 0.0, 0.2], [0.0, 0.0, 0.0]])
        normals, norms = normal_vectors(s_h, s_t)
        np.testing.assert_allclose(normals[0], normal_vector(s_h[0], s_t[0]), atol=1e-15)
        np.testing.assert_allclose(normals[1], np.full(3, 1 / np.sqrt(3)), atol=1e-15)
        assert norms[1] == 0.0

    def test_uniform_vector(self) -> None:
        """Test the uninformative vector sums to one."""
        assert uniform_vector(4).tolist() == [0.25] * 4

    def test_random_compositions(self) -> None:
        """Test over random pairs the simplex form sums to one and is a positive multiple of the unit normal."""
        rng = np.random.default_rng(21)
        for _ in range(1000):
            dim = int(rng.integers(2, 12))
            s_h, s_t = rng.uniform(0.0, 1.0, size=dim), rng.uniform(0.0, 1.0, size=dim)
            simplex = compose_topics(s_h, s_t)
            normal = normal_vector(s_h, s_t)
            assert simplex.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.linalg.norm(normal) == pytest.approx(1.0, abs=1e-12)
            scale = simplex @ normal
            assert scale > 0.0
            np.testing.assert_allclose(simplex, scale * normal, atol=1e-12)


class TestPretrainNmf:
    """Test NMF pre-training."""

    def test_descends_on_rank_one_matrix(self) -> None:
        """Test per-epoch monotone descent to below 1% of the initial loss on a rank-1 10x10 matrix."""
        u = np.array([1, 2, 1, 2, 1, 2, 1, 2, 1, 2], dtype=np.float64)
        v = np.array([2, 1, 1, 2, 2, 1, 1, 2, 1, 2], dtype=np.float64)
        corpus = _corpus(np.outer(u, v))
        rng = np.random.default_rng(7)
        initial = topic_loss(initial_model(corpus, 2, rng), corpus)
        losses: list[float] = []
        model = pretrain_nmf(corpus, 2, 500, 1e-3, 7, on_epoch=lambda _epoch, loss: losses.append(loss))

        assert len(losses) == 500
        assert losses[0] <= initial + 1e-9
        for before, after in zip(losses, losses[1:], strict=False):
            assert after <= before + 1e-9
        assert losses[-1] < 0.01 * initial
        assert model.min_entry() >= 0.0

    def test_deterministic_for_seed(self, toy_corpus: DescriptionCorpus) -> None:
        """Test the same seed reproduces the factors bit for bit."""
        a = pretrain_nmf(toy_corpus, 3, 20, 0.01, 5)
        b = pretrain_nmf(toy_corpus, 3, 20, 0.01, 5)
        assert np.array_equal(a.entity_sem, b.entity_sem)
        assert np.array_equal(a.word_topics, b.word_topics)

    def test_undescribed_entity_keeps_uniform_vector(self) -> None:
        """Test an entity without cells keeps the uniform initialization."""
        corpus = _corpus(np.array([[2.0, 1.0], [0.0, 0.0]]))
        model = pretrain_nmf(corpus, 4, 10, 0.01, 0)
        assert model.entity_sem[1].tolist() == [0.25] * 4

    def test_rejects_invalid_arguments(self, toy_corpus: DescriptionCorpus) -> None:
        """Test zero epochs and empty corpora are configuration errors."""
        with pytest.raises(ConfigurationError):
            pretrain_nmf(toy_corpus, 3, 0, 0.01, 0)
        with pytest.raises(ConfigurationError):
            pretrain_nmf(_corpus(np.zeros((2, 2))), 3, 1, 0.01, 0)

    def test_parallel_mode_stays_nonnegative(self, toy_corpus: DescriptionCorpus) -> None:
        """Test sharded updates keep the nonnegativity constraint."""
        model = pretrain_nmf(toy_corpus, 3, 10, 0.01, 0, workers=2)
        assert model.min_entry() >= 0.0
        assert np.isfinite(model.entity_sem).all()


class TestSemanticModel:
    """Test factor persistence."""

    def test_save_and_load_exactly(self, tmp_path: Path) -> None:
        """Test the text format round-trips every float64 bit."""
        rng = np.random.default_rng(1)
        model = SemanticModel(rng.random((5, 3)), rng.random((7, 3)))
        model.save(tmp_path / "semantics.txt")
        assert (tmp_path / "semantics.txt").read_text().splitlines()[0] == "3 5 7"
        loaded = SemanticModel.load(tmp_path / "semantics.txt")
        assert np.array_equal(loaded.entity_sem, model.entity_sem)
        assert np.array_equal(loaded.word_topics, model.word_topics)

    def test_mismatched_dimensions(self) -> None:
        """Test factor widths must agree."""
        with pytest.raises(ShapeError):
            SemanticModel(np.ones((2, 3)), np.ones((2, 4)))


class TestFoldIn:
    """Test inference for unseen descriptions."""

    def test_empty_description(self) -> None:
        """Test a description without known words cannot be folded in."""
        model = _model([[1.0, 1.0]], [[1.0, 0.0]])
        with pytest.raises(FoldInError):
            fold_in(np.array([], dtype=np.int64), np.array([]), model, 10, 0.01)

    def test_model_is_not_modified(self) -> None:
        """Test word topics stay frozen and the result is nonnegative."""
        model = _model([[1.0, 1.0]], [[1.0, 0.2], [0.1, 1.0]])
        before = model.word_topics.copy()
        vec = fold_in(np.array([0, 1]), np.array([3.0, 1.0]), model, 50, 0.01)
        assert np.array_equal(model.word_topics, before)
        assert vec.shape == (2,)
        assert (vec >= 0).all()

    def test_zero_epochs_return_uniform(self) -> None:
        """Test fold-in starts from the uniform vector."""
        model = _model([[1.0, 1.0]], [[1.0, 0.0]])
        assert fold_in(np.array([0]), np.array([1.0]), model, 0, 0.01).tolist() == [0.5, 0.5]

    def test_duplicated_description_reaches_original_row_loss(self, tmp_path: Path) -> None:
        """Test folding in a copy of an entity's description fits within 5% of the trained row."""
        files = write_clustered_kg(tmp_path / "kg", n_entities=60, seed=3)
        store = build_store(files)
        corpus = load_descriptions(files.descriptions, store, Tokenizer(), min_count=1)
        model = pretrain_nmf(corpus, 2, 100, 0.01, 0)

        name, text = files.descriptions.read_text(encoding="utf-8").splitlines()[0].split("\t")
        duplicate = encode_descriptions(write_lines(tmp_path / "dup.txt", [f"copy\t{text}"]), corpus.vocab)
        word_ids, counts = duplicate.row(0)
        entity = store.entities.encode(name)

        original = row_loss(model.entity_sem[entity], *corpus.row(entity), model.word_topics)
        folded = fold_in(word_ids, counts, model, 2000, 0.01)
        assert row_loss(folded, word_ids, counts, model.word_topics) <= 1.05 * original + 1e-6

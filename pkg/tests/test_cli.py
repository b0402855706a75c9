"""End-to-end tests for the ``sspkit`` command line."""

import json
from pathlib import Path

import pytest

from sspkit.cli import build_parser, run

from .support import KGFiles, write_clustered_kg, write_lines

TRAIN_KEYS = [
    "dim = 8",
    "rate = 0.01",
    "margin = 1.0",
    "lambda = 0.2",
    "batch = 10",
    "rounds = 6",
    "checkpoint_every = 3",
    "nmf_epochs = 5",
    "seed = 3",
]


def _problem(stderr: str) -> dict[str, object]:
    lines = [line for line in stderr.splitlines() if line.startswith('{"type"')]
    assert lines, stderr
    return json.loads(lines[-1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory: pytest.TempPathFactory) -> tuple[Path, KGFiles]:
    """Prepared clustered graph with one TransE and one SSP checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    files = write_clustered_kg(root / "data", n_entities=60, n_clusters=6, n_zero_shot=6)
    config = write_lines(root / "small.conf", TRAIN_KEYS)
    prep = [
        "prep",
        f"--train={files.train}",
        f"--valid={files.valid}",
        f"--test={files.test}",
        f"--descriptions={files.descriptions}",
        "--min-count=1",
        f"--out={root / 'prep'}",
    ]
    assert run(prep) == 0
    for model in ("transe", "ssp-std"):
        argv = ["train", f"--prepared={root / 'prep'}", f"--config={config}", f"--model={model}"]
        assert run([*argv, f"--out={root / model}"]) == 0
    return root, files


class TestPrep:
    """Test ``sspkit prep``."""

    def test_summary(self, toy_files: KGFiles, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test the printed dataset statistics and the written files."""
        argv = ["prep", "--train", str(toy_files.train), "--valid", str(toy_files.valid)]
        argv += ["--test", str(toy_files.test), "--out", str(tmp_path / "prep")]
        assert run(argv) == 0
        out = capsys.readouterr().out
        assert "entities: 4" in out
        assert "relations: 2" in out
        assert "train: 4" in out
        for name in ("entities.tsv", "relations.tsv", "prep.json", "manifest.json"):
            assert (tmp_path / "prep" / name).is_file()
        manifest = json.loads((tmp_path / "prep" / "manifest.json").read_text())
        assert manifest["command"] == "prep"
        assert manifest["finished_at"] is not None

    def test_missing_file(self, toy_files: KGFiles, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test a missing input exits 66 with a problem document naming the path."""
        missing = tmp_path / "nope.txt"
        argv = ["prep", "--train", str(missing), "--valid", str(toy_files.valid)]
        argv += ["--test", str(toy_files.test), "--out", str(tmp_path / "prep")]
        assert run(argv) == 66
        problem = _problem(capsys.readouterr().err)
        assert problem["status"] == 66
        assert problem["instance"] == str(missing)
        assert "run_id" in problem

    def test_config_supplies_tokenizer_settings(self, toy_files: KGFiles, tmp_path: Path) -> None:
        """Test min_count and stop_words come from --config unless a flag overrides them."""
        config = write_lines(tmp_path / "tok.conf", [*TRAIN_KEYS, "min_count = 2", "stop_words = true"])
        argv = ["prep", "--train", str(toy_files.train), "--valid", str(toy_files.valid), "--test", str(toy_files.test)]
        argv += ["--descriptions", str(toy_files.descriptions), "--config", str(config)]
        assert run([*argv, "--out", str(tmp_path / "a")]) == 0
        recorded = json.loads((tmp_path / "a" / "prep.json").read_text())
        assert (recorded["min_count"], recorded["stop_words"]) == (2, True)

        assert run([*argv, "--min-count", "1", "--out", str(tmp_path / "b")]) == 0
        assert json.loads((tmp_path / "b" / "prep.json").read_text())["min_count"] == 1


class TestTrain:
    """Test ``sspkit train``."""

    def test_outputs(self, workspace: tuple[Path, KGFiles]) -> None:
        """Test rounds, final checkpoint, trajectory and manifest are written."""
        root, _ = workspace
        out = root / "ssp-std"
        assert (out / "rounds" / "000003" / "checkpoint.txt").is_file()
        assert (out / "rounds" / "000006" / "checkpoint.txt").is_file()
        assert (out / "checkpoint" / "semantics.txt").is_file()
        assert not (root / "transe" / "checkpoint" / "semantics.txt").exists()
        trajectory = (out / "trajectory.csv").read_text().splitlines()
        assert trajectory[0] == "round,embed_loss,topic_loss"
        assert len(trajectory) == 7
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 3
        assert manifest["config"]["lambda"] == 0.2
        assert "config_hash" in manifest["digests"]

    def test_topic_weight_in_standard_mode(
        self, workspace: tuple[Path, KGFiles], tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Test mu > 0 with ssp-std is a configuration error (exit 78)."""
        root, _ = workspace
        config = write_lines(tmp_path / "mu.conf", [*TRAIN_KEYS, "mu = 0.1"])
        argv = ["train", "--prepared", str(root / "prep"), "--config", str(config)]
        argv += ["--model", "ssp-std", "--out", str(tmp_path / "out")]
        assert run(argv) == 78
        assert _problem(capsys.readouterr().err)["status"] == 78

    def test_ssp_needs_descriptions(
        self, toy_files: KGFiles, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Test training SSP on data prepared without descriptions."""
        prep = ["prep", "--train", str(toy_files.train), "--valid", str(toy_files.valid)]
        prep += ["--test", str(toy_files.test), "--out", str(tmp_path / "prep")]
        assert run(prep) == 0
        config = write_lines(tmp_path / "small.conf", TRAIN_KEYS)
        argv = ["train", "--prepared", str(tmp_path / "prep"), "--config", str(config)]
        assert run([*argv, "--model", "ssp-std", "--out", str(tmp_path / "out")]) == 78
        capsys.readouterr()
        assert run([*argv, "--model", "transe", "--out", str(tmp_path / "out")]) == 0

    def test_tokenizer_settings_follow_prepared_data(self, workspace: tuple[Path, KGFiles]) -> None:
        """Test the checkpoint config records the tokenizer settings used by prep."""
        root, _ = workspace
        snapshot = json.loads((root / "ssp-std" / "checkpoint" / "config.json").read_text())
        assert (snapshot["min_count"], snapshot["stop_words"]) == (1, False)

    def test_tokenizer_mismatch(
        self, workspace: tuple[Path, KGFiles], tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Test a config min_count other than the prepared one is a configuration error (exit 78)."""
        root, _ = workspace
        config = write_lines(tmp_path / "mismatch.conf", [*TRAIN_KEYS, "min_count = 5"])
        argv = ["train", "--prepared", str(root / "prep"), "--config", str(config)]
        assert run([*argv, "--model", "transe", "--out", str(tmp_path / "out")]) == 78
        problem = _problem(capsys.readouterr().err)
        assert problem["instance"] == str(config)
        assert "min_count" in str(problem["detail"])


class TestEvaluate:
    """Test ``sspkit eval-link``, ``eval-rel`` and ``eval-class``."""

    def test_link_prediction_report(self, workspace: tuple[Path, KGFiles], tmp_path: Path) -> None:
        """Test the report layout and byte-identical output across runs and worker counts."""
        root, _ = workspace
        argv = ["eval-link", "--checkpoint", str(root / "ssp-std" / "checkpoint"), "--prepared", str(root / "prep")]
        assert run([*argv, "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
        assert run([*argv, "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
        report = (tmp_path / "a" / "report.csv").read_bytes()
        assert report == (tmp_path / "b" / "report.csv").read_bytes()
        lines = report.decode().splitlines()
        assert lines[0] == "metric,target,setting,value"
        assert lines[1].startswith("mean_rank,all,raw,")
        assert {line.split(",")[1] for line in lines[1:]} == {"all", "head", "tail"}
        hits = float(next(line for line in lines if line.startswith("hits10,all,filtered,")).split(",")[3])
        assert 0.0 <= hits <= 100.0

    def test_relation_prediction_report(self, workspace: tuple[Path, KGFiles], tmp_path: Path) -> None:
        """Test relation prediction reports the relation target only."""
        root, _ = workspace
        argv = ["eval-rel", "--checkpoint", str(root / "transe" / "checkpoint"), "--prepared", str(root / "prep")]
        assert run([*argv, "--out", str(tmp_path / "rel"), "--split", "valid", "--workers", "1"]) == 0
        lines = (tmp_path / "rel" / "report.csv").read_text().splitlines()
        assert {line.split(",")[1] for line in lines[1:]} == {"all", "relation"}

    def test_classification_with_zero_shot(
        self, workspace: tuple[Path, KGFiles], tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Test MAP is reported and every zero-shot entity is folded in."""
        root, files = workspace
        assert files.zero_shot is not None
        config = write_lines(tmp_path / "eval.conf", ["clf_epochs = 50", "fold_in_epochs = 20"])
        argv = [
            "eval-class",
            f"--checkpoint={root / 'ssp-std' / 'checkpoint'}",
            f"--prepared={root / 'prep'}",
            f"--labels-train={files.labels_train}",
            f"--labels-test={files.labels_test}",
            f"--zero-shot-desc={files.zero_shot}",
            f"--config={config}",
            f"--out={tmp_path / 'clf'}",
        ]
        assert run(argv) == 0
        assert "MAP (joint)" in capsys.readouterr().out
        rows = {
            line.split(",")[0]: line.split(",")[3]
            for line in (tmp_path / "clf" / "report.csv").read_text().splitlines()[1:]
        }
        assert 0.0 <= float(rows["map"]) <= 100.0
        assert rows["zero_shot"] == "6"

    def test_classification_without_test_entities(
        self, workspace: tuple[Path, KGFiles], tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Test an empty test label file is an input error."""
        root, files = workspace
        argv = [
            "eval-class",
            f"--checkpoint={root / 'transe' / 'checkpoint'}",
            f"--prepared={root / 'prep'}",
            f"--labels-train={files.labels_train}",
            f"--labels-test={write_lines(tmp_path / 'none.txt', [])}",
            f"--out={tmp_path / 'clf'}",
        ]
        assert run(argv) == 66
        assert _problem(capsys.readouterr().err)["status"] == 66


class TestAnalyze:
    """Test ``sspkit analyze`` comparing a checkpoint with itself and with another model."""

    @staticmethod
    def _argv(root: Path, out: Path, analysis: str, b: str = "ssp-std") -> list[str]:
        return [
            "analyze",
            f"--checkpoint-a={root / 'ssp-std' / 'checkpoint'}",
            f"--checkpoint-b={root / b / 'checkpoint'}",
            f"--prepared={root / 'prep'}",
            f"--analysis={analysis}",
            f"--out={out}",
            "--workers=1",
        ]

    def test_self_rank_pairs(self, workspace: tuple[Path, KGFiles], tmp_path: Path) -> None:
        """Test a model compared with itself fills no cell."""
        root, _ = workspace
        assert run(self._argv(root, tmp_path, "rankpairs")) == 0
        lines = (tmp_path / "rankpairs.csv").read_text().splitlines()
        assert lines[0] == "threshold_a,threshold_b,count"
        assert [line.split(",")[2] for line in lines[1:]] == ["0"] * 5

    def test_self_score_difference(
        self, workspace: tuple[Path, KGFiles], tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        """Test the baseline's own hard pairs never count as a success."""
        root, _ = workspace
        assert run(self._argv(root, tmp_path, "scorediff")) == 0
        assert "success_rate,0.0" in capsys.readouterr().out
        lines = (tmp_path / "histogram.csv").read_text().splitlines()
        assert lines[0] == "bin_left,bin_right,count"

    def test_improvements(self, workspace: tuple[Path, KGFiles], tmp_path: Path) -> None:
        """Test improvements against a second model list decoded triples with falling ranks."""
        root, _ = workspace
        assert run([*self._argv(root, tmp_path, "improvements", b="transe"), "--top=5"]) == 0
        lines = (tmp_path / "improvements.csv").read_text().splitlines()
        assert lines[0] == "head,relation,tail,target,rank_a,rank_b"
        assert len(lines) <= 6
        for line in lines[1:]:
            head, relation, _, target, rank_a, rank_b = line.split(",")
            assert head.startswith("e") and relation.startswith("r")
            assert target in ("head", "tail")
            assert int(rank_b) < int(rank_a)


def test_parser_rejects_unknown_model() -> None:
    """Test the model flag only accepts the three supported models."""
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train", "--prepared=p", "--config=c", "--model=rescal", "--out=o"])

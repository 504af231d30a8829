import json
import sys
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from stabletree import tree_from_json
from stabletree.cli import cli, main
from stabletree.dataio import load_dataset, load_schema, save_dataset, save_schema
from stabletree.errors import DataError
from stabletree import Dataset

FIXTURE = str(Path(__file__).parent / "external_oracle_fixture.py")


@pytest.fixture
def runner():
    return CliRunner()


class TestDataIO:
    def test_schema_roundtrip(self, mixed_schema, tmp_path):
        path = tmp_path / "schema.json"
        save_schema(mixed_schema, path)
        assert load_schema(path) == mixed_schema

    def test_dataset_roundtrip(self, mixed_schema, tmp_path):
        rows = np.array([[0.5, -1.25, 2.0], [0.25, 3.5, 0.0]])
        labels = np.array([1, 0])
        data = Dataset(mixed_schema, rows, labels)
        path = tmp_path / "data.csv"
        save_dataset(data, path)
        back = load_dataset(mixed_schema, path, require_labels=True)
        assert np.array_equal(back.rows, rows)
        assert np.array_equal(back.labels, labels)

    def test_missing_label_column_named(self, mixed_schema, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("age,score,grade\n0.5,1.0,2\n")
        with pytest.raises(DataError, match="label"):
            load_dataset(mixed_schema, path, require_labels=True)

    def test_missing_covariate_named(self, mixed_schema, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("age,grade,label\n0.5,2,neg\n")
        with pytest.raises(DataError, match="score"):
            load_dataset(mixed_schema, path)

    def test_bad_cell_reports_line_and_column(self, mixed_schema, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("age,score,grade,label\n0.5,oops,2,neg\n")
        with pytest.raises(DataError, match="line 2.*score"):
            load_dataset(mixed_schema, path)

    def test_ordinal_out_of_range_rejected(self, mixed_schema, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("age,score,grade,label\n0.5,1.0,9,neg\n")
        with pytest.raises(DataError):
            load_dataset(mixed_schema, path)

    def test_unknown_label_value_rejected(self, mixed_schema, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("age,score,grade,label\n0.5,1.0,2,maybe\n")
        with pytest.raises(DataError, match="maybe"):
            load_dataset(mixed_schema, path)


def run_pipeline(runner, tmp_path, seed=3, extra_distill=()):
    data = tmp_path / "d.csv"
    schema = tmp_path / "s.json"
    forest = tmp_path / "forest.bin"
    tree = tmp_path / "tree.json"
    steps = [
        ["simulate", "--n", "250", "--seed", str(seed), "--out", str(data),
         "--schema-out", str(schema)],
        ["fit-oracle", "--data", str(data), "--schema", str(schema),
         "--trees", "10", "--seed", str(seed), "--out", str(forest)],
        ["distill", "--oracle", str(forest), "--data", str(data),
         "--schema", str(schema), "--alpha", "0.1", "--n-initial", "150",
         "--nps", "600", "--max-depth", "3", "--seed", str(seed),
         "--out", str(tree), *extra_distill],
    ]
    for step in steps:
        result = runner.invoke(cli, step, catch_exceptions=False)
        assert result.exit_code == 0, result.output
    return data, schema, forest, tree


class TestPipeline:
    def test_simulate_fit_distill_evaluate_export(self, runner, tmp_path):
        data, schema, forest, tree = run_pipeline(runner, tmp_path)
        for artifact in (data, schema, forest, tree):
            assert artifact.exists()
        assert Path(str(tree) + ".manifest.json").exists()

        parsed = tree_from_json(tree.read_text())
        assert parsed.depth() <= 3
        assert parsed.internal_count() <= 2**3 - 1

        report = tmp_path / "report.json"
        result = runner.invoke(cli, [
            "evaluate", "--tree", str(tree), "--oracle", str(forest),
            "--data", str(data), "--schema", str(schema), "--out", str(report),
        ], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        payload = json.loads(report.read_text())
        assert 0.0 <= payload["mimic"]["class_agreement"] <= 1.0
        assert "predictive_accuracy" in payload
        assert "class_agreement" in result.output

        dot = tmp_path / "tree.dot"
        result = runner.invoke(cli, [
            "export", "--tree", str(tree), "--format", "dot", "--out", str(dot),
        ], catch_exceptions=False)
        assert result.exit_code == 0
        assert dot.read_text().startswith("digraph")

    def test_distill_deterministic_and_thread_invariant(self, runner, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        *_, tree_a = run_pipeline(runner, tmp_path / "a", seed=5)
        *_, tree_b = run_pipeline(runner, tmp_path / "b", seed=5,
                                  extra_distill=["--threads", "4"])
        assert tree_a.read_bytes() == tree_b.read_bytes()
        manifest_a = json.loads((tmp_path / "a/tree.json.manifest.json").read_text())
        manifest_b = json.loads((tmp_path / "b/tree.json.manifest.json").read_text())
        assert manifest_a["outputs"] and list(manifest_a["outputs"].values()) == list(
            manifest_b["outputs"].values()
        )

    def test_alpha_one_is_cart_mode(self, runner, tmp_path):
        *_, tree = run_pipeline(
            runner, tmp_path, extra_distill=["--alpha", "1.0"]
        )
        doc = json.loads(tree.read_text())
        assert doc["root"]["diagnostics"]["final_aggregate_pvalue"] == "testing-disabled"

    def test_external_oracle_flow(self, runner, tmp_path):
        data, schema, forest, tree = run_pipeline(runner, tmp_path)
        tree2 = tmp_path / "tree2.json"
        result = runner.invoke(cli, [
            "distill", "--external-oracle", f"{sys.executable} {FIXTURE}",
            "--data", str(data), "--schema", str(schema),
            "--alpha", "0.1", "--n-initial", "100", "--nps", "400",
            "--max-depth", "2", "--seed", "1", "--out", str(tree2),
        ], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        assert tree2.exists()

    def test_stability_command(self, runner, tmp_path):
        data, schema, forest, _ = run_pipeline(runner, tmp_path)
        out = tmp_path / "stability.json"
        keys = tmp_path / "keys.csv"
        result = runner.invoke(cli, [
            "stability", "--oracle", str(forest), "--data", str(data),
            "--schema", str(schema), "--replicates", "3", "--depths", "1,2",
            "--n-initial", "100", "--nps", "400", "--max-depth", "2",
            "--seed", "2", "--out", str(out), "--keys-csv", str(keys),
        ], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert sum(payload["histograms"]["1"].values()) == 3
        assert keys.read_text().startswith("depth,structure_key,count")


class TestExitCodes:
    def _main_exit(self, monkeypatch, argv):
        monkeypatch.setattr(sys, "argv", ["stabletree", *argv])
        with pytest.raises(SystemExit) as excinfo:
            main()
        return excinfo.value.code

    def test_usage_error_is_2(self, runner, tmp_path, monkeypatch):
        data, schema, forest, _ = run_pipeline(runner, tmp_path)
        code = self._main_exit(monkeypatch, [
            "stability", "--oracle", str(forest), "--data", str(data),
            "--schema", str(schema), "--replicates", "1", "--out",
            str(tmp_path / "x.json"),
        ])
        assert code == 2

    def test_data_error_is_3(self, runner, tmp_path, monkeypatch):
        data, schema, forest, _ = run_pipeline(runner, tmp_path)
        bad = tmp_path / "bad.csv"
        bad.write_text("nope\n1\n")
        code = self._main_exit(monkeypatch, [
            "fit-oracle", "--data", str(bad), "--schema", str(schema),
            "--trees", "2", "--out", str(tmp_path / "f.bin"),
        ])
        assert code == 3

    def test_oracle_error_is_4(self, runner, tmp_path, monkeypatch):
        data, schema, forest, _ = run_pipeline(runner, tmp_path)
        code = self._main_exit(monkeypatch, [
            "distill", "--external-oracle", f"{sys.executable} {FIXTURE} crash",
            "--data", str(data), "--schema", str(schema),
            "--n-initial", "50", "--nps", "100", "--max-depth", "2",
            "--out", str(tmp_path / "t.json"),
        ])
        assert code == 4

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from poismix import io
from poismix.cli import main
from poismix.cmp import SpikeDataset
from poismix.errors import SchemaError
from poismix.evaluation import empirical_correlations, one_component_fit
from poismix.synth import GroundTruthSpec, generate_ground_truth

FAST_FIT = ["--epochs", "6", "--restarts", "2"]


def run(*argv):
    assert main([str(a) for a in argv]) == 0


def file_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    run("synth", "--seed", 3, "--out", out)
    return out


@pytest.fixture(scope="module")
def fit_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    run("fit", "--dataset", synth_dir / "dataset.csv", "--truth", synth_dir / "truth.json",
        "--algorithm", "all", "--seed", 1, "--out", out, *FAST_FIT)
    return out


def read_rows(path, kind):
    columns, rows = io.read_table(path, kind)
    return columns, rows


class TestDatasetIO:
    def test_round_trip(self, tmp_path, rng):
        d = SpikeDataset(rng.poisson(3, size=(10, 4)), rng.uniform(0, np.pi, 10))
        io.write_dataset(tmp_path / "d.csv", d)
        back = io.read_dataset(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.counts, d.counts)
        np.testing.assert_array_equal(back.stimuli, d.stimuli)

    def test_header_comment_optional(self, tmp_path):
        (tmp_path / "d.csv").write_text("stimulus,n_1,n_2\n0.5,1,2\n1.0,0,3\n")
        d = io.read_dataset(tmp_path / "d.csv")
        assert d.counts.tolist() == [[1, 2], [0, 3]]

    def test_wrong_version_rejected(self, tmp_path):
        (tmp_path / "d.csv").write_text("# poismix-dataset v2\nstimulus,n_1\n0.5,1\n")
        with pytest.raises(SchemaError, match="v2"):
            io.read_dataset(tmp_path / "d.csv")

    def test_bad_cell_names_row_and_column(self, tmp_path):
        (tmp_path / "d.csv").write_text("stimulus,n_1,n_2\n0.5,1,2\n1.0,x,3\n")
        with pytest.raises(SchemaError, match=r"d\.csv:3: column 'n_1'"):
            io.read_dataset(tmp_path / "d.csv")

    @pytest.mark.parametrize(
        "text, fragment",
        [("stimulus,n_1\n0.5,-1\n", "negative"), ("stimulus,n_1\n0.5,1,2\n", "fields"),
         ("stim,n_1\n0.5,1\n", "header"), ("stimulus,n_1\nabc,1\n", "stimulus"), ("", "empty")],
    )
    def test_malformed(self, tmp_path, text, fragment):
        (tmp_path / "d.csv").write_text(text)
        with pytest.raises(SchemaError, match=fragment):
            io.read_dataset(tmp_path / "d.csv")

    def test_table_kind_checked(self, tmp_path):
        io.write_table(tmp_path / "t.csv", "weights", ["a"], [[1.0]])
        with pytest.raises(SchemaError):
            io.read_table(tmp_path / "t.csv", "tuning")


class TestParamsIO:
    def test_round_trip_exact(self, tmp_path):
        p = generate_ground_truth(GroundTruthSpec(n_neurons=5, n_latent=2, seed=1))
        io.write_params(tmp_path / "p.json", p)
        back = io.read_params(tmp_path / "p.json")
        for a, b in zip(p.arrays(), back.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_schema_version_checked(self, tmp_path):
        p = generate_ground_truth(GroundTruthSpec(n_neurons=2, n_latent=1, seed=1))
        data = io.params_to_dict(p)
        data["version"] = 99
        (tmp_path / "p.json").write_text(json.dumps(data))
        with pytest.raises(SchemaError):
            io.read_params(tmp_path / "p.json")


class TestSynthCommand:
    def test_default_dataset_layout(self, synth_dir):
        lines = (synth_dir / "dataset.csv").read_text().splitlines()
        assert lines[0] == "# poismix-dataset v1"
        assert lines[1] == "stimulus," + ",".join(f"n_{k}" for k in range(1, 21))
        assert len(lines) == 2 + 496

    def test_outputs(self, synth_dir):
        names = {p.name for p in synth_dir.iterdir()}
        assert {"truth.json", "dataset.csv", "truth_weights.csv", "truth_tuning.csv",
                "truth_correlations.csv", "synth_summary.json"} <= names

    def test_rerun_byte_identical(self, synth_dir, tmp_path):
        run("synth", "--seed", 3, "--out", tmp_path)
        assert file_bytes(tmp_path) == file_bytes(synth_dir)

    def test_large_population_is_fast(self, tmp_path):
        start = time.perf_counter()
        run("synth", "--neurons", 200, "--out", tmp_path)
        assert time.perf_counter() - start < 10
        assert io.read_dataset(tmp_path / "dataset.csv").n_neurons == 200


class TestFitCommand:
    def test_trace_columns(self, fit_dir):
        columns, rows = read_rows(fit_dir / "traces.csv", "traces")
        assert columns == ["epoch", "em", "sgd", "hybrid"]
        assert [int(r[0]) for r in rows] == list(range(7))

    def test_reports_and_bounds(self, fit_dir):
        bounds = json.loads((fit_dir / "bounds.json").read_text())
        assert bounds["lower_bound_nll"] < bounds["upper_bound_nll"]
        for alg in ("em", "sgd", "hybrid"):
            report = json.loads((fit_dir / f"fit_{alg}.json").read_text())
            assert len(report["nll_trace"]) == 7
            for suffix in ("weights", "tuning", "correlations"):
                assert (fit_dir / f"fit_{alg}_{suffix}.csv").exists()

    def test_default_run_beats_one_component(self, synth_dir, tmp_path):
        run("fit", "--dataset", synth_dir / "dataset.csv", "--algorithm", "hybrid",
            "--epochs", 40, "--restarts", 2, "--out", tmp_path)
        report = json.loads((tmp_path / "fit_hybrid.json").read_text())
        _, upper = one_component_fit(io.read_dataset(synth_dir / "dataset.csv"))
        assert report["nll_trace"][-1] < upper

    def test_byte_identical_with_parallel_restarts(self, synth_dir, fit_dir, tmp_path):
        run("fit", "--dataset", synth_dir / "dataset.csv", "--truth", synth_dir / "truth.json",
            "--algorithm", "all", "--seed", 1, "--out", tmp_path, "--jobs", 2, *FAST_FIT)
        assert file_bytes(tmp_path) == file_bytes(fit_dir)


class TestCvCommand:
    def test_single_component_grid(self, synth_dir, tmp_path):
        run("cv", "--dataset", synth_dir / "dataset.csv", "--component-grid", "1", "--folds", 3,
            "--out", tmp_path, *FAST_FIT)
        columns, rows = read_rows(tmp_path / "cv_gain.csv", "cv")
        assert len(rows) == 1 and float(rows[0][columns.index("relative_gain")]) == 0.0

    def test_deterministic(self, synth_dir, tmp_path):
        args = ["cv", "--dataset", synth_dir / "dataset.csv", "--component-grid", "1,2",
                "--folds", 3, *FAST_FIT]
        run(*args, "--out", tmp_path / "a")
        run(*args, "--out", tmp_path / "b")
        assert file_bytes(tmp_path / "a") == file_bytes(tmp_path / "b")


@pytest.fixture(scope="module")
def report_dir(synth_dir, fit_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("report")
    run("report", "--dataset", synth_dir / "dataset.csv", "--params", fit_dir / "fit_hybrid.json",
        "--stimuli", "0,0.33pi,0.67pi", "--out", out)
    return out


class TestReportCommand:
    def load(self, report_dir):
        columns, rows = read_rows(report_dir / "paired_correlations.csv", "paired-correlations")
        return [dict(zip(columns, r)) for r in rows]

    def test_diagonal_is_one(self, report_dir):
        for row in self.load(report_dir):
            if row["row"] == row["col"]:
                assert float(row["correlation"]) == 1.0

    def test_selected_stimuli(self, report_dir):
        stimuli = sorted({float(r["stimulus"]) for r in self.load(report_dir)})
        np.testing.assert_allclose(stimuli, [0.0, 0.33 * np.pi, 0.67 * np.pi])

    def test_upper_triangle_is_empirical(self, report_dir, synth_dir):
        emp_stimuli, emp = empirical_correlations(io.read_dataset(synth_dir / "dataset.csv"))
        for row in self.load(report_dir):
            i, j = int(row["row"]) - 1, int(row["col"]) - 1
            if j > i:
                g = int(np.flatnonzero(emp_stimuli == float(row["upper_stimulus"]))[0])
                assert float(row["correlation"]) == emp[g, i, j]

    def test_missing_params_names_producer(self, synth_dir, tmp_path, capsys):
        assert main(["report", "--dataset", str(synth_dir / "dataset.csv"), "--out", str(tmp_path)]) == 1
        err = capsys.readouterr().err.strip()
        assert err.startswith("ConfigError:") and "poismix fit" in err and "\n" not in err


class TestConfig:
    def test_file_then_flags(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[synth]\nneurons = 3\ntrials = 5\n")
        run("synth", "--config", cfg, "--trials", 7, "--out", tmp_path / "o")
        d = io.read_dataset(tmp_path / "o" / "dataset.csv")
        assert d.n_neurons == 3 and len(d) == 8 * 7

    @pytest.mark.parametrize(
        "text", ["[synth]\nbogus = 1\n", "[nonsense]\nx = 1\n", "[synth]\nneurons = many\n"]
    )
    def test_bad_config_rejected(self, tmp_path, capsys, text):
        cfg = tmp_path / "run.ini"
        cfg.write_text(text)
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert capsys.readouterr().err.startswith("ConfigError:")
        assert not (tmp_path / "o").exists()

    def test_malformed_dataset_exit_code(self, tmp_path):
        (tmp_path / "d.csv").write_text("stimulus,n_1\n0.1,oops\n")
        proc = subprocess.run(
            [sys.executable, "-m", "poismix", "fit", "--dataset", str(tmp_path / "d.csv"),
             "--out", str(tmp_path / "o")],
            capture_output=True, text=True,
        )
        assert proc.returncode != 0
        lines = proc.stderr.strip().splitlines()
        assert len(lines) == 1 and lines[0].startswith("SchemaError:") and ":2: column 'n_1'" in lines[0]

    def test_inputs_not_modified(self, synth_dir, tmp_path):
        before = file_bytes(synth_dir)
        run("fit", "--dataset", synth_dir / "dataset.csv", "--algorithm", "sgd", "--out", tmp_path, *FAST_FIT)
        assert file_bytes(synth_dir) == before

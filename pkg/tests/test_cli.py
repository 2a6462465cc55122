"""Command-line surface: subcommands, exit codes, artifact layout."""
import json

import numpy as np
import pytest

from irtm.cli import main
from irtm.model import ConstraintSet, ResponseMatrix
from irtm.sampling import RngStream
from irtm.storage import read_response_matrix, write_constraints, write_response_matrix

NA = np.nan


@pytest.fixture
def workdir(tmp_path):
    gen = RngStream(8).generator
    values = gen.integers(0, 2, size=(10, 6)).astype(float)
    data = ResponseMatrix(values, tuple(f"u{i}" for i in range(10)))
    codes = np.array(
        [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [NA, 1.0], [1.0, NA]]
    )
    constraints = ConstraintSet(codes, ("econ", "social"), data.item_ids)
    write_response_matrix(data, tmp_path / "y.csv")
    write_constraints(constraints, tmp_path / "m.csv")
    return tmp_path


def _fit_args(workdir, out="out", extra=()):
    return [
        "fit",
        "--method",
        "irtm",
        "--data",
        str(workdir / "y.csv"),
        "--m",
        str(workdir / "m.csv"),
        "--iters",
        "60",
        "--burnin",
        "40",
        "--chains",
        "2",
        "--seed",
        "7",
        "--out",
        str(workdir / out),
        *extra,
    ]


class TestFit:
    def test_fit_writes_draws_and_summary(self, workdir, capsys):
        assert main(_fit_args(workdir)) == 0
        out = workdir / "out"
        for name in ("theta.csv", "lambda.csv", "b.csv", "sigma.csv", "summary.json", "run_config.txt"):
            assert (out / name).exists()
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["theta"]["mean"]) == 10
        assert summary["config_digest"]

    def test_underidentified_exit_code(self, workdir, tmp_path, capsys):
        # all-missing codes, no anchors possible
        bad = ConstraintSet(np.full((6, 2), NA), item_ids=read_response_matrix(workdir / "y.csv").item_ids)
        write_constraints(bad, workdir / "bad.csv")
        args = _fit_args(workdir, out="out2")
        args[args.index("--m") + 1] = str(workdir / "bad.csv")
        assert main(args) == 2
        err = capsys.readouterr().err
        assert "UNDERIDENTIFIED" in err
        assert main(args + ["--force"]) == 0

    def test_usage_error_exit_code(self, capsys):
        assert main(["fit", "--method", "mystery"]) == 1

    def test_missing_file_exit_code(self, workdir, capsys):
        args = _fit_args(workdir)
        args[args.index("--data") + 1] = str(workdir / "nope.csv")
        assert main(args) == 2

    def test_pca_and_irt_methods(self, workdir, capsys):
        args = [
            "fit", "--method", "pca", "--data", str(workdir / "y.csv"),
            "--d", "2", "--out", str(workdir / "pca_out"),
        ]
        assert main(args) == 0
        doc = json.loads((workdir / "pca_out" / "summary.json").read_text())
        assert np.asarray(doc["scores"]).shape == (10, 2)
        args = [
            "fit", "--method", "irt", "--data", str(workdir / "y.csv"),
            "--d", "2", "--iters", "50", "--burnin", "30", "--chains", "1",
            "--out", str(workdir / "irt_out"),
        ]
        assert main(args) == 0

    def test_bit_identical_reruns(self, workdir, capsys):
        assert main(_fit_args(workdir, out="r1")) == 0
        assert main(_fit_args(workdir, out="r2")) == 0
        for name in ("theta.csv", "lambda.csv", "b.csv", "sigma.csv", "summary.json"):
            assert (workdir / "r1" / name).read_bytes() == (workdir / "r2" / name).read_bytes()


class TestDiagnose:
    def test_report_structure(self, workdir, capsys):
        main(_fit_args(workdir))
        out = workdir / "report.json"
        code = main(["diagnose", "--draws", str(workdir / "out"), "--param", "theta", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["param"] == "theta"
        first = next(iter(doc["coordinates"].values()))
        assert set(first) >= {"ess", "rhat", "geweke_z", "geweke_p"}
        assert len(doc["coordinates"]) == 10 * 2


class TestAnchorsCommand:
    def test_emits_augmented_matrix_and_mask(self, workdir, capsys):
        out = workdir / "anch"
        code = main(
            ["anchors", "--data", str(workdir / "y.csv"), "--m", str(workdir / "m.csv"), "--out", str(out)]
        )
        assert code == 0
        augmented = read_response_matrix(out / "augmented.csv")
        assert augmented.n_units == 10 + 4
        mask = json.loads((out / "anchor_mask.json").read_text())
        assert len(mask["anchor_rows"]) == 4


class TestEncodeCommand:
    def test_encode_roundtrip(self, tmp_path, capsys):
        (tmp_path / "raw.csv").write_text(
            "unit_id,mood,age\nu1,good,25\nu2,bad,41\nu3,NA,33\n"
        )
        schema = {
            "columns": [
                {"name": "mood", "kind": "categorical", "categories": ["good", "bad"]},
                {"name": "age", "kind": "continuous", "threshold": 30},
            ]
        }
        (tmp_path / "schema.json").write_text(json.dumps(schema))
        code = main(
            [
                "encode",
                "--data", str(tmp_path / "raw.csv"),
                "--schema", str(tmp_path / "schema.json"),
                "--out", str(tmp_path / "encoded.csv"),
                "--map-out", str(tmp_path / "map.json"),
            ]
        )
        assert code == 0
        encoded = read_response_matrix(tmp_path / "encoded.csv")
        assert encoded.item_ids == ("mood=good", "mood=bad", "age>30")
        np.testing.assert_array_equal(encoded.values[0], [1.0, 0.0, 0.0])
        assert np.isnan(encoded.values[2, 0])


class TestSimulateAndBench:
    def test_simulate_writes_dataset(self, tmp_path, capsys):
        code = main(
            ["simulate", "--n", "20", "--k", "10", "--d", "2", "--out", str(tmp_path / "sim")]
        )
        assert code == 0
        data = read_response_matrix(tmp_path / "sim" / "responses.csv")
        assert data.n_units == 20
        truth = json.loads((tmp_path / "sim" / "truth.json").read_text())
        assert np.asarray(truth["theta"]).shape == (20, 2)

    def test_bench_outputs_and_determinism(self, tmp_path, capsys):
        args = [
            "bench", "--n-units", "15", "--n-items", "8", "--n-factors", "2",
            "--replicates", "2", "--methods", "pca,irtm-uncorr",
            "--iters", "60", "--burnin", "40", "--chains", "1",
            "--seed", "5",
        ]
        assert main(args + ["--out", str(tmp_path / "b1")]) == 0
        assert main(args + ["--out", str(tmp_path / "b2")]) == 0
        results1 = (tmp_path / "b1" / "results.csv").read_bytes()
        results2 = (tmp_path / "b2" / "results.csv").read_bytes()
        assert results1 == results2
        assert (tmp_path / "b1" / "timings.csv").exists()
        assert (tmp_path / "b1" / "aggregate.csv").exists()
        manifest = json.loads((tmp_path / "b1" / "manifest.json").read_text())
        assert manifest["n_rows"] == 4
        assert manifest["n_failed"] == 0

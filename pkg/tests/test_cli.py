import csv
import json
import os

import numpy as np
import pytest

from eigengp import cli


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    code = run(["gen-data", "xsinx3", "--out", str(out),
                "--n-train", "80", "--n-test", "60", "--seed", "3"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def trained(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("model")
    code = run(["train", "--data", str(data_dir / "train.csv"),
                "--method", "eigengp", "--m", "8", "--max-evals", "40",
                "--cycles", "1", "--seed", "0", "--out", str(out)])
    assert code == 0
    return out


def test_gen_data_writes_expected_files(data_dir):
    assert (data_dir / "train.csv").exists()
    assert (data_dir / "test.csv").exists()
    side = json.loads((data_dir / "train.provenance.json").read_text())
    assert "schema_version" in side
    assert "dataset_group" in side


def test_gen_data_byte_identical_across_runs(data_dir, tmp_path):
    out2 = tmp_path / "again"
    assert run(["gen-data", "xsinx3", "--out", str(out2),
                "--n-train", "80", "--n-test", "60", "--seed", "3"]) == 0
    assert (data_dir / "train.csv").read_bytes() == \
        (out2 / "train.csv").read_bytes()


def test_gen_data_bad_args_exit_usage(tmp_path):
    assert run(["gen-data", "xsinx3", "--out", str(tmp_path / "x"),
                "--n-train", "0"]) == cli.EXIT_USAGE
    assert run(["gen-data", "nope", "--out", str(tmp_path / "x")]) == \
        cli.EXIT_USAGE
    assert run(["not-a-command"]) == cli.EXIT_USAGE


def test_train_outputs(trained):
    doc = json.loads((trained / "model.json").read_text())
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    assert doc["method"] == "eigengp"
    summary = json.loads((trained / "summary.json").read_text())
    assert np.isfinite(summary["log_evidence"])
    with open(trained / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) > 0
    accepted = [float(r["objective"]) for r in rows if r["accepted"] == "1"]
    assert all(b <= a + 1e-12 for a, b in zip(accepted, accepted[1:]))


def test_predict_and_eval(trained, data_dir, tmp_path):
    pred_csv = tmp_path / "pred.csv"
    assert run(["predict", "--model", str(trained / "model.json"),
                "--data", str(data_dir / "test.csv"),
                "--out", str(pred_csv)]) == 0
    with open(pred_csv) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 60
    assert all(float(r["variance"]) > 0 for r in rows)

    report_json = tmp_path / "report.json"
    assert run(["eval", "--model", str(trained / "model.json"),
                "--data", str(data_dir / "test.csv"),
                "--out", str(report_json)]) == 0
    report = json.loads(report_json.read_text())
    assert report["nmse"] < 1.0
    assert report["n_test"] == 60
    assert report["nmse_denominator"] == "standard"


def test_eval_provenance_mismatch_and_force(trained, tmp_path):
    other = tmp_path / "other"
    assert run(["gen-data", "xsinx3", "--out", str(other),
                "--n-train", "80", "--n-test", "60", "--seed", "99"]) == 0
    out = tmp_path / "r.json"
    code = run(["eval", "--model", str(trained / "model.json"),
                "--data", str(other / "test.csv"), "--out", str(out)])
    assert code == cli.EXIT_PROVENANCE
    assert not out.exists()
    code = run(["eval", "--model", str(trained / "model.json"),
                "--data", str(other / "test.csv"), "--out", str(out),
                "--force"])
    assert code == 0


def test_eval_requires_ybar_for_detached_model(trained, data_dir, tmp_path):
    # strip the stored training-target mean to simulate a detached model
    doc = json.loads((trained / "model.json").read_text())
    doc.pop("train_y", None)
    doc.pop("ybar_train", None)
    detached = tmp_path / "detached.json"
    detached.write_text(json.dumps(doc))
    out = tmp_path / "r.json"
    code = run(["eval", "--model", str(detached),
                "--data", str(data_dir / "test.csv"), "--out", str(out)])
    assert code == cli.EXIT_USAGE
    assert run(["eval", "--model", str(detached),
                "--data", str(data_dir / "test.csv"),
                "--out", str(out), "--ybar-train", "0.5"]) == 0


def test_train_bad_m_exits_usage(data_dir, tmp_path):
    assert run(["train", "--data", str(data_dir / "train.csv"),
                "--m", "0", "--out", str(tmp_path / "m")]) == cli.EXIT_USAGE


def test_gradcheck_ok_and_guarded():
    assert run(["gradcheck", "--mode", "joint", "--seed", "1"]) == 0
    assert run(["gradcheck", "--mode", "joint", "--degenerate-b"]) == 0


def test_benchmark_single_cell(tmp_path):
    out = tmp_path / "bench.csv"
    code = run(["benchmark", "--dataset", "xsinx3", "--methods", "nystrom",
                "--m-list", "8", "--n-seeds", "1", "--max-evals", "20",
                "--out", str(out)])
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["method"] == "nystrom"
    assert rows[0]["error"] == ""
    assert float(rows[0]["nmse"]) > 0
    summary = json.loads(
        (tmp_path / "bench.summary.json").read_text())
    assert "schema_version" in summary


def test_version_flag_exits_zero(capsys):
    assert run(["--version"]) == 0

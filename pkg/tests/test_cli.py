import json

import numpy as np
from click.testing import CliRunner

from confot import io as dio
from confot.cli import main


def _synth(runner, tmp_path, shift="prior"):
    prefix = str(tmp_path / "syn")
    result = runner.invoke(main, ["gen-synth", "--classes", "5", "--cal", "150", "--test", "150",
                                  "--shift", shift, "--seed", "4", "--out-prefix", prefix])
    assert result.exit_code == 0, result.output
    return prefix + ".logits.bin", prefix + ".labels.csv"


def test_gen_synth_and_validate(tmp_path):
    runner = CliRunner()
    logits, labels = _synth(runner, tmp_path)
    assert dio.load_logits(logits).shape == (5, 300)
    result = runner.invoke(main, ["validate", "--logits", logits, "--labels", labels])
    assert result.exit_code == 0 and "300 samples, 5 classes" in result.output


def test_validate_reports_data_errors(tmp_path):
    runner = CliRunner()
    logits, labels = _synth(runner, tmp_path)
    (tmp_path / "short.csv").write_text("label\n0\n1\n")
    result = runner.invoke(main, ["validate", "--logits", logits, "--labels", str(tmp_path / "short.csv")])
    assert result.exit_code == 3
    (tmp_path / "bad.bin").write_bytes(b"nonsense")
    result = runner.invoke(main, ["validate", "--logits", str(tmp_path / "bad.bin"), "--labels", labels])
    assert result.exit_code == 3
    result = runner.invoke(main, ["validate", "--logits", str(tmp_path / "nope.bin"), "--labels", labels])
    assert result.exit_code == 3


def test_run_writes_csv_and_json(tmp_path):
    runner = CliRunner()
    logits, labels = _synth(runner, tmp_path)
    out = tmp_path / "r.csv"
    result = runner.invoke(main, ["run", "--logits", logits, "--labels", labels, "--alpha", "0.1",
                                  "--score", "lac", "--score", "raps", "--seeds", "3",
                                  "--out", str(out), "--format", "csv"])
    assert result.exit_code == 0, result.output
    rows = dio.read_report_csv(out)
    assert [(r["method"], r["score"]) for r in rows] == [
        ("base", "lac"), ("base", "raps"), ("conf_ot", "lac"), ("conf_ot", "raps")]
    out = tmp_path / "r.json"
    result = runner.invoke(main, ["run", "--logits", logits, "--labels", labels, "--seeds", "2",
                                  "--method", "conf-ot", "--batch-size", "16", "--prior", "uniform",
                                  "--tau", "0.5", "--iters", "5", "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["config"]["transport"] == {"temperature": 0.5, "iterations": 5, "prior": "uniform",
                                             "epsilon_floor": 1e-12, "laplace_smoothing": False}
    assert report["config"]["query_batch_size"] == 16
    assert len(report["rows"]) == 6


def test_run_config_errors_exit_2(tmp_path):
    runner = CliRunner()
    logits, labels = _synth(runner, tmp_path)
    base = ["run", "--logits", logits, "--labels", labels, "--out", str(tmp_path / "r.json")]
    for extra in (["--alpha", "1.5"], ["--cal-ratio", "0"], ["--seeds", "0"], ["--tau", "-1"],
                  ["--score", "bogus"], ["--batch-size", "0"]):
        result = runner.invoke(main, base + extra)
        assert result.exit_code == 2, (extra, result.output)


def test_run_labels_out_of_range_exit_3(tmp_path):
    runner = CliRunner()
    logits, _ = _synth(runner, tmp_path)
    dio.write_labels_csv(tmp_path / "y.csv", np.full(300, 9))
    result = runner.invoke(main, ["run", "--logits", logits, "--labels", str(tmp_path / "y.csv"),
                                  "--out", str(tmp_path / "r.json")])
    assert result.exit_code == 3
